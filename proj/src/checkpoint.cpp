#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "otslim/net.hpp"

namespace otslim {

namespace {

constexpr std::uint32_t kMagic = 0x4f53'4c4d;  // "OSLM"
constexpr std::uint32_t kVersion = 1;

// The format is explicitly little-endian; on a big-endian host the raw
// writes below would produce a different file, so refuse up front.
bool host_is_little_endian() {
  const std::uint32_t probe = 1;
  return *reinterpret_cast<const unsigned char*>(&probe) == 1;
}

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void write_i32(std::ostream& os, std::int32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void write_u8(std::ostream& os, std::uint8_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

std::int32_t read_i32(std::istream& is) {
  std::int32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

std::uint8_t read_u8(std::istream& is) {
  std::uint8_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

// Matrices are stored row-major regardless of Eigen's in-memory layout so
// the file layout is self-describing: rows*cols float64 values, row by row.
void write_matrix(std::ostream& os, const Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      double v = m(i, j);
      os.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
}

Eigen::MatrixXd read_matrix(std::istream& is, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) {
      double v = 0.0;
      is.read(reinterpret_cast<char*>(&v), sizeof v);
      m(i, j) = v;
    }
  return m;
}

void write_affine(std::ostream& os, const Affine& a) {
  write_matrix(os, a.W);
  write_matrix(os, Eigen::MatrixXd(a.b));
}

Affine read_affine(std::istream& is, int in_dim, int out_dim) {
  Affine a;
  a.W = read_matrix(is, in_dim, out_dim);
  a.b = read_matrix(is, 1, out_dim).row(0);
  return a;
}

const char* state_name(BlockState s) {
  switch (s) {
    case BlockState::Active: return "active";
    case BlockState::Identity: return "identity";
    case BlockState::AdapterOnly: return "adapter_only";
  }
  return "?";
}

}  // namespace

void save_checkpoint(const ResidualNet& net, const std::string& path) {
  if (!host_is_little_endian())
    throw std::runtime_error("checkpoint format requires a little-endian host");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open checkpoint file for writing: " + path);

  write_u32(os, kMagic);
  write_u32(os, kVersion);
  write_i32(os, net.input_dim);
  write_i32(os, net.num_classes);
  write_u8(os, net.lift ? 1 : 0);
  write_i32(os, static_cast<std::int32_t>(net.blocks.size()));
  for (const BlockSpec& b : net.blocks) {
    write_i32(os, b.in_dim);
    write_i32(os, b.hidden_dim);
    write_i32(os, b.out_dim);
    write_u8(os, static_cast<std::uint8_t>(b.state));
    write_u8(os, static_cast<std::uint8_t>(b.activation));
    write_u8(os, b.has_skip ? 1 : 0);
    write_u8(os, b.adapter ? 1 : 0);
  }
  if (net.lift) write_affine(os, *net.lift);
  for (const BlockSpec& b : net.blocks) {
    write_affine(os, b.fc1);
    write_affine(os, b.fc2);
  }
  for (const BlockSpec& b : net.blocks)
    if (b.adapter) write_affine(os, *b.adapter);
  write_affine(os, net.head);
  if (!os) throw std::runtime_error("write failed for checkpoint file: " + path);
  os.close();

  // Human-readable mirror of the header next to the binary file.
  std::ofstream man(path + ".manifest.txt", std::ios::trunc);
  if (!man) throw std::runtime_error("cannot write checkpoint manifest for: " + path);
  man << "format_version " << kVersion << "\n";
  man << "input_dim " << net.input_dim << "\n";
  man << "num_classes " << net.num_classes << "\n";
  man << "lift " << (net.lift ? 1 : 0) << "\n";
  man << "blocks " << net.blocks.size() << "\n";
  for (std::size_t k = 0; k < net.blocks.size(); ++k) {
    const BlockSpec& b = net.blocks[k];
    man << "block " << k << " in " << b.in_dim << " hidden " << b.hidden_dim
        << " out " << b.out_dim << " state " << state_name(b.state)
        << " activation " << (b.activation == Activation::Relu ? "relu" : "linear")
        << " skip " << (b.has_skip ? 1 : 0)
        << " adapter " << (b.adapter ? 1 : 0) << "\n";
  }
}

ResidualNet load_checkpoint(const std::string& path) {
  if (!host_is_little_endian())
    throw std::runtime_error("checkpoint format requires a little-endian host");
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint file: " + path);

  if (read_u32(is) != kMagic)
    throw std::runtime_error("not a checkpoint file: " + path);
  const std::uint32_t version = read_u32(is);
  if (version != kVersion) {
    std::ostringstream msg;
    msg << "unsupported checkpoint version " << version << " in " << path;
    throw std::runtime_error(msg.str());
  }

  ResidualNet net;
  net.input_dim = read_i32(is);
  net.num_classes = read_i32(is);
  const bool has_lift = read_u8(is) != 0;
  const std::int32_t n_blocks = read_i32(is);
  if (!is || net.input_dim < 1 || net.num_classes < 2 || n_blocks < 1)
    throw std::runtime_error("corrupt checkpoint header in " + path);

  net.blocks.resize(static_cast<std::size_t>(n_blocks));
  std::vector<bool> has_adapter(static_cast<std::size_t>(n_blocks), false);
  for (std::int32_t k = 0; k < n_blocks; ++k) {
    BlockSpec& b = net.blocks[static_cast<std::size_t>(k)];
    b.in_dim = read_i32(is);
    b.hidden_dim = read_i32(is);
    b.out_dim = read_i32(is);
    const std::uint8_t state = read_u8(is);
    const std::uint8_t act = read_u8(is);
    b.has_skip = read_u8(is) != 0;
    has_adapter[static_cast<std::size_t>(k)] = read_u8(is) != 0;
    if (state > 2 || act > 1 || b.in_dim < 1 || b.hidden_dim < 1 || b.out_dim < 1)
      throw std::runtime_error("corrupt block descriptor in " + path);
    b.state = static_cast<BlockState>(state);
    b.activation = static_cast<Activation>(act);
  }

  const int first_width = net.blocks.front().in_dim;
  if (has_lift) net.lift = read_affine(is, net.input_dim, first_width);
  for (BlockSpec& b : net.blocks) {
    b.fc1 = read_affine(is, b.in_dim, b.hidden_dim);
    b.fc2 = read_affine(is, b.hidden_dim, b.out_dim);
  }
  for (std::int32_t k = 0; k < n_blocks; ++k)
    if (has_adapter[static_cast<std::size_t>(k)]) {
      BlockSpec& b = net.blocks[static_cast<std::size_t>(k)];
      b.adapter = read_affine(is, b.in_dim, b.out_dim);
    }
  net.head = read_affine(is, net.blocks.back().out_dim, net.num_classes);
  if (!is) throw std::runtime_error("checkpoint file truncated: " + path);
  return net;
}

}  // namespace otslim
