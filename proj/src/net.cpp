#include "otslim/net.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

namespace otslim {

namespace {

void check_block_index(const ResidualNet& net, int block) {
  if (block < 0 || block >= static_cast<int>(net.blocks.size()))
    throw std::invalid_argument("block index out of range");
}

Eigen::MatrixXd block_body(const BlockSpec& b, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd h = apply_affine(b.fc1, x);
  if (b.activation == Activation::Relu) h = h.cwiseMax(0.0);
  return apply_affine(b.fc2, h);
}

}  // namespace

Eigen::MatrixXd apply_affine(const Affine& a, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd y = x * a.W;
  y.rowwise() += a.b;
  return y;
}

Eigen::MatrixXd activations_entering(const ResidualNet& net, int block,
                                     const Eigen::MatrixXd& batch) {
  check_block_index(net, block);
  Eigen::MatrixXd h = net.lift ? apply_affine(*net.lift, batch) : batch;
  for (int k = 0; k < block; ++k)
    h = block_transform(net.blocks[static_cast<std::size_t>(k)], h);
  return h;
}

Affine init_affine(int in_dim, int out_dim, Rng& rng) {
  if (in_dim < 1 || out_dim < 1)
    throw std::invalid_argument("affine dimensions must be positive");
  const double a = 1.0 / std::sqrt(static_cast<double>(in_dim));
  Affine out;
  out.W.resize(in_dim, out_dim);
  for (int i = 0; i < in_dim; ++i)
    for (int j = 0; j < out_dim; ++j) out.W(i, j) = a * (2.0 * rng.uniform() - 1.0);
  out.b.resize(out_dim);
  for (int j = 0; j < out_dim; ++j) out.b[j] = a * (2.0 * rng.uniform() - 1.0);
  return out;
}

ResidualNet build_residual_mlp(int input_dim, const std::vector<int>& widths,
                               int num_classes, Rng& rng) {
  if (input_dim < 1) throw std::invalid_argument("input dimension must be positive");
  if (num_classes < 2) throw std::invalid_argument("need at least two classes");
  if (widths.empty()) throw std::invalid_argument("widths must list at least one block");
  for (int w : widths)
    if (w < 1) throw std::invalid_argument("block widths must be positive");

  ResidualNet net;
  net.input_dim = input_dim;
  net.num_classes = num_classes;
  if (input_dim != widths.front())
    net.lift = init_affine(input_dim, widths.front(), rng);

  const int k_blocks = static_cast<int>(widths.size());
  for (int k = 0; k < k_blocks; ++k) {
    BlockSpec b;
    b.in_dim = widths[static_cast<std::size_t>(k)];
    b.out_dim = widths[static_cast<std::size_t>(std::min(k + 1, k_blocks - 1))];
    b.hidden_dim = b.out_dim;
    b.has_skip = (b.in_dim == b.out_dim);
    b.fc1 = init_affine(b.in_dim, b.hidden_dim, rng);
    b.fc2 = init_affine(b.hidden_dim, b.out_dim, rng);
    net.blocks.push_back(std::move(b));
  }
  net.head = init_affine(widths.back(), num_classes, rng);
  return net;
}

Eigen::MatrixXd block_transform(const BlockSpec& block, const Eigen::MatrixXd& x) {
  switch (block.state) {
    case BlockState::Identity:
      return x;
    case BlockState::AdapterOnly:
      if (!block.adapter) throw std::logic_error("adapter-only block without adapter weights");
      return apply_affine(*block.adapter, x);
    case BlockState::Active:
      break;
  }
  Eigen::MatrixXd f = block_body(block, x);
  if (block.has_skip) return x + f;
  return f;
}

Eigen::MatrixXd forward(const ResidualNet& net, const Eigen::MatrixXd& batch) {
  Eigen::MatrixXd h = net.lift ? apply_affine(*net.lift, batch) : batch;
  for (const BlockSpec& b : net.blocks) h = block_transform(b, h);
  return apply_affine(net.head, h);
}

Collected forward_collect(const ResidualNet& net, const Eigen::MatrixXd& batch) {
  Collected out;
  Eigen::MatrixXd h = net.lift ? apply_affine(*net.lift, batch) : batch;
  out.chain_input = h;
  for (int k = 0; k < static_cast<int>(net.blocks.size()); ++k) {
    const BlockSpec& b = net.blocks[static_cast<std::size_t>(k)];
    Eigen::MatrixXd next = block_transform(b, h);
    if (b.eligible()) out.pairs.push_back(BlockPair{k, h, next});
    h = std::move(next);
  }
  out.chain_output = h;
  out.logits = apply_affine(net.head, h);
  return out;
}

void replace_with_identity(ResidualNet& net, int block) {
  check_block_index(net, block);
  BlockSpec& b = net.blocks[static_cast<std::size_t>(block)];
  if (!b.has_skip)
    throw std::invalid_argument("only equal-width residual blocks can be removed");
  if (b.state != BlockState::Active)
    throw std::invalid_argument("block is not active; cannot remove it again");
  b.state = BlockState::Identity;
}

void restore_block(ResidualNet& net, int block) {
  check_block_index(net, block);
  BlockSpec& b = net.blocks[static_cast<std::size_t>(block)];
  if (b.state != BlockState::Identity)
    throw std::invalid_argument("only removed blocks can be restored");
  b.state = BlockState::Active;
}

void attach_adapter(ResidualNet& net, int block, Rng& rng) {
  check_block_index(net, block);
  BlockSpec& b = net.blocks[static_cast<std::size_t>(block)];
  if (b.in_dim == b.out_dim)
    throw std::invalid_argument("adapters are for width-changing blocks");
  if (b.state != BlockState::Active)
    throw std::invalid_argument("adapters attach to active blocks");
  if (b.adapter) throw std::invalid_argument("block already has an adapter");
  b.adapter = init_affine(b.in_dim, b.out_dim, rng);
}

void commit_adapter(ResidualNet& net, int block) {
  check_block_index(net, block);
  BlockSpec& b = net.blocks[static_cast<std::size_t>(block)];
  if (!b.adapter) throw std::invalid_argument("no adapter attached to this block");
  if (b.state != BlockState::Active)
    throw std::invalid_argument("only active blocks can be committed to adapter-only");
  b.state = BlockState::AdapterOnly;
}

int critical_path_length(const ResidualNet& net) {
  int n = net.lift ? 1 : 0;
  for (const BlockSpec& b : net.blocks) {
    if (b.state == BlockState::Active) n += 2;
    else if (b.state == BlockState::AdapterOnly) n += 1;
  }
  return n + 1;  // head
}

long long macs(const ResidualNet& net) {
  auto affine_macs = [](const Affine& a) {
    return static_cast<long long>(a.W.rows()) * static_cast<long long>(a.W.cols());
  };
  long long n = net.lift ? affine_macs(*net.lift) : 0;
  for (const BlockSpec& b : net.blocks) {
    if (b.state == BlockState::Active)
      n += static_cast<long long>(b.in_dim) * b.hidden_dim +
           static_cast<long long>(b.hidden_dim) * b.out_dim;
    else if (b.state == BlockState::AdapterOnly)
      n += static_cast<long long>(b.in_dim) * b.out_dim;
  }
  return n + affine_macs(net.head);
}

double accuracy(const ResidualNet& net, const Eigen::MatrixXd& X,
                const std::vector<int>& y) {
  if (X.rows() != static_cast<Eigen::Index>(y.size()))
    throw std::invalid_argument("accuracy: one label per row required");
  if (X.rows() == 0) throw std::invalid_argument("accuracy: empty batch");
  Eigen::MatrixXd logits = forward(net, X);
  int correct = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index arg = 0;
    logits.row(i).maxCoeff(&arg);
    if (static_cast<int>(arg) == y[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

namespace {

double lipschitz_over_pairs(const std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>& f,
                            const Eigen::MatrixXd& probe, int pair_budget) {
  const int n = static_cast<int>(probe.rows());
  if (n < 2) throw std::invalid_argument("lipschitz estimate needs at least two probes");
  if (pair_budget < 1) throw std::invalid_argument("pair budget must be positive");
  Eigen::MatrixXd out = f(probe);

  double best = -1.0;
  auto consider = [&](int i, int j) {
    double dx = (probe.row(i) - probe.row(j)).norm();
    if (dx == 0.0) return;
    best = std::max(best, (out.row(i) - out.row(j)).norm() / dx);
  };

  const long long all_pairs = static_cast<long long>(n) * (n - 1) / 2;
  if (all_pairs <= pair_budget) {
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) consider(i, j);
  } else {
    Rng rng(0x9b1f0d2d);  // fixed seed: the estimate is deterministic
    for (int k = 0; k < pair_budget; ++k) {
      int i = rng.uniform_int(n);
      int j = rng.uniform_int(n - 1);
      if (j >= i) ++j;
      consider(i, j);
    }
  }
  if (best < 0.0)
    throw std::invalid_argument("lipschitz estimate: all probe points coincide");
  return best;
}

}  // namespace

double lipschitz_estimate(const ResidualNet& net, const Eigen::MatrixXd& probe,
                          int pair_budget) {
  return lipschitz_over_pairs(
      [&net](const Eigen::MatrixXd& x) { return forward(net, x); }, probe, pair_budget);
}

double lipschitz_estimate_block(const BlockSpec& block, const Eigen::MatrixXd& probe,
                                int pair_budget) {
  return lipschitz_over_pairs(
      [&block](const Eigen::MatrixXd& x) { return block_transform(block, x); }, probe,
      pair_budget);
}

}  // namespace otslim
