#include "otslim/datasets.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "otslim/rng.hpp"

namespace otslim {

void DatasetSpec::validate() const {
  if (kind != DatasetKind::CsvFile) {
    if (n_samples < 3) throw std::invalid_argument("dataset needs at least 3 samples");
    if (n_classes < 2) throw std::invalid_argument("dataset needs at least 2 classes");
    if (input_dim < 1) throw std::invalid_argument("input_dim must be positive");
    if (noise < 0.0) throw std::invalid_argument("noise must be non-negative");
  } else if (csv_path.empty()) {
    throw std::invalid_argument("csv datasets need a csv_path");
  }
  double total = 0.0;
  for (double f : split) {
    if (!(f > 0.0)) throw std::invalid_argument("split fractions must be positive");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("split fractions must sum to 1");
  if (kind == DatasetKind::Rings || kind == DatasetKind::Xor) {
    if (input_dim != 2)
      throw std::invalid_argument("rings and xor are planar datasets (input_dim 2)");
    if (n_classes != 2)
      throw std::invalid_argument("rings and xor are two-class datasets");
  }
}

namespace {

struct Raw {
  Eigen::MatrixXd X;
  std::vector<int> y;
};

// Class centers spread on a circle of radius 3 in the first two coordinates
// (on a line when input_dim is 1); noise-scaled Gaussian jitter on every
// coordinate.
Raw make_blobs(const DatasetSpec& spec, Rng& rng) {
  Raw raw;
  raw.X.resize(spec.n_samples, spec.input_dim);
  raw.y.resize(static_cast<std::size_t>(spec.n_samples));
  for (int i = 0; i < spec.n_samples; ++i) {
    const int c = i % spec.n_classes;
    const double angle = 2.0 * M_PI * c / spec.n_classes;
    for (int j = 0; j < spec.input_dim; ++j) {
      double center = 0.0;
      if (j == 0) center = 3.0 * std::cos(angle);
      if (j == 1) center = 3.0 * std::sin(angle);
      raw.X(i, j) = center + spec.noise * rng.gaussian();
    }
    raw.y[static_cast<std::size_t>(i)] = c;
  }
  return raw;
}

// Two concentric annuli at radii 1 (class 0) and 2 (class 1): no straight
// line separates them, so the classifier needs genuine depth.
Raw make_rings(const DatasetSpec& spec, Rng& rng) {
  Raw raw;
  raw.X.resize(spec.n_samples, 2);
  raw.y.resize(static_cast<std::size_t>(spec.n_samples));
  for (int i = 0; i < spec.n_samples; ++i) {
    const int c = i % 2;
    const double angle = 2.0 * M_PI * rng.uniform();
    const double radius = (c == 0 ? 1.0 : 2.0) + spec.noise * rng.gaussian();
    raw.X(i, 0) = radius * std::cos(angle);
    raw.X(i, 1) = radius * std::sin(angle);
    raw.y[static_cast<std::size_t>(i)] = c;
  }
  return raw;
}

// Quadrant parity on [-1, 1]^2: label = sign(x) XOR sign(y), with the
// coordinates jittered after labeling.
Raw make_xor(const DatasetSpec& spec, Rng& rng) {
  Raw raw;
  raw.X.resize(spec.n_samples, 2);
  raw.y.resize(static_cast<std::size_t>(spec.n_samples));
  for (int i = 0; i < spec.n_samples; ++i) {
    const double a = 2.0 * rng.uniform() - 1.0;
    const double b = 2.0 * rng.uniform() - 1.0;
    raw.y[static_cast<std::size_t>(i)] = (a > 0.0) != (b > 0.0) ? 1 : 0;
    raw.X(i, 0) = a + spec.noise * rng.gaussian();
    raw.X(i, 1) = b + spec.noise * rng.gaussian();
  }
  return raw;
}

[[noreturn]] void csv_error(const std::string& path, int row, const std::string& what) {
  std::ostringstream msg;
  msg << path << ": row " << row << ": " << what;
  throw std::runtime_error(msg.str());
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto first = cell.find_first_not_of(" \t\r");
    const auto last = cell.find_last_not_of(" \t\r");
    cells.push_back(first == std::string::npos ? std::string()
                                               : cell.substr(first, last - first + 1));
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

// Header row mandatory; the "label" column carries non-negative integer
// classes and every other column is a numeric feature, kept in header order.
Raw read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open file");

  std::string line;
  if (!std::getline(in, line)) csv_error(path, 1, "missing header row");
  const std::vector<std::string> header = split_line(line);
  int label_col = -1;
  for (std::size_t j = 0; j < header.size(); ++j)
    if (header[j] == "label") label_col = static_cast<int>(j);
  if (label_col < 0) csv_error(path, 1, "no column named 'label'");
  const int n_features = static_cast<int>(header.size()) - 1;
  if (n_features < 1) csv_error(path, 1, "no feature columns besides 'label'");

  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  int row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> cells = split_line(line);
    if (static_cast<int>(cells.size()) != static_cast<int>(header.size()))
      csv_error(path, row_no, "expected " + std::to_string(header.size()) +
                                  " cells, found " + std::to_string(cells.size()));
    std::vector<double> features;
    features.reserve(static_cast<std::size_t>(n_features));
    for (std::size_t j = 0; j < cells.size(); ++j) {
      std::size_t used = 0;
      double value = 0.0;
      bool ok = true;
      try {
        value = std::stod(cells[j], &used);
      } catch (const std::exception&) {
        ok = false;
      }
      if (!ok || used != cells[j].size())
        csv_error(path, row_no,
                  "column '" + header[j] + "': not a number: '" + cells[j] + "'");
      if (static_cast<int>(j) == label_col) {
        const int label = static_cast<int>(std::llround(value));
        if (label < 0 || static_cast<double>(label) != value)
          csv_error(path, row_no,
                    "column 'label': expected a non-negative integer, got '" +
                        cells[j] + "'");
        labels.push_back(label);
      } else {
        features.push_back(value);
      }
    }
    rows.push_back(std::move(features));
  }
  if (rows.size() < 3) csv_error(path, row_no, "fewer than 3 data rows");

  Raw raw;
  raw.X.resize(static_cast<Eigen::Index>(rows.size()), n_features);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (int j = 0; j < n_features; ++j)
      raw.X(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
  raw.y = std::move(labels);
  return raw;
}

}  // namespace

Dataset generate_dataset(const DatasetSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);

  Raw raw;
  switch (spec.kind) {
    case DatasetKind::Blobs:
      raw = make_blobs(spec, rng);
      break;
    case DatasetKind::Rings:
      raw = make_rings(spec, rng);
      break;
    case DatasetKind::Xor:
      raw = make_xor(spec, rng);
      break;
    case DatasetKind::CsvFile:
      raw = read_csv(spec.csv_path);
      break;
  }

  const int n = static_cast<int>(raw.X.rows());
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  rng.shuffle(perm);

  const int n_train = static_cast<int>(std::llround(spec.split[0] * n));
  const int n_val = static_cast<int>(std::llround(spec.split[1] * n));
  const int n_test = n - n_train - n_val;
  if (n_train < 1 || n_val < 1 || n_test < 1)
    throw std::invalid_argument("split leaves an empty part at this sample count");

  Dataset out;
  auto take = [&](int start, int count, Eigen::MatrixXd& X, std::vector<int>& y) {
    X.resize(count, raw.X.cols());
    y.resize(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
      const int src = perm[static_cast<std::size_t>(start + i)];
      X.row(i) = raw.X.row(src);
      y[static_cast<std::size_t>(i)] = raw.y[static_cast<std::size_t>(src)];
    }
  };
  take(0, n_train, out.X_train, out.y_train);
  take(n_train, n_val, out.X_val, out.y_val);
  take(n_train + n_val, n_test, out.X_test, out.y_test);

  if (spec.kind == DatasetKind::CsvFile) {
    int max_label = 0;
    for (int label : raw.y) max_label = std::max(max_label, label);
    out.n_classes = max_label + 1;
  } else {
    out.n_classes = spec.n_classes;
  }
  return out;
}

}  // namespace otslim
