#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace otslim {

enum class DatasetKind { Blobs, Rings, Xor, CsvFile };

// A synthetic dataset recipe (or a CSV source) plus its split. Generation is
// a pure function of the spec: the same spec always yields identical bytes.
struct DatasetSpec {
  DatasetKind kind = DatasetKind::Rings;
  int n_samples = 2000;
  int n_classes = 2;
  int input_dim = 2;
  double noise = 0.05;
  std::array<double, 3> split{0.6, 0.2, 0.2};  // train, val, test fractions
  std::uint64_t seed = 0;
  std::string csv_path;  // CsvFile only

  // Rejects non-positive sizes, negative noise, fractions that are not
  // positive or do not sum to 1 within 1e-9, and kind-specific shape
  // constraints (Rings and Xor are two-class planar sets).
  void validate() const;
};

struct Dataset {
  Eigen::MatrixXd X_train, X_val, X_test;
  std::vector<int> y_train, y_val, y_test;
  int n_classes = 0;  // spec value, or max label + 1 for CSV sources

  int input_dim() const { return static_cast<int>(X_train.cols()); }
};

// Builds the dataset: samples (or reads) the points, shuffles them with the
// spec seed, and slices the split. Split sizes are round(n * fraction) for
// train and val with the remainder as test; each part must keep at least one
// row. CSV files need a header row with a "label" column; parse errors name
// the row and column.
Dataset generate_dataset(const DatasetSpec& spec);

}  // namespace otslim
