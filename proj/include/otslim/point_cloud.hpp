#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>

namespace otslim {

// Empirical distribution: one sample per row, uniform weight 1/N.
struct PointCloud {
  Eigen::MatrixXd samples;

  PointCloud() = default;
  explicit PointCloud(Eigen::MatrixXd m) : samples(std::move(m)) {
    if (samples.rows() < 1 || samples.cols() < 1)
      throw std::invalid_argument("point cloud must have at least one sample and one dimension");
    if (!samples.allFinite())
      throw std::invalid_argument("point cloud entries must be finite");
  }

  Eigen::Index size() const { return samples.rows(); }
  Eigen::Index dim() const { return samples.cols(); }
};

// Unit vector used to project a cloud onto a line.
struct Direction {
  Eigen::VectorXd v;

  Direction() = default;
  explicit Direction(Eigen::VectorXd u) : v(std::move(u)) {
    if (v.size() < 1) throw std::invalid_argument("direction must be non-empty");
    if (std::abs(v.norm() - 1.0) > 1e-9)
      throw std::invalid_argument("direction must have unit norm (within 1e-9)");
  }

  Eigen::Index dim() const { return v.size(); }
};

// How the maximizing direction is searched for.
enum class MaxMode { RandomSearch, ProjectedAscent };

// Seeded: every evaluation draws projections from a fresh generator with
// this seed, so the direction set is fixed for the whole run. Unseeded:
// directions come from the caller's stream and change between evaluations.
struct SeedMode {
  bool seeded = false;
  std::uint64_t seed = 0;

  static SeedMode Seeded(std::uint64_t s) { return SeedMode{true, s}; }
  static SeedMode Unseeded() { return SeedMode{}; }
};

struct DistanceConfig {
  double p = 2.0;
  int n_proj = 40;
  MaxMode max_mode = MaxMode::RandomSearch;
  SeedMode seed_mode = SeedMode::Unseeded();

  void validate() const {
    if (!(p > 0.0)) throw std::invalid_argument("distance order p must be positive");
    if (n_proj < 1) throw std::invalid_argument("n_proj must be at least 1");
  }
};

}  // namespace otslim
