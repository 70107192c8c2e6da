#pragma once

#include <optional>
#include <span>
#include <vector>

#include "otslim/point_cloud.hpp"
#include "otslim/rng.hpp"

namespace otslim {

// Draws n unit directions in R^d: standard Gaussian vectors normalized to
// unit length (uniform on the sphere). Zero-norm draws are redrawn. Nested
// by construction: the first k directions of a longer draw from the same
// stream equal a shorter draw of k.
std::vector<Direction> sample_unit_directions(int d, int n, Rng& rng);

// One-dimensional image of a cloud under a direction, sorted ascending.
// order[i] is the row index of the i-th smallest projection; ties keep the
// original row order.
struct Projection {
  Eigen::VectorXd values;
  std::vector<int> order;
};
Projection project(const PointCloud& cloud, const Direction& dir);

// (1/N) * sum |xs_i - ys_i|^p over already-sorted, equal-length samples.
// This is the p-th power of the 1-D p-Wasserstein distance.
double pairing_cost(const Eigen::VectorXd& xs, const Eigen::VectorXd& ys, double p);

// Closed-form 1-D p-Wasserstein distance between equal-size empirical
// distributions given as sorted sample vectors. Unsorted input is an error.
double wasserstein_1d(const Eigen::VectorXd& xs, const Eigen::VectorXd& ys, double p);

// Sliced distance over an explicit direction set:
// ((1/n) * sum_theta W_p(theta#mu, theta#nu)^p)^(1/p).
double sliced_wasserstein_along(const PointCloud& mu, const PointCloud& nu,
                                std::span<const Direction> dirs, double p);

// Same, drawing cfg.n_proj directions per cfg.seed_mode (see SeedMode).
double sliced_wasserstein(const PointCloud& mu, const PointCloud& nu,
                          const DistanceConfig& cfg, Rng& rng);

struct MaxSlicedResult {
  double value = 0.0;
  Direction direction;
};

// Max over an explicit direction set, with the attaining direction.
MaxSlicedResult max_sliced_along(const PointCloud& mu, const PointCloud& nu,
                                 std::span<const Direction> dirs, double p);

// Max-sliced distance. RandomSearch maximizes over cfg.n_proj sampled
// directions; ProjectedAscent runs gradient ascent on the direction with
// renormalization after each step and returns the best visited value.
// Both are lower bounds of the true maximum over the sphere.
MaxSlicedResult max_sliced_wasserstein(const PointCloud& mu, const PointCloud& nu,
                                       const DistanceConfig& cfg, Rng& rng);

// Exact p-Wasserstein between equal-size clouds by enumerating all N!
// pairings with ground cost |x - y|_p^p. Supported only for N <= 8; larger
// inputs are an error (an assignment solver is deliberately out of scope).
double exact_wasserstein_small(const PointCloud& mu, const PointCloud& nu, double p);

// Gaussian-kernel maximum mean discrepancy, biased V-statistic, returned as
// sqrt(MMD^2) with negative rounding clamped to zero. bandwidth is the
// kernel sigma; std::nullopt selects the median heuristic (median pairwise
// distance over the pooled samples). Sample counts may differ.
double mmd_rbf(const PointCloud& mu, const PointCloud& nu,
               std::optional<double> bandwidth = std::nullopt);

// The median-heuristic kernel sigma used by mmd_rbf when no bandwidth is
// given: median pairwise distance over the pooled samples (1.0 when all
// points coincide). Exposed so callers can freeze the value before
// differentiating through the kernel.
double mmd_median_bandwidth(const PointCloud& mu, const PointCloud& nu);

// KL divergence KL(fit(mu) || fit(nu)) between diagonal Gaussian fits.
// Variances are population (1/N) estimates floored at 1e-8; both clouds
// need at least two samples.
double kl_diag_gaussian(const PointCloud& mu, const PointCloud& nu);

// Mean row-paired l_p distance (p = 1 or 2): (1/N) * sum_i |mu_i - nu_i|_p.
double mean_lp(const PointCloud& mu, const PointCloud& nu, int p);

}  // namespace otslim
