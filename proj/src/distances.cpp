#include "otslim/distances.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace otslim {
namespace {

// |u|^p with the common orders special-cased to avoid std::pow.
inline double abs_pow(double u, double p) {
  double a = std::abs(u);
  if (p == 2.0) return a * a;
  if (p == 1.0) return a;
  return std::pow(a, p);
}

inline double root_p(double s, double p) {
  if (p == 2.0) return std::sqrt(s);
  if (p == 1.0) return s;
  return std::pow(s, 1.0 / p);
}

void check_same_shape(const PointCloud& mu, const PointCloud& nu) {
  if (mu.dim() != nu.dim())
    throw std::invalid_argument("clouds must share the same dimension");
}

void check_same_size(const PointCloud& mu, const PointCloud& nu) {
  if (mu.size() != nu.size())
    throw std::invalid_argument("clouds must have the same number of samples");
}

// Directions drawn per cfg.seed_mode: a fresh generator under a fixed seed,
// or the caller's stream.
std::vector<Direction> directions_for(const DistanceConfig& cfg, int d, Rng& rng) {
  if (cfg.seed_mode.seeded) {
    Rng own(cfg.seed_mode.seed);
    return sample_unit_directions(d, cfg.n_proj, own);
  }
  return sample_unit_directions(d, cfg.n_proj, rng);
}

}  // namespace

std::vector<Direction> sample_unit_directions(int d, int n, Rng& rng) {
  if (d < 1) throw std::invalid_argument("direction dimension must be positive");
  if (n < 1) throw std::invalid_argument("direction count must be positive");
  std::vector<Direction> dirs;
  dirs.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    Eigen::VectorXd v(d);
    do {
      for (int j = 0; j < d; ++j) v[j] = rng.gaussian();
    } while (v.norm() == 0.0);
    dirs.emplace_back(v / v.norm());
  }
  return dirs;
}

Projection project(const PointCloud& cloud, const Direction& dir) {
  if (cloud.dim() != dir.dim())
    throw std::invalid_argument("direction dimension does not match cloud dimension");
  Eigen::VectorXd raw = cloud.samples * dir.v;
  const int n = static_cast<int>(raw.size());
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&raw](int a, int b) { return raw[a] < raw[b]; });
  Projection out;
  out.values.resize(n);
  for (int i = 0; i < n; ++i) out.values[i] = raw[order[static_cast<std::size_t>(i)]];
  out.order = std::move(order);
  return out;
}

double pairing_cost(const Eigen::VectorXd& xs, const Eigen::VectorXd& ys, double p) {
  if (xs.size() != ys.size())
    throw std::invalid_argument("sample vectors must have equal length");
  if (xs.size() == 0) throw std::invalid_argument("sample vectors must be non-empty");
  double s = 0.0;
  for (Eigen::Index i = 0; i < xs.size(); ++i) s += abs_pow(xs[i] - ys[i], p);
  return s / static_cast<double>(xs.size());
}

double wasserstein_1d(const Eigen::VectorXd& xs, const Eigen::VectorXd& ys, double p) {
  auto sorted = [](const Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i + 1 < v.size(); ++i)
      if (v[i] > v[i + 1]) return false;
    return true;
  };
  if (!sorted(xs) || !sorted(ys))
    throw std::invalid_argument("wasserstein_1d expects sorted samples");
  return root_p(pairing_cost(xs, ys, p), p);
}

double sliced_wasserstein_along(const PointCloud& mu, const PointCloud& nu,
                                std::span<const Direction> dirs, double p) {
  check_same_shape(mu, nu);
  check_same_size(mu, nu);
  if (dirs.empty()) throw std::invalid_argument("direction set must be non-empty");
  double acc = 0.0;
  for (const Direction& d : dirs)
    acc += pairing_cost(project(mu, d).values, project(nu, d).values, p);
  return root_p(acc / static_cast<double>(dirs.size()), p);
}

double sliced_wasserstein(const PointCloud& mu, const PointCloud& nu,
                          const DistanceConfig& cfg, Rng& rng) {
  cfg.validate();
  auto dirs = directions_for(cfg, static_cast<int>(mu.dim()), rng);
  return sliced_wasserstein_along(mu, nu, dirs, cfg.p);
}

MaxSlicedResult max_sliced_along(const PointCloud& mu, const PointCloud& nu,
                                 std::span<const Direction> dirs, double p) {
  check_same_shape(mu, nu);
  check_same_size(mu, nu);
  if (dirs.empty()) throw std::invalid_argument("direction set must be non-empty");
  double best = -1.0;
  const Direction* arg = nullptr;
  for (const Direction& d : dirs) {
    double c = pairing_cost(project(mu, d).values, project(nu, d).values, p);
    if (c > best) {
      best = c;
      arg = &d;
    }
  }
  return MaxSlicedResult{root_p(best, p), *arg};
}

namespace {

// Fixed ascent schedule; the search is a lower bound however long it runs.
constexpr int kAscentIterations = 50;
constexpr double kAscentStep = 0.1;

// Subgradient of W_p(theta) at the current sorted pairing:
//   dW/dtheta = S^(1/p - 1) / N * sum_i |u_i|^(p-1) sign(u_i) (x_(i) - y_(i))
// where u_i are the sorted projection differences and S = W^p. Zero when the
// distance vanishes.
Eigen::VectorXd ascent_gradient(const PointCloud& mu, const PointCloud& nu,
                                const Direction& dir, double p, double* value) {
  Projection pm = project(mu, dir);
  Projection pn = project(nu, dir);
  const Eigen::Index n = pm.values.size();
  double s = pairing_cost(pm.values, pn.values, p);
  *value = root_p(s, p);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(dir.dim());
  if (s <= 0.0) return g;
  double scale = (p == 2.0) ? 1.0 / std::sqrt(s) : std::pow(s, 1.0 / p - 1.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    double u = pm.values[i] - pn.values[i];
    if (u == 0.0) continue;
    double w = (p == 2.0) ? u : abs_pow(u, p - 1.0) * (u > 0.0 ? 1.0 : -1.0);
    g += w * (mu.samples.row(pm.order[static_cast<std::size_t>(i)]) -
              nu.samples.row(pn.order[static_cast<std::size_t>(i)]))
                 .transpose();
  }
  return g * (scale / static_cast<double>(n));
}

MaxSlicedResult max_sliced_ascend(const PointCloud& mu, const PointCloud& nu,
                                  double p, Rng& rng) {
  Direction theta = sample_unit_directions(static_cast<int>(mu.dim()), 1, rng)[0];
  MaxSlicedResult best{-1.0, theta};
  for (int it = 0; it < kAscentIterations; ++it) {
    double value = 0.0;
    Eigen::VectorXd g = ascent_gradient(mu, nu, theta, p, &value);
    if (value > best.value) best = MaxSlicedResult{value, theta};
    Eigen::VectorXd next = theta.v + kAscentStep * g;
    double norm = next.norm();
    if (norm == 0.0) break;  // stalled at a vanishing-distance direction
    theta = Direction(next / norm);
  }
  double value = 0.0;
  ascent_gradient(mu, nu, theta, p, &value);
  if (value > best.value) best = MaxSlicedResult{value, theta};
  return best;
}

}  // namespace

MaxSlicedResult max_sliced_wasserstein(const PointCloud& mu, const PointCloud& nu,
                                       const DistanceConfig& cfg, Rng& rng) {
  cfg.validate();
  check_same_shape(mu, nu);
  check_same_size(mu, nu);
  if (cfg.max_mode == MaxMode::RandomSearch) {
    auto dirs = directions_for(cfg, static_cast<int>(mu.dim()), rng);
    return max_sliced_along(mu, nu, dirs, cfg.p);
  }
  if (cfg.seed_mode.seeded) {
    Rng own(cfg.seed_mode.seed);
    return max_sliced_ascend(mu, nu, cfg.p, own);
  }
  return max_sliced_ascend(mu, nu, cfg.p, rng);
}

double exact_wasserstein_small(const PointCloud& mu, const PointCloud& nu, double p) {
  check_same_shape(mu, nu);
  check_same_size(mu, nu);
  const int n = static_cast<int>(mu.size());
  if (n > 8)
    throw std::invalid_argument(
        "exact_wasserstein_small enumerates all pairings and supports at most "
        "8 samples; use a sliced distance for larger clouds");
  // Pairwise ground costs |x - y|_p^p.
  Eigen::MatrixXd cost(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double c = 0.0;
      for (Eigen::Index k = 0; k < mu.dim(); ++k)
        c += abs_pow(mu.samples(i, k) - nu.samples(j, k), p);
      cost(i, j) = c;
    }
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += cost(i, perm[static_cast<std::size_t>(i)]);
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return root_p(best / static_cast<double>(n), p);
}

double mmd_median_bandwidth(const PointCloud& mu, const PointCloud& nu) {
  check_same_shape(mu, nu);
  const Eigen::Index nm = mu.size();
  const Eigen::Index nn = nu.size();
  Eigen::MatrixXd pooled(nm + nn, mu.dim());
  pooled << mu.samples, nu.samples;
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>((nm + nn) * (nm + nn - 1) / 2));
  for (Eigen::Index i = 0; i < pooled.rows(); ++i)
    for (Eigen::Index j = i + 1; j < pooled.rows(); ++j)
      dists.push_back((pooled.row(i) - pooled.row(j)).norm());
  if (dists.empty()) return 1.0;  // single pooled point
  auto mid = dists.begin() + static_cast<std::ptrdiff_t>((dists.size() - 1) / 2);
  std::nth_element(dists.begin(), mid, dists.end());
  double sigma = *mid;
  return sigma > 0.0 ? sigma : 1.0;  // all points coincide; any bandwidth works
}

double mmd_rbf(const PointCloud& mu, const PointCloud& nu,
               std::optional<double> bandwidth) {
  check_same_shape(mu, nu);
  if (bandwidth && !(*bandwidth > 0.0))
    throw std::invalid_argument("MMD bandwidth must be positive");
  const double sigma = bandwidth ? *bandwidth : mmd_median_bandwidth(mu, nu);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  auto mean_kernel = [inv](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      for (Eigen::Index j = 0; j < b.rows(); ++j)
        s += std::exp(-(a.row(i) - b.row(j)).squaredNorm() * inv);
    return s / static_cast<double>(a.rows() * b.rows());
  };
  double mmd2 = mean_kernel(mu.samples, mu.samples) +
                mean_kernel(nu.samples, nu.samples) -
                2.0 * mean_kernel(mu.samples, nu.samples);
  return std::sqrt(std::max(mmd2, 0.0));
}

double kl_diag_gaussian(const PointCloud& mu, const PointCloud& nu) {
  check_same_shape(mu, nu);
  if (mu.size() < 2 || nu.size() < 2)
    throw std::invalid_argument("diagonal Gaussian fit needs at least two samples per cloud");
  constexpr double kVarFloor = 1e-8;
  Eigen::RowVectorXd m1 = mu.samples.colwise().mean();
  Eigen::RowVectorXd m2 = nu.samples.colwise().mean();
  Eigen::RowVectorXd v1 =
      (mu.samples.rowwise() - m1).array().square().colwise().mean().max(kVarFloor).matrix();
  Eigen::RowVectorXd v2 =
      (nu.samples.rowwise() - m2).array().square().colwise().mean().max(kVarFloor).matrix();
  double kl = 0.0;
  for (Eigen::Index j = 0; j < mu.dim(); ++j) {
    double dm = m1[j] - m2[j];
    kl += 0.5 * std::log(v2[j] / v1[j]) + (v1[j] + dm * dm) / (2.0 * v2[j]) - 0.5;
  }
  return kl;
}

double mean_lp(const PointCloud& mu, const PointCloud& nu, int p) {
  check_same_shape(mu, nu);
  check_same_size(mu, nu);
  if (p != 1 && p != 2) throw std::invalid_argument("mean_lp supports p = 1 or p = 2");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    Eigen::RowVectorXd d = mu.samples.row(i) - nu.samples.row(i);
    acc += (p == 1) ? d.cwiseAbs().sum() : d.norm();
  }
  return acc / static_cast<double>(mu.size());
}

}  // namespace otslim
