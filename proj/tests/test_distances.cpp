#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "otslim/distances.hpp"

using namespace otslim;

namespace {

PointCloud random_cloud(int n, int d, Rng& rng, double scale = 1.0) {
  Eigen::MatrixXd m(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = scale * rng.gaussian();
  return PointCloud(m);
}

PointCloud cloud_from(std::initializer_list<std::initializer_list<double>> rows) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return PointCloud(m);
}

// Independent oracle: exact Wasserstein by depth-first search over all
// pairings, written without std::next_permutation so the library's
// enumeration is cross-checked by a second route.
double dfs_best(const Eigen::MatrixXd& cost, std::vector<bool>& used, int row, double acc) {
  const int n = static_cast<int>(cost.rows());
  if (row == n) return acc;
  double best = std::numeric_limits<double>::infinity();
  for (int j = 0; j < n; ++j) {
    if (used[static_cast<std::size_t>(j)]) continue;
    used[static_cast<std::size_t>(j)] = true;
    best = std::min(best, dfs_best(cost, used, row + 1, acc + cost(row, j)));
    used[static_cast<std::size_t>(j)] = false;
  }
  return best;
}

double exact_oracle(const PointCloud& mu, const PointCloud& nu, double p) {
  const int n = static_cast<int>(mu.size());
  Eigen::MatrixXd cost(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double c = 0.0;
      for (Eigen::Index k = 0; k < mu.dim(); ++k)
        c += std::pow(std::abs(mu.samples(i, k) - nu.samples(j, k)), p);
      cost(i, j) = c;
    }
  std::vector<bool> used(static_cast<std::size_t>(n), false);
  double total = dfs_best(cost, used, 0, 0.0);
  return std::pow(total / n, 1.0 / p);
}

Eigen::VectorXd sorted_vec(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

TEST_CASE("unit directions are unit norm and nested across draws") {
  Rng rng(7);
  auto dirs = sample_unit_directions(5, 64, rng);
  REQUIRE(dirs.size() == 64);
  for (const auto& d : dirs) CHECK(std::abs(d.v.norm() - 1.0) <= 1e-9);

  // Same stream, shorter draw: must be a prefix of the longer draw.
  Rng a(123), b(123);
  auto short_set = sample_unit_directions(3, 4, a);
  auto long_set = sample_unit_directions(3, 9, b);
  for (int k = 0; k < 4; ++k)
    CHECK(short_set[static_cast<std::size_t>(k)].v ==
          long_set[static_cast<std::size_t>(k)].v);
}

TEST_CASE("directions in 1-D are signs and high-dim means concentrate") {
  Rng rng(11);
  for (const auto& d : sample_unit_directions(1, 20, rng))
    CHECK(std::abs(std::abs(d.v[0]) - 1.0) <= 1e-12);

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(2);
  auto dirs = sample_unit_directions(2, 10000, rng);
  for (const auto& d : dirs) mean += d.v;
  mean /= 10000.0;
  CHECK(mean.norm() < 0.05);
}

TEST_CASE("project sorts values and reports the sorting permutation") {
  PointCloud cloud = cloud_from({{1.0, 0.0}, {0.0, 1.0}});
  Projection pr = project(cloud, Direction(Eigen::Vector2d(1.0, 0.0)));
  CHECK(pr.values[0] == doctest::Approx(0.0));
  CHECK(pr.values[1] == doctest::Approx(1.0));
  CHECK(pr.order == std::vector<int>{1, 0});

  PointCloud single = cloud_from({{3.0, 4.0}});
  Eigen::Vector2d u(0.6, 0.8);
  CHECK(project(single, Direction(u)).values[0] == doctest::Approx(5.0));

  CHECK_THROWS_AS(project(single, Direction(Eigen::Vector3d(1, 0, 0).normalized())),
                  std::invalid_argument);
}

TEST_CASE("projection under a flipped direction negates and reverses") {
  Rng rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    PointCloud cloud = random_cloud(6, 3, rng);
    Direction d = sample_unit_directions(3, 1, rng)[0];
    Direction neg(Eigen::VectorXd(-d.v));
    Projection a = project(cloud, d);
    Projection b = project(cloud, neg);
    for (int i = 0; i < 6; ++i)
      CHECK(a.values[i] == doctest::Approx(-b.values[5 - i]).epsilon(1e-12));
  }
}

TEST_CASE("wasserstein_1d closed form") {
  Eigen::VectorXd xs = sorted_vec({0.0, 1.0, 2.0});
  CHECK(wasserstein_1d(xs, xs, 2.0) == 0.0);

  Eigen::VectorXd ys = sorted_vec({2.0, 3.0, 4.0});  // translation by 2
  CHECK(wasserstein_1d(xs, ys, 2.0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(wasserstein_1d(xs, ys, 1.0) == doctest::Approx(2.0).epsilon(1e-12));

  Eigen::VectorXd bad(3);
  bad << 1.0, 0.0, 2.0;
  CHECK_THROWS_AS(wasserstein_1d(bad, ys, 2.0), std::invalid_argument);
  Eigen::VectorXd shorter = sorted_vec({0.0, 1.0});
  CHECK_THROWS_AS(wasserstein_1d(xs, shorter, 2.0), std::invalid_argument);
}

TEST_CASE("sorted pairing equals the minimum over all 1-D pairings") {
  Rng rng(17);
  for (double p : {1.0, 2.0}) {
    for (int rep = 0; rep < 40; ++rep) {
      PointCloud mu = random_cloud(6, 1, rng);
      PointCloud nu = random_cloud(6, 1, rng);
      Eigen::VectorXd xs = project(mu, Direction(Eigen::VectorXd::Ones(1))).values;
      Eigen::VectorXd ys = project(nu, Direction(Eigen::VectorXd::Ones(1))).values;
      CHECK(wasserstein_1d(xs, ys, p) ==
            doctest::Approx(exact_oracle(mu, nu, p)).epsilon(1e-9));
    }
  }
}

TEST_CASE("exact enumeration agrees with an independent search") {
  Rng rng(29);
  for (int rep = 0; rep < 25; ++rep) {
    PointCloud mu = random_cloud(5, 2, rng);
    PointCloud nu = random_cloud(5, 2, rng);
    CHECK(exact_wasserstein_small(mu, nu, 2.0) ==
          doctest::Approx(exact_oracle(mu, nu, 2.0)).epsilon(1e-12));
  }

  // Hand-checkable: two unit vertical moves, mean cost 1, root 1.
  PointCloud a = cloud_from({{0.0, 0.0}, {1.0, 0.0}});
  PointCloud b = cloud_from({{0.0, 1.0}, {1.0, 1.0}});
  CHECK(exact_wasserstein_small(a, b, 2.0) == doctest::Approx(1.0).epsilon(1e-12));

  PointCloud same = cloud_from({{1.0, 2.0}, {3.0, 4.0}});
  PointCloud perm = cloud_from({{3.0, 4.0}, {1.0, 2.0}});
  CHECK(exact_wasserstein_small(same, perm, 2.0) == 0.0);

  Rng big(1);
  CHECK_THROWS_AS(exact_wasserstein_small(random_cloud(9, 2, big), random_cloud(9, 2, big), 2.0),
                  std::invalid_argument);
}

TEST_CASE("sliced distance: zero on equal clouds, analytic point-mass value") {
  Rng rng(41);
  PointCloud mu = random_cloud(8, 3, rng);
  PointCloud nu(Eigen::MatrixXd(mu.samples.colwise().reverse()));  // same rows, reordered
  DistanceConfig cfg;
  cfg.n_proj = 16;
  CHECK(sliced_wasserstein(mu, nu, cfg, rng) == doctest::Approx(0.0).epsilon(1e-12));

  // Point masses at 0 and v: each slice contributes <theta, v>^2, whose
  // spherical average is |v|^2 / d, so the sliced value tends to 5/sqrt(2).
  PointCloud zero = cloud_from({{0.0, 0.0}});
  PointCloud off = cloud_from({{3.0, 4.0}});
  DistanceConfig wide;
  wide.n_proj = 100000;
  wide.seed_mode = SeedMode::Seeded(5);
  Rng unused(0);
  CHECK(sliced_wasserstein(zero, off, wide, unused) ==
        doctest::Approx(5.0 / std::sqrt(2.0)).epsilon(0.015));
}

TEST_CASE("max-sliced random search and ascent find the point-mass direction") {
  PointCloud zero = cloud_from({{0.0, 0.0}});
  PointCloud off = cloud_from({{3.0, 4.0}});
  Rng rng(31);

  DistanceConfig ascent;
  ascent.max_mode = MaxMode::ProjectedAscent;
  MaxSlicedResult r = max_sliced_wasserstein(zero, off, ascent, rng);
  CHECK(r.value == doctest::Approx(5.0).epsilon(1e-3));
  CHECK(std::abs(std::abs(r.direction.v.dot(Eigen::Vector2d(0.6, 0.8))) - 1.0) < 1e-3);

  DistanceConfig search;
  search.n_proj = 4000;
  MaxSlicedResult s = max_sliced_wasserstein(zero, off, search, rng);
  CHECK(s.value == doctest::Approx(5.0).epsilon(0.01));
  CHECK(s.value <= 5.0 + 1e-12);
}

TEST_CASE("max-sliced is zero between identical clouds in both modes") {
  Rng rng(53);
  PointCloud mu = random_cloud(12, 4, rng);
  for (MaxMode mode : {MaxMode::RandomSearch, MaxMode::ProjectedAscent}) {
    DistanceConfig cfg;
    cfg.max_mode = mode;
    CHECK(max_sliced_wasserstein(mu, mu, cfg, rng).value == 0.0);
  }
}

TEST_CASE("oracle dominance: sliced <= max-sliced <= exact") {
  Rng rng(59);
  for (double p : {1.0, 1.5, 2.0}) {
    for (int rep = 0; rep < 30; ++rep) {
      PointCloud mu = random_cloud(6, 3, rng);
      PointCloud nu = random_cloud(6, 3, rng);
      auto dirs = sample_unit_directions(3, 32, rng);
      double sl = sliced_wasserstein_along(mu, nu, dirs, p);
      double ms = max_sliced_along(mu, nu, dirs, p).value;
      double ex = exact_wasserstein_small(mu, nu, p);
      CHECK(sl <= ms + 1e-9);
      CHECK(ms <= ex + 1e-9);
    }
  }
}

TEST_CASE("metric axioms for max-sliced under a shared direction set") {
  Rng rng(61);
  auto dirs = sample_unit_directions(4, 64, rng);
  for (int rep = 0; rep < 50; ++rep) {
    PointCloud a = random_cloud(10, 4, rng);
    PointCloud b = random_cloud(10, 4, rng);
    PointCloud c = random_cloud(10, 4, rng);
    double ab = max_sliced_along(a, b, dirs, 2.0).value;
    double ba = max_sliced_along(b, a, dirs, 2.0).value;
    double ac = max_sliced_along(a, c, dirs, 2.0).value;
    double cb = max_sliced_along(c, b, dirs, 2.0).value;
    CHECK(ab >= 0.0);
    CHECK(std::abs(ab - ba) <= 1e-9);
    CHECK(ab <= ac + cb + 1e-6);
  }
}

TEST_CASE("translation invariance of every paired distance") {
  Rng rng(67);
  PointCloud mu = random_cloud(8, 3, rng);
  PointCloud nu = random_cloud(8, 3, rng);
  Eigen::RowVector3d shift(0.7, -1.3, 2.1);
  PointCloud mu_s(Eigen::MatrixXd(mu.samples.rowwise() + shift));
  PointCloud nu_s(Eigen::MatrixXd(nu.samples.rowwise() + shift));

  auto dirs = sample_unit_directions(3, 32, rng);
  CHECK(std::abs(sliced_wasserstein_along(mu, nu, dirs, 2.0) -
                 sliced_wasserstein_along(mu_s, nu_s, dirs, 2.0)) <= 1e-9);
  CHECK(std::abs(max_sliced_along(mu, nu, dirs, 2.0).value -
                 max_sliced_along(mu_s, nu_s, dirs, 2.0).value) <= 1e-9);
  CHECK(std::abs(exact_wasserstein_small(mu, nu, 2.0) -
                 exact_wasserstein_small(mu_s, nu_s, 2.0)) <= 1e-9);
  CHECK(std::abs(mean_lp(mu, nu, 2) - mean_lp(mu_s, nu_s, 2)) <= 1e-9);
  CHECK(std::abs(kl_diag_gaussian(mu, nu) - kl_diag_gaussian(mu_s, nu_s)) <= 1e-9);
  CHECK(std::abs(mmd_rbf(mu, nu, 1.0) - mmd_rbf(mu_s, nu_s, 1.0)) <= 1e-9);
}

TEST_CASE("random-search estimate is nondecreasing in the direction budget") {
  Rng data_rng(71);
  PointCloud mu = random_cloud(10, 4, data_rng);
  PointCloud nu = random_cloud(10, 4, data_rng);
  double prev = -1.0;
  for (int n : {1, 2, 5, 10, 40, 80}) {
    DistanceConfig cfg;
    cfg.n_proj = n;
    cfg.seed_mode = SeedMode::Seeded(99);  // nested sets under a fixed seed
    Rng scratch(0);
    double v = max_sliced_wasserstein(mu, nu, cfg, scratch).value;
    CHECK(v >= prev);
    prev = v;
  }
}

TEST_CASE("seeded evaluations are bit-identical, unseeded ones vary") {
  Rng data_rng(73);
  PointCloud mu = random_cloud(10, 4, data_rng);
  PointCloud nu = random_cloud(10, 4, data_rng);

  DistanceConfig seeded;
  seeded.seed_mode = SeedMode::Seeded(5);
  Rng r1(1), r2(2);  // different caller streams must not matter
  CHECK(max_sliced_wasserstein(mu, nu, seeded, r1).value ==
        max_sliced_wasserstein(mu, nu, seeded, r2).value);

  DistanceConfig unseeded;
  Rng stream(9);
  double first = max_sliced_wasserstein(mu, nu, unseeded, stream).value;
  double second = max_sliced_wasserstein(mu, nu, unseeded, stream).value;
  CHECK(first != second);
}

TEST_CASE("mmd closed forms") {
  PointCloud same = cloud_from({{0.5, 0.5}, {1.0, -1.0}});
  CHECK(mmd_rbf(same, same, 1.0) == doctest::Approx(0.0).epsilon(1e-9));

  // Two single points at distance x: MMD^2 = 2 - 2 exp(-x^2 / (2 sigma^2)).
  PointCloud a = cloud_from({{0.0}});
  PointCloud b = cloud_from({{1.5}});
  double sigma = 0.8;
  double expected = std::sqrt(2.0 - 2.0 * std::exp(-1.5 * 1.5 / (2.0 * sigma * sigma)));
  CHECK(mmd_rbf(a, b, sigma) == doctest::Approx(expected).epsilon(1e-12));

  CHECK(mmd_rbf(a, b, 1e9) == doctest::Approx(0.0).epsilon(1e-6));
  CHECK_THROWS_AS(mmd_rbf(a, b, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(mmd_rbf(a, b, -1.0), std::invalid_argument);

  // Median heuristic path: still symmetric and zero on identical clouds.
  Rng rng(79);
  PointCloud x = random_cloud(6, 2, rng);
  PointCloud y = random_cloud(7, 2, rng);
  CHECK(mmd_rbf(x, y) == doctest::Approx(mmd_rbf(y, x)).epsilon(1e-12));
  CHECK(mmd_rbf(x, x) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("kl between diagonal Gaussian fits") {
  // Fits are N(0,1) vs N(1,1): KL = 0.5.
  PointCloud a = cloud_from({{-1.0}, {1.0}});
  PointCloud b = cloud_from({{0.0}, {2.0}});
  CHECK(kl_diag_gaussian(a, b) == doctest::Approx(0.5).epsilon(1e-12));

  // Equal means, variances 1 vs 4: KL = 0.5 (ln 4 + 1/4 - 1).
  PointCloud c = cloud_from({{-2.0}, {2.0}});
  CHECK(kl_diag_gaussian(a, c) ==
        doctest::Approx(0.5 * (std::log(4.0) + 0.25 - 1.0)).epsilon(1e-12));

  CHECK(kl_diag_gaussian(a, a) == doctest::Approx(0.0).epsilon(1e-12));
  PointCloud single = cloud_from({{0.0}});
  CHECK_THROWS_AS(kl_diag_gaussian(single, a), std::invalid_argument);
}

TEST_CASE("mean paired lp distances") {
  PointCloud a = cloud_from({{0.0, 0.0}, {1.0, 1.0}});
  PointCloud b = cloud_from({{3.0, 4.0}, {1.0, 1.0}});
  CHECK(mean_lp(a, a, 2) == 0.0);
  CHECK(mean_lp(a, b, 2) == doctest::Approx(2.5).epsilon(1e-12));   // (5 + 0) / 2
  CHECK(mean_lp(a, b, 1) == doctest::Approx(3.5).epsilon(1e-12));   // (7 + 0) / 2
  PointCloud c = cloud_from({{1.0, 2.0, 3.0}});
  CHECK_THROWS_AS(mean_lp(a, c, 2), std::invalid_argument);
  CHECK_THROWS_AS(mean_lp(a, b, 3), std::invalid_argument);
}

TEST_CASE("config validation rejects bad parameters") {
  DistanceConfig cfg;
  cfg.p = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.p = 2.0;
  cfg.n_proj = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
