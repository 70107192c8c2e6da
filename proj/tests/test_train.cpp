#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "otslim/distances.hpp"
#include "otslim/train.hpp"

using namespace otslim;

namespace {

Eigen::MatrixXd random_matrix(int r, int c, Rng& rng, double scale = 1.0) {
  Eigen::MatrixXd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = scale * rng.gaussian();
  return m;
}

// Two well-separated 2-D Gaussian clusters, one per class.
void make_blobs(int n, Rng& rng, Eigen::MatrixXd& X, std::vector<int>& y) {
  X.resize(n, 2);
  y.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int c = i % 2;
    const double cx = c ? 2.0 : -2.0;
    X(i, 0) = cx + 0.5 * rng.gaussian();
    X(i, 1) = cx + 0.5 * rng.gaussian();
    y[static_cast<std::size_t>(i)] = c;
  }
}

std::vector<int> argmax_labels(const Eigen::MatrixXd& logits) {
  std::vector<int> y;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index arg = 0;
    logits.row(i).maxCoeff(&arg);
    y.push_back(static_cast<int>(arg));
  }
  return y;
}

// Central-difference check of evaluate_objective's gradient for the weight
// entries selected by `stride` (1 = every entry).
void check_objective_gradients(ResidualNet& net, const Eigen::MatrixXd& X,
                               const std::vector<int>& y, const TrainConfig& cfg,
                               const DirectionSet& dirs, int stride,
                               double tol = 5e-4) {
  const double h = 1e-5;
  ObjectiveEval eval = evaluate_objective(net, X, y, cfg, dirs);
  std::vector<Affine*> params = live_affines(net);
  REQUIRE(params.size() == eval.grads.W.size());

  auto fd_at = [&](double* slot) {
    const double keep = *slot;
    *slot = keep + h;
    double up = evaluate_objective(net, X, y, cfg, dirs).objective;
    *slot = keep - h;
    double dn = evaluate_objective(net, X, y, cfg, dirs).objective;
    *slot = keep;
    return (up - dn) / (2.0 * h);
  };

  int probe = 0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Affine& a = *params[k];
    for (Eigen::Index i = 0; i < a.W.rows(); ++i)
      for (Eigen::Index j = 0; j < a.W.cols(); ++j) {
        if (probe++ % stride) continue;
        double fd = fd_at(&a.W(i, j));
        double an = eval.grads.W[k](i, j);
        double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
        CHECK(std::abs(fd - an) / denom < tol);
      }
    for (Eigen::Index j = 0; j < a.b.size(); ++j) {
      if (probe++ % stride) continue;
      double fd = fd_at(&a.b[j]);
      double an = eval.grads.b[k][j];
      double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
      CHECK(std::abs(fd - an) / denom < tol);
    }
  }
}

}  // namespace

TEST_CASE("config validation rejects bad settings") {
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.validate();  // defaults are fine

  TrainConfig bad = cfg;
  bad.lambda = -0.1;
  CHECK_THROWS(bad.validate());
  bad = cfg;
  bad.batch_size = 1;
  CHECK_THROWS(bad.validate());
  bad = cfg;
  bad.learning_rate = 0.0;
  CHECK_THROWS(bad.validate());
  bad = cfg;
  bad.momentum = 1.0;
  CHECK_THROWS(bad.validate());
  bad = cfg;
  bad.mmd_bandwidth = 0.0;
  CHECK_THROWS(bad.validate());

  // The differentiable sliced losses exist at order 2 only.
  bad = cfg;
  bad.distance_cfg.p = 1.5;
  CHECK_THROWS(bad.validate());
  bad.distance = Distance::MeanL1;  // non-sliced distances ignore the order
  bad.validate();
}

TEST_CASE("live_affines follows the forward path layer order") {
  Rng rng(5);
  ResidualNet net = build_residual_mlp(3, {5, 9, 9, 9}, 2, rng);
  // lift + (fc1, fc2) x 4 blocks + head
  CHECK(live_affines(net).size() == 10);

  attach_adapter(net, 0, rng);
  commit_adapter(net, 0);          // block 0 contributes 1 instead of 2
  replace_with_identity(net, 2);   // block 2 contributes nothing
  std::vector<Affine*> live = live_affines(net);
  REQUIRE(live.size() == 7);
  CHECK(live[0] == &*net.lift);
  CHECK(live[1] == &*net.blocks[0].adapter);
  CHECK(live[2] == &net.blocks[1].fc1);
  CHECK(live[3] == &net.blocks[1].fc2);
  CHECK(live[4] == &net.blocks[3].fc1);
  CHECK(live[5] == &net.blocks[3].fc2);
  CHECK(live[6] == &net.head);

  CHECK(eligible_widths(net) == std::vector<int>{9});
  replace_with_identity(net, 1);
  replace_with_identity(net, 3);
  CHECK(eligible_widths(net).empty());
}

TEST_CASE("tape forward reproduces the plain forward bitwise") {
  Rng rng(17);
  ResidualNet net = build_residual_mlp(4, {6, 8, 8, 8}, 3, rng);
  attach_adapter(net, 0, rng);
  commit_adapter(net, 0);
  replace_with_identity(net, 2);

  Eigen::MatrixXd X = random_matrix(13, 4, rng);
  std::vector<int> y(13, 0);
  TrainConfig cfg;
  cfg.distance_cfg.seed_mode = SeedMode::Seeded(1);
  DirectionSet dirs;
  Rng stream(2);
  dirs = make_direction_set(eligible_widths(net), cfg.distance_cfg, stream);

  TrainingTape tt = build_training_tape(net, X, y, cfg, dirs, true);
  CHECK(tt.tape.value(tt.logits) == forward(net, X));
  CHECK(tt.weight_nodes.size() == live_affines(net).size());
}

TEST_CASE("direction sets: seeded draws are frozen, unseeded ones flow") {
  DistanceConfig seeded;
  seeded.n_proj = 6;
  seeded.seed_mode = SeedMode::Seeded(42);
  Rng stream(9);
  DirectionSet a = make_direction_set({5, 3}, seeded, stream);
  DirectionSet b = make_direction_set({5, 3}, seeded, stream);
  REQUIRE(a.count(5) == 1);
  REQUIRE(a.count(3) == 1);
  CHECK(a[5].size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(a[5][i].v == b[5][i].v);
    CHECK(a[3][i].v == b[3][i].v);
  }
  // Matches a standalone seeded draw for the same width.
  Rng own(42);
  auto standalone = sample_unit_directions(5, 6, own);
  for (std::size_t i = 0; i < 6; ++i) CHECK(a[5][i].v == standalone[i].v);

  DistanceConfig unseeded;
  unseeded.n_proj = 6;
  unseeded.seed_mode = SeedMode::Unseeded();
  DirectionSet c = make_direction_set({5}, unseeded, stream);
  DirectionSet d = make_direction_set({5}, unseeded, stream);
  bool all_equal = true;
  for (std::size_t i = 0; i < 6; ++i)
    if (c[5][i].v != d[5][i].v) all_equal = false;
  CHECK(!all_equal);
}

TEST_CASE("objective gradient matches finite differences (max-sliced)") {
  Rng rng(23);
  ResidualNet net = build_residual_mlp(3, {4, 4}, 3, rng);
  Eigen::MatrixXd X = random_matrix(10, 3, rng);
  std::vector<int> y = {0, 1, 2, 0, 1, 2, 0, 1, 2, 0};

  TrainConfig cfg;
  cfg.lambda = 0.7;
  cfg.distance = Distance::MaxSliced;
  cfg.distance_cfg.n_proj = 8;
  cfg.distance_cfg.seed_mode = SeedMode::Seeded(4);
  Rng stream(1);
  DirectionSet dirs = make_direction_set(eligible_widths(net), cfg.distance_cfg, stream);

  check_objective_gradients(net, X, y, cfg, dirs, /*stride=*/1);
}

TEST_CASE("objective gradient matches finite differences (other distances)") {
  Rng rng(29);
  ResidualNet net = build_residual_mlp(3, {4, 4}, 2, rng);
  Eigen::MatrixXd X = random_matrix(9, 3, rng);
  std::vector<int> y = {0, 1, 0, 1, 0, 1, 0, 1, 0};

  TrainConfig cfg;
  cfg.lambda = 0.5;
  cfg.distance_cfg.n_proj = 6;
  cfg.distance_cfg.seed_mode = SeedMode::Seeded(8);
  Rng stream(2);
  DirectionSet dirs = make_direction_set(eligible_widths(net), cfg.distance_cfg, stream);

  SUBCASE("sliced") { cfg.distance = Distance::Sliced; }
  SUBCASE("mean l1") { cfg.distance = Distance::MeanL1; }
  SUBCASE("mean l2") { cfg.distance = Distance::MeanL2; }
  SUBCASE("mmd, fixed bandwidth") {
    cfg.distance = Distance::Mmd;
    cfg.mmd_bandwidth = 1.0;  // the median heuristic is not differentiated
  }
  SUBCASE("kl of diagonal Gaussian fits") { cfg.distance = Distance::KlDiagGaussian; }

  check_objective_gradients(net, X, y, cfg, dirs, /*stride=*/3, 1e-3);
}

TEST_CASE("lambda = 0 still reports the regularizer value without grading it") {
  Rng rng(31);
  ResidualNet net = build_residual_mlp(2, {4, 4}, 2, rng);
  Eigen::MatrixXd X = random_matrix(8, 2, rng);
  std::vector<int> y = {0, 1, 0, 1, 0, 1, 0, 1};
  TrainConfig cfg;
  cfg.lambda = 0.0;
  cfg.distance_cfg.seed_mode = SeedMode::Seeded(6);
  Rng stream(3);
  DirectionSet dirs = make_direction_set(eligible_widths(net), cfg.distance_cfg, stream);

  ObjectiveEval eval = evaluate_objective(net, X, y, cfg, dirs);
  CHECK(eval.regularizer > 0.0);
  CHECK(eval.objective == eval.data_loss);

  // With lambda = 0 the gradient is the pure data-loss gradient.
  TrainConfig ce_only = cfg;
  check_objective_gradients(net, X, y, ce_only, dirs, /*stride=*/4);
}

TEST_CASE("tape regularizer agrees with the forward-only evaluation") {
  Rng rng(37);
  ResidualNet net = build_residual_mlp(2, {5, 5, 5}, 2, rng);
  Eigen::MatrixXd X = random_matrix(12, 2, rng);
  std::vector<int> y(12, 0);
  for (int i = 0; i < 12; i += 2) y[static_cast<std::size_t>(i)] = 1;

  TrainConfig cfg;
  cfg.lambda = 1.0;
  cfg.distance_cfg.n_proj = 10;
  cfg.distance_cfg.seed_mode = SeedMode::Seeded(11);
  Rng stream(4);
  DirectionSet dirs = make_direction_set(eligible_widths(net), cfg.distance_cfg, stream);

  for (Distance d : {Distance::MaxSliced, Distance::Sliced, Distance::MeanL1,
                     Distance::MeanL2, Distance::Mmd, Distance::KlDiagGaussian}) {
    cfg.distance = d;
    ObjectiveEval eval = evaluate_objective(net, X, y, cfg, dirs);
    double plain = regularizer_value(net, X, cfg, dirs);
    CHECK(std::abs(eval.regularizer - plain) < 1e-12);
  }
}

TEST_CASE("training without the regularizer separates two blobs") {
  Rng rng(41);
  Eigen::MatrixXd X;
  std::vector<int> y;
  make_blobs(200, rng, X, y);

  Rng init(42);
  ResidualNet net = build_residual_mlp(2, {8, 8}, 2, init);
  TrainConfig cfg;
  cfg.lambda = 0.0;
  cfg.epochs = 20;
  cfg.batch_size = 32;
  cfg.learning_rate = 0.1;
  cfg.seed = 7;
  TrainLog log = train(net, X, y, cfg);
  REQUIRE(log.epochs.size() == 20);
  CHECK(log.epochs.back().accuracy >= 0.95);
  CHECK(log.epochs.back().loss < log.epochs.front().loss);
  for (const EpochStats& e : log.epochs) {
    CHECK(std::isfinite(e.loss));
    CHECK(e.accuracy >= 0.0);
    CHECK(e.accuracy <= 1.0);
  }
}

TEST_CASE("the regularizer weight drives the mean block distance down") {
  Rng rng(43);
  Eigen::MatrixXd X;
  std::vector<int> y;
  make_blobs(160, rng, X, y);

  Rng init(44);
  ResidualNet base = build_residual_mlp(2, {8, 8, 8}, 2, init);

  TrainConfig cfg;
  cfg.epochs = 15;
  cfg.batch_size = 32;
  cfg.learning_rate = 0.05;
  cfg.seed = 9;
  cfg.distance_cfg.n_proj = 12;
  cfg.distance_cfg.seed_mode = SeedMode::Seeded(13);

  ResidualNet plain = base;
  cfg.lambda = 0.0;
  TrainLog log_plain = train(plain, X, y, cfg);

  ResidualNet squeezed = base;
  cfg.lambda = 5.0;
  TrainLog log_squeezed = train(squeezed, X, y, cfg);

  CHECK(log_squeezed.epochs.back().reg < log_plain.epochs.back().reg);
}

TEST_CASE("seeded runs are bit-identical; the seed changes the run") {
  Rng rng(47);
  Eigen::MatrixXd X;
  std::vector<int> y;
  make_blobs(96, rng, X, y);
  Rng init(48);
  ResidualNet base = build_residual_mlp(2, {6, 6}, 2, init);

  TrainConfig cfg;
  cfg.lambda = 0.5;
  cfg.epochs = 4;
  cfg.batch_size = 24;
  cfg.learning_rate = 0.05;
  cfg.seed = 21;
  cfg.distance_cfg.n_proj = 8;
  cfg.distance_cfg.seed_mode = SeedMode::Seeded(5);

  ResidualNet a = base, b = base;
  TrainLog la = train(a, X, y, cfg);
  TrainLog lb = train(b, X, y, cfg);
  CHECK(forward(a, X) == forward(b, X));
  for (std::size_t e = 0; e < la.epochs.size(); ++e) {
    CHECK(la.epochs[e].loss == lb.epochs[e].loss);
    CHECK(la.epochs[e].reg == lb.epochs[e].reg);
  }

  ResidualNet c = base;
  TrainConfig other = cfg;
  other.seed = 22;  // different shuffle order
  train(c, X, y, other);
  CHECK(forward(a, X) != forward(c, X));
}

TEST_CASE("unseeded direction streams are reproducible from the run seed") {
  Rng rng(53);
  Eigen::MatrixXd X;
  std::vector<int> y;
  make_blobs(96, rng, X, y);
  Rng init(54);
  ResidualNet base = build_residual_mlp(2, {6, 6}, 2, init);

  TrainConfig cfg;
  cfg.lambda = 1.0;
  cfg.epochs = 3;
  cfg.batch_size = 24;
  cfg.learning_rate = 0.05;
  cfg.seed = 31;
  cfg.distance_cfg.n_proj = 8;
  cfg.distance_cfg.seed_mode = SeedMode::Unseeded();

  ResidualNet a = base, b = base;
  train(a, X, y, cfg);
  train(b, X, y, cfg);
  CHECK(forward(a, X) == forward(b, X));  // same run seed, same stream

  // The draw cadence alters which directions each minibatch sees.
  ResidualNet c = base;
  TrainConfig per_epoch = cfg;
  per_epoch.refresh = DirectionRefresh::PerEpoch;
  train(c, X, y, per_epoch);
  CHECK(forward(a, X) != forward(c, X));
}

TEST_CASE("healing keeps block states and trains the live path") {
  Rng rng(59);
  Eigen::MatrixXd X;
  std::vector<int> y;
  make_blobs(120, rng, X, y);
  Rng init(60);
  ResidualNet net = build_residual_mlp(2, {6, 6, 6}, 2, init);

  TrainConfig cfg;
  cfg.lambda = 0.0;
  cfg.epochs = 10;
  cfg.batch_size = 24;
  cfg.learning_rate = 0.1;
  cfg.seed = 3;
  train(net, X, y, cfg);

  replace_with_identity(net, 1);
  Eigen::MatrixXd frozen_fc1 = net.blocks[1].fc1.W;
  TrainLog hl = heal(net, X, y, cfg, 5);
  CHECK(hl.epochs.size() == 5);
  CHECK(net.blocks[1].state == BlockState::Identity);
  CHECK(net.blocks[1].fc1.W == frozen_fc1);  // removed weights are untouched
  CHECK(hl.epochs.back().reg > 0.0);  // still logged over the remaining blocks
}

TEST_CASE("training aborts with a diagnostic when the objective explodes") {
  Rng rng(61);
  Eigen::MatrixXd X;
  std::vector<int> y;
  make_blobs(32, rng, X, y);
  Rng init(62);
  ResidualNet net = build_residual_mlp(2, {4}, 2, init);
  // Finite weights whose logits overflow, driving the loss to NaN.
  net.head.W.setConstant(1e308);

  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 16;
  cfg.learning_rate = 0.1;
  CHECK_THROWS_WITH_AS(train(net, X, y, cfg),
                       doctest::Contains("non-finite"), std::runtime_error);
}

TEST_CASE("a single leftover row is skipped, not fed to the distances") {
  Rng rng(67);
  Eigen::MatrixXd X;
  std::vector<int> y;
  make_blobs(33, rng, X, y);  // batches of 16 leave one row over
  Rng init(68);
  ResidualNet net = build_residual_mlp(2, {4, 4}, 2, init);

  TrainConfig cfg;
  cfg.lambda = 0.5;
  cfg.epochs = 2;
  cfg.batch_size = 16;
  cfg.learning_rate = 0.05;
  cfg.distance = Distance::KlDiagGaussian;  // would reject a 1-row cloud
  TrainLog log = train(net, X, y, cfg);
  CHECK(log.epochs.size() == 2);
}

TEST_CASE("missing directions for an eligible width are reported") {
  Rng rng(71);
  ResidualNet net = build_residual_mlp(2, {4, 4}, 2, rng);
  Eigen::MatrixXd X = random_matrix(8, 2, rng);
  std::vector<int> y(8, 0);
  TrainConfig cfg;
  cfg.lambda = 1.0;
  DirectionSet empty;
  CHECK_THROWS(evaluate_objective(net, X, y, cfg, empty));
}

TEST_CASE("an affine adapter learns to mirror a linear width-changing block") {
  Rng rng(72);
  ResidualNet net = build_residual_mlp(3, {3, 6, 6}, 2, rng);
  net.blocks[0].activation = Activation::Linear;  // block 0 maps 3 -> 6
  REQUIRE(!net.blocks[0].has_skip);

  Rng adapter_rng(73);
  attach_adapter(net, 0, adapter_rng);

  Eigen::MatrixXd X = random_matrix(64, 3, rng);
  TrainConfig cfg;
  cfg.epochs = 1200;
  cfg.batch_size = 32;
  cfg.learning_rate = 0.05;
  cfg.momentum = 0.9;
  cfg.seed = 9;
  cfg.distance_cfg.n_proj = 40;

  // A linear body composes to one affine map, so the fit can go to ~zero.
  const double fitted = fit_adapter(net, 0, X, cfg);
  CHECK(fitted < 1e-2);

  // The fitted adapter's image sits on the block's image.
  Eigen::MatrixXd pred = apply_affine(*net.blocks[0].adapter, X);
  Eigen::MatrixXd want = block_transform(net.blocks[0], X);
  Rng dir_rng(74);
  double msw = max_sliced_wasserstein(PointCloud(pred), PointCloud(want),
                                      cfg.distance_cfg, dir_rng)
                   .value;
  CHECK(msw < 1e-2);

  // Committing swaps the block onto the single affine path.
  commit_adapter(net, 0);
  CHECK(net.blocks[0].state == BlockState::AdapterOnly);
}

TEST_CASE("adapter fitting rejects missing or committed adapters") {
  Rng rng(75);
  ResidualNet net = build_residual_mlp(3, {3, 6, 6}, 2, rng);
  Eigen::MatrixXd X = random_matrix(8, 3, rng);
  TrainConfig cfg;
  cfg.epochs = 1;
  CHECK_THROWS(fit_adapter(net, 0, X, cfg));  // nothing attached
  CHECK_THROWS(fit_adapter(net, 9, X, cfg));  // out of range

  Rng arng(76);
  attach_adapter(net, 0, arng);
  commit_adapter(net, 0);
  CHECK_THROWS(fit_adapter(net, 0, X, cfg));  // no longer active
}
