#include "otslim/distance_losses.hpp"

#include <cmath>

namespace otslim::ad {

namespace {

void check_rows(const Tape& t, NodeId mu, NodeId nu, bool same_rows = true) {
  if (t.value(mu).cols() != t.value(nu).cols())
    throw std::invalid_argument("distance loss: row dimensions differ");
  if (same_rows && t.value(mu).rows() != t.value(nu).rows())
    throw std::invalid_argument("distance loss: sample counts differ");
}

// Records mean((sort(mu th) - sort(nu th))^2) for one direction and returns
// the scalar node plus the frozen permutations.
struct SliceCost {
  NodeId cost;
  SortRecord mu_order;
  SortRecord nu_order;
};

SliceCost record_slice_cost(Tape& t, NodeId mu, NodeId nu, const Direction& dir) {
  NodeId theta = t.constant(dir.v);
  auto [ms, mo] = t.sort_column(t.matmul(mu, theta));
  auto [ns, no] = t.sort_column(t.matmul(nu, theta));
  NodeId cost = t.mean_all(t.square(t.sub(ms, ns)));
  return SliceCost{cost, std::move(mo), std::move(no)};
}

}  // namespace

MswLoss msw_loss(Tape& tape, NodeId mu_rows, NodeId nu_rows,
                 std::span<const Direction> dirs) {
  check_rows(tape, mu_rows, nu_rows);
  if (dirs.empty()) throw std::invalid_argument("msw_loss: direction set must be non-empty");

  // Forward-only scan over the candidate directions; only the argmax branch
  // is recorded on the tape.
  const PointCloud mu_cloud{Eigen::MatrixXd(tape.value(mu_rows))};
  const PointCloud nu_cloud{Eigen::MatrixXd(tape.value(nu_rows))};
  int best = 0;
  double best_cost = -1.0;
  for (int k = 0; k < static_cast<int>(dirs.size()); ++k) {
    double c = pairing_cost(project(mu_cloud, dirs[static_cast<std::size_t>(k)]).values,
                            project(nu_cloud, dirs[static_cast<std::size_t>(k)]).values, 2.0);
    if (c > best_cost) {
      best_cost = c;
      best = k;
    }
  }

  SliceCost sc = record_slice_cost(tape, mu_rows, nu_rows,
                                   dirs[static_cast<std::size_t>(best)]);
  MswLoss out;
  out.loss = tape.sqrt_guarded(sc.cost);
  out.argmax_direction = best;
  out.mu_order = std::move(sc.mu_order);
  out.nu_order = std::move(sc.nu_order);
  return out;
}

NodeId sliced_loss(Tape& tape, NodeId mu_rows, NodeId nu_rows,
                   std::span<const Direction> dirs) {
  check_rows(tape, mu_rows, nu_rows);
  if (dirs.empty()) throw std::invalid_argument("sliced_loss: direction set must be non-empty");
  NodeId acc = record_slice_cost(tape, mu_rows, nu_rows, dirs[0]).cost;
  for (std::size_t k = 1; k < dirs.size(); ++k)
    acc = tape.add(acc, record_slice_cost(tape, mu_rows, nu_rows, dirs[k]).cost);
  return tape.sqrt_guarded(tape.scale(acc, 1.0 / static_cast<double>(dirs.size())));
}

NodeId mean_l1_loss(Tape& tape, NodeId mu_rows, NodeId nu_rows) {
  check_rows(tape, mu_rows, nu_rows);
  return tape.mean_all(tape.row_sum(tape.abs(tape.sub(nu_rows, mu_rows))));
}

NodeId mean_l2_loss(Tape& tape, NodeId mu_rows, NodeId nu_rows) {
  check_rows(tape, mu_rows, nu_rows);
  NodeId sq = tape.square(tape.sub(nu_rows, mu_rows));
  return tape.mean_all(tape.sqrt_guarded(tape.row_sum(sq)));
}

NodeId mmd_loss(Tape& tape, NodeId mu_rows, NodeId nu_rows, double bandwidth) {
  check_rows(tape, mu_rows, nu_rows, /*same_rows=*/false);
  if (!(bandwidth > 0.0)) throw std::invalid_argument("mmd_loss: bandwidth must be positive");
  const double c = -1.0 / (2.0 * bandwidth * bandwidth);
  NodeId kxx = tape.mean_all(tape.exp_scale(tape.pair_sq_dist(mu_rows, mu_rows), c));
  NodeId kyy = tape.mean_all(tape.exp_scale(tape.pair_sq_dist(nu_rows, nu_rows), c));
  NodeId kxy = tape.mean_all(tape.exp_scale(tape.pair_sq_dist(mu_rows, nu_rows), c));
  NodeId mmd2 = tape.sub(tape.add(kxx, kyy), tape.scale(kxy, 2.0));
  return tape.sqrt_guarded(mmd2);
}

NodeId kl_diag_loss(Tape& tape, NodeId mu_rows, NodeId nu_rows) {
  check_rows(tape, mu_rows, nu_rows, /*same_rows=*/false);
  if (tape.value(mu_rows).rows() < 2 || tape.value(nu_rows).rows() < 2)
    throw std::invalid_argument("kl_diag_loss: needs at least two samples per side");
  constexpr double kVarFloor = 1e-8;
  NodeId m1 = tape.col_mean(mu_rows);
  NodeId m2 = tape.col_mean(nu_rows);
  NodeId v1 = tape.col_var(mu_rows, kVarFloor);
  NodeId v2 = tape.col_var(nu_rows, kVarFloor);
  // Per dimension: 0.5 log(v2/v1) + (v1 + (m1-m2)^2) / (2 v2) - 0.5.
  NodeId log_ratio = tape.scale(tape.sub(tape.log(v2), tape.log(v1)), 0.5);
  NodeId num = tape.add(v1, tape.square(tape.sub(m1, m2)));
  NodeId frac = tape.div(num, tape.scale(v2, 2.0));
  return tape.sum_all(tape.shift(tape.add(log_ratio, frac), -0.5));
}

}  // namespace otslim::ad
