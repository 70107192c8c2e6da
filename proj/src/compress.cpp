#include "otslim/compress.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace otslim {

namespace {

// Ascending by score, ties broken by block id so rankings are reproducible.
void sort_scores(std::vector<BlockScore>& scores) {
  std::sort(scores.begin(), scores.end(), [](const BlockScore& a, const BlockScore& b) {
    if (a.score != b.score) return a.score < b.score;
    return a.block < b.block;
  });
}

// Per-block empirical Lipschitz bounds along the forward chain, probing each
// block with its own input activations (capped for cost).
void lipschitz_diagnostics(const ResidualNet& net, const Eigen::MatrixXd& X,
                           CompressionReport& report) {
  constexpr int kProbeCap = 128;
  constexpr int kPairBudget = 2000;
  const Eigen::Index rows = std::min<Eigen::Index>(X.rows(), kProbeCap);
  Eigen::MatrixXd h = X.topRows(rows);
  if (net.lift) {
    h = h * net.lift->W;
    h.rowwise() += net.lift->b;
  }
  report.lipschitz_per_block.clear();
  report.lipschitz_product = 1.0;
  for (int k = 0; k < static_cast<int>(net.blocks.size()); ++k) {
    const BlockSpec& b = net.blocks[static_cast<std::size_t>(k)];
    double est = lipschitz_estimate_block(b, h, kPairBudget);
    report.lipschitz_per_block.emplace_back(k, est);
    report.lipschitz_product *= est;
    h = block_transform(b, h);
  }
}

int argmin_block(const BlockDistanceVector& dist) {
  int best = -1;
  double best_val = 0.0;
  for (const auto& [block, value] : dist.values)
    if (best < 0 || value < best_val) {
      best = block;
      best_val = value;
    }
  return best;  // ids ascend, so ties keep the lowest id
}

void record_step(CompressionReport& report, const ResidualNet& net, int block,
                 double acc, BlockDistanceVector snapshot) {
  report.removal_order.push_back(block);
  report.accuracy_trajectory.push_back(acc);
  report.distance_snapshots.push_back(std::move(snapshot));
  report.cpl_trajectory.push_back(critical_path_length(net));
  report.macs_trajectory.push_back(macs(net));
}

void finalize_report(CompressionReport& report, const ResidualNet& net,
                     const Eigen::MatrixXd& X_val, const std::vector<int>& y_val) {
  report.final_accuracy = accuracy(net, X_val, y_val);
  report.final_cpl = critical_path_length(net);
  report.final_macs = macs(net);
  lipschitz_diagnostics(net, X_val, report);
}

}  // namespace

BlockDistanceVector block_distances(const ResidualNet& net, const Eigen::MatrixXd& X,
                                    const TrainConfig& cfg, Rng& rng) {
  DirectionSet directions =
      make_direction_set(eligible_widths(net), cfg.distance_cfg, rng);

  std::map<int, double> sums;
  std::map<int, long long> rows_per_block;
  const int n = static_cast<int>(X.rows());
  for (int start = 0; start < n; start += cfg.batch_size) {
    const int rows = std::min(cfg.batch_size, n - start);
    if (rows < 2) continue;  // distances need two samples
    Collected col = forward_collect(net, X.middleRows(start, rows));
    for (const BlockPair& pair : col.pairs) {
      double d = cloud_distance(PointCloud(pair.inputs), PointCloud(pair.outputs),
                                cfg, directions);
      sums[pair.block] += d * rows;
      rows_per_block[pair.block] += rows;
    }
  }

  BlockDistanceVector out;
  for (const auto& [block, sum] : sums)
    out.values.emplace_back(block, sum / static_cast<double>(rows_per_block[block]));
  if (!out.values.empty()) {
    double total = 0.0;
    for (const auto& [block, value] : out.values) total += value;
    out.mean = total / static_cast<double>(out.values.size());
  }
  return out;
}

std::vector<BlockScore> score_blocks(ResidualNet& net, const Eigen::MatrixXd& X,
                                     const std::vector<int>& y, const TrainConfig& cfg,
                                     ScoreKind kind, Rng& rng) {
  std::vector<BlockScore> scores;
  switch (kind) {
    case ScoreKind::Msw: {
      BlockDistanceVector dist = block_distances(net, X, cfg, rng);
      for (const auto& [block, value] : dist.values)
        scores.push_back(BlockScore{block, value});
      break;
    }
    case ScoreKind::BlockInfluence: {
      const double base = accuracy(net, X, y);
      for (int k = 0; k < static_cast<int>(net.blocks.size()); ++k) {
        if (!net.blocks[static_cast<std::size_t>(k)].eligible()) continue;
        replace_with_identity(net, k);
        const double drop = base - accuracy(net, X, y);
        restore_block(net, k);
        scores.push_back(BlockScore{k, drop});
      }
      break;
    }
    case ScoreKind::Random: {
      for (int k = 0; k < static_cast<int>(net.blocks.size()); ++k)
        if (net.blocks[static_cast<std::size_t>(k)].eligible())
          scores.push_back(BlockScore{k, rng.uniform()});
      break;
    }
  }
  sort_scores(scores);
  return scores;
}

CompressionReport compress_loop(ResidualNet& net, const Eigen::MatrixXd& X_val,
                                const std::vector<int>& y_val, const TrainConfig& cfg,
                                double delta, Rng& rng) {
  if (delta < 0.0) throw std::invalid_argument("accuracy budget delta must be >= 0");

  CompressionReport report;
  report.dense_accuracy = accuracy(net, X_val, y_val);
  while (true) {
    BlockDistanceVector dist = block_distances(net, X_val, cfg, rng);
    if (dist.values.empty()) break;  // nothing eligible remains
    const int pick = argmin_block(dist);

    replace_with_identity(net, pick);
    const double acc = accuracy(net, X_val, y_val);
    record_step(report, net, pick, acc, std::move(dist));

    if (report.dense_accuracy - acc > delta) {
      restore_block(net, pick);  // the returned net satisfies the budget
      report.budget_violated = true;
      break;
    }
  }
  finalize_report(report, net, X_val, y_val);
  return report;
}

CompressResult compress(ResidualNet& net, const Eigen::MatrixXd& X_train,
                        const std::vector<int>& y_train, const Eigen::MatrixXd& X_val,
                        const std::vector<int>& y_val, const TrainConfig& cfg,
                        double delta, Rng& rng) {
  CompressResult result;
  result.log = train(net, X_train, y_train, cfg);
  result.report = compress_loop(net, X_val, y_val, cfg, delta, rng);
  return result;
}

std::vector<int> epsilon_select(const BlockDistanceVector& distances, double epsilon) {
  if (epsilon < 0.0) throw std::invalid_argument("threshold epsilon must be >= 0");
  std::vector<BlockScore> kept;
  for (const auto& [block, value] : distances.values)
    if (value < epsilon) kept.push_back(BlockScore{block, value});
  sort_scores(kept);
  std::vector<int> out;
  for (const BlockScore& s : kept) out.push_back(s.block);
  return out;
}

CompressionReport compress_epsilon(ResidualNet& net, const Eigen::MatrixXd& X_val,
                                   const std::vector<int>& y_val, const TrainConfig& cfg,
                                   double epsilon, Rng& rng) {
  CompressionReport report;
  report.dense_accuracy = accuracy(net, X_val, y_val);
  BlockDistanceVector dist = block_distances(net, X_val, cfg, rng);
  for (int block : epsilon_select(dist, epsilon)) {
    replace_with_identity(net, block);
    const double acc = accuracy(net, X_val, y_val);
    record_step(report, net, block, acc, dist);  // the single scoring pass
  }
  finalize_report(report, net, X_val, y_val);
  return report;
}

std::vector<CurvePoint> removal_curve(ResidualNet net, const Eigen::MatrixXd& X_val,
                                      const std::vector<int>& y_val,
                                      const TrainConfig& cfg, ScoreKind kind, Rng& rng) {
  DirectionSet directions =
      make_direction_set(eligible_widths(net), cfg.distance_cfg, rng);
  auto snapshot = [&](int step) {
    CurvePoint p;
    p.step = step;
    p.cpl = critical_path_length(net);
    p.macs = macs(net);
    p.accuracy = accuracy(net, X_val, y_val);
    p.mean_distance = regularizer_value(net, X_val, cfg, directions);
    return p;
  };

  std::vector<CurvePoint> curve;
  curve.push_back(snapshot(0));
  if (kind == ScoreKind::Msw) {
    int step = 1;
    while (true) {
      BlockDistanceVector dist = block_distances(net, X_val, cfg, rng);
      if (dist.values.empty()) break;
      replace_with_identity(net, argmin_block(dist));
      curve.push_back(snapshot(step++));
    }
  } else {
    std::vector<BlockScore> order = score_blocks(net, X_val, y_val, cfg, kind, rng);
    int step = 1;
    for (const BlockScore& s : order) {
      replace_with_identity(net, s.block);
      curve.push_back(snapshot(step++));
    }
  }
  return curve;
}

}  // namespace otslim
