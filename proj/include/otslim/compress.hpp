#pragma once

#include <utility>
#include <vector>

#include "otslim/train.hpp"

namespace otslim {

// How removal candidates are ranked: by the block's input/output
// distribution distance, by the validation-accuracy drop its lone removal
// causes, or uniformly at random (the ablation baselines).
enum class ScoreKind { Msw, BlockInfluence, Random };

// Per-eligible-block distances, keyed by block id (ascending ids), plus
// their mean. Exactly the eligible Active blocks appear.
struct BlockDistanceVector {
  std::vector<std::pair<int, double>> values;
  double mean = 0.0;
};

// Distances between each eligible block's input and output activations over
// X, as a row-weighted average across consecutive batches of cfg.batch_size
// (a trailing single row is skipped). rng feeds unseeded direction draws;
// one direction set is drawn per call and shared by all batches.
BlockDistanceVector block_distances(const ResidualNet& net, const Eigen::MatrixXd& X,
                                    const TrainConfig& cfg, Rng& rng);

struct BlockScore {
  int block = -1;
  double score = 0.0;
};

// Eligible blocks ranked ascending by score (ties by block id): Msw scores
// by block_distances over X; BlockInfluence by the accuracy drop on (X, y)
// when the block alone is temporarily removed; Random by a uniform draw per
// block. The net is restored to its incoming state before returning.
std::vector<BlockScore> score_blocks(ResidualNet& net, const Eigen::MatrixXd& X,
                                     const std::vector<int>& y, const TrainConfig& cfg,
                                     ScoreKind kind, Rng& rng);

// Trace of a removal run. The per-step vectors are aligned 1:1 with
// removal_order; when the accuracy budget was exceeded, the final entry is
// the violating removal, which has been rolled back in the returned net
// (budget_violated = true).
struct CompressionReport {
  double dense_accuracy = 0.0;
  std::vector<int> removal_order;
  std::vector<double> accuracy_trajectory;             // after each removal
  std::vector<BlockDistanceVector> distance_snapshots; // at each selection
  std::vector<int> cpl_trajectory;
  std::vector<long long> macs_trajectory;
  bool budget_violated = false;
  double final_accuracy = 0.0;  // of the returned net
  int final_cpl = 0;
  long long final_macs = 0;
  // Empirical per-block Lipschitz lower bounds of the returned net on the
  // evaluation activations, by block id, and their product.
  std::vector<std::pair<int, double>> lipschitz_per_block;
  double lipschitz_product = 1.0;
};

// Iterative removal with an accuracy budget: rescore the eligible blocks on
// the validation split, remove the lowest-distance one, and stop once the
// accuracy drop against the dense net exceeds delta (that removal is rolled
// back) or nothing eligible remains.
CompressionReport compress_loop(ResidualNet& net, const Eigen::MatrixXd& X_val,
                                const std::vector<int>& y_val, const TrainConfig& cfg,
                                double delta, Rng& rng);

struct CompressResult {
  TrainLog log;
  CompressionReport report;
};

// The end-to-end pipeline: train on the train split, then run the removal
// loop against the validation split.
CompressResult compress(ResidualNet& net, const Eigen::MatrixXd& X_train,
                        const std::vector<int>& y_train, const Eigen::MatrixXd& X_val,
                        const std::vector<int>& y_val, const TrainConfig& cfg,
                        double delta, Rng& rng);

// Blocks whose distance falls below epsilon, ordered ascending by distance
// (ties by id) — the one-shot selection rule.
std::vector<int> epsilon_select(const BlockDistanceVector& distances, double epsilon);

// One-shot variant: score once, remove every block under the threshold in
// ascending-distance order, recording the trajectory. No rollback.
CompressionReport compress_epsilon(ResidualNet& net, const Eigen::MatrixXd& X_val,
                                   const std::vector<int>& y_val, const TrainConfig& cfg,
                                   double epsilon, Rng& rng);

// One row of an accuracy-vs-size curve.
struct CurvePoint {
  int step = 0;
  int cpl = 0;
  long long macs = 0;
  double accuracy = 0.0;
  double mean_distance = 0.0;
};

// Removes blocks one at a time until none is eligible, ignoring any budget,
// and records the state after every step (row 0 is the untouched net). Msw
// rescores before each removal; BlockInfluence and Random fix their order
// from one initial scoring pass. Operates on a copy.
std::vector<CurvePoint> removal_curve(ResidualNet net, const Eigen::MatrixXd& X_val,
                                      const std::vector<int>& y_val,
                                      const TrainConfig& cfg, ScoreKind kind, Rng& rng);

}  // namespace otslim
