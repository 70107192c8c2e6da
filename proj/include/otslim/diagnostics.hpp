#pragma once

#include <string>
#include <utility>
#include <vector>

#include "otslim/train.hpp"

namespace otslim {

// Cosine between two gradient collections flattened together, with the
// zero-norm rule: when either side has zero norm the cosine is reported as
// 0 and the entry is flagged instead of dividing by zero.
std::pair<double, bool> flagged_cosine(const std::vector<Eigen::MatrixXd>& a,
                                       const std::vector<Eigen::MatrixXd>& b);

struct AlignmentEntry {
  std::string group;     // "lift", "block <k>", or "head"
  double cosine = 0.0;   // between the data-loss and regularizer gradients
  bool flagged = false;  // a zero-norm side (e.g. the regularizer never
                         // touches the head), so the cosine is vacuous
};

// Per weight group, the cosine between the data-loss gradient and the
// regularizer gradient on one batch. Purely diagnostic: values are reported,
// nothing is asserted about their sign. With no eligible blocks every group
// is flagged at cosine 0.
std::vector<AlignmentEntry> gradient_alignment(const ResidualNet& net,
                                               const Eigen::MatrixXd& X,
                                               const std::vector<int>& y,
                                               const TrainConfig& cfg,
                                               const DirectionSet& directions);

struct TriangleBound {
  double lhs = 0.0;   // distance from the first block's input cloud to the target cloud
  double rhs = 0.0;   // per-block distances chained, plus the last hop to the target
  bool holds = false; // lhs <= rhs + 1e-6
};

// Chains the max-sliced distance along the block sequence with ONE shared
// direction set, so the triangle inequality holds exactly for the estimator:
//   maxSW(input_1, target) <= sum_k maxSW(in_k, out_k) + maxSW(out_K, target).
// Requires every block to keep one common width equal to the target cloud's
// dimension (the class count for one-hot targets); any mismatch between the
// feature space and the label embedding is an error. The target cloud must
// have one row per batch row.
TriangleBound triangle_bound_check(const ResidualNet& net, const Eigen::MatrixXd& batch,
                                   const PointCloud& target, const TrainConfig& cfg,
                                   Rng& rng);

// One-hot rows for labels in [0, num_classes), the standard target cloud
// for triangle_bound_check.
PointCloud one_hot_cloud(const std::vector<int>& labels, int num_classes);

}  // namespace otslim
