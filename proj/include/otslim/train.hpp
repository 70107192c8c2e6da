#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "otslim/net.hpp"
#include "otslim/point_cloud.hpp"
#include "otslim/tape.hpp"

namespace otslim {

// Which distribution distance the regularizer places between each eligible
// block's input and output activations.
enum class Distance { MaxSliced, Sliced, MeanL1, MeanL2, Mmd, KlDiagGaussian };

// When, under an unseeded direction stream, fresh projection directions are
// drawn. With a seeded stream the direction set is fixed for the whole run
// and the refresh cadence has no effect.
enum class DirectionRefresh { PerMinibatch, PerEpoch };

struct TrainConfig {
  double lambda = 0.0;              // regularizer weight in J = L + lambda * R
  Distance distance = Distance::MaxSliced;
  DistanceConfig distance_cfg;      // order, direction count, search mode, seeding
  int epochs = 1;
  int batch_size = 128;             // minibatches need >= 2 rows for the distances
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::uint64_t seed = 0;           // drives shuffling and unseeded direction draws
  DirectionRefresh refresh = DirectionRefresh::PerMinibatch;
  std::optional<double> mmd_bandwidth;  // fixed kernel sigma; unset = per-batch median

  // Rejects non-positive sizes/rates, lambda < 0, momentum outside [0, 1),
  // and sliced-family regularizers at an order other than 2 (the
  // differentiable path is built for order 2 only).
  void validate() const;
};

// Projection directions per activation width, shared by every eligible block
// of that width within one objective evaluation.
using DirectionSet = std::map<int, std::vector<Direction>>;

// Draws n_proj unit directions for each width. Seeded configurations restart
// from Rng(seed) for every width, matching what a standalone seeded distance
// evaluation uses; unseeded ones consume the caller's stream.
DirectionSet make_direction_set(const std::vector<int>& dims,
                                const DistanceConfig& cfg, Rng& stream);

// The widths for which eligible blocks exist (deduplicated, ascending).
std::vector<int> eligible_widths(const ResidualNet& net);

// Pointers to the affine layers a gradient step updates, in tape order:
// lift (when present), then per block fc1+fc2 if Active or the adapter if
// AdapterOnly (Identity blocks hold no live weights), then the head.
std::vector<Affine*> live_affines(ResidualNet& net);

// Gradients aligned with live_affines order.
struct ParamGrads {
  std::vector<Eigen::MatrixXd> W;
  std::vector<Eigen::RowVectorXd> b;
};

struct ObjectiveEval {
  double objective = 0.0;    // data_loss + lambda * regularizer
  double data_loss = 0.0;    // softmax cross-entropy over the batch
  double regularizer = 0.0;  // mean distance over eligible blocks (0 if none)
  ParamGrads grads;          // d objective / d weights
};

// A differentiable replica of the forward pass with the batch loss and,
// when requested, the activation-distance regularizer on the same tape.
// Weight leaves are aligned with live_affines order.
struct TrainingTape {
  ad::Tape tape;
  std::vector<ad::NodeId> weight_nodes;
  std::vector<ad::NodeId> bias_nodes;
  ad::NodeId logits = -1;
  ad::NodeId data_loss = -1;
  ad::NodeId regularizer = -1;  // -1 when not built or no eligible blocks
  ad::NodeId objective = -1;
};

TrainingTape build_training_tape(const ResidualNet& net, const Eigen::MatrixXd& X,
                                 const std::vector<int>& y, const TrainConfig& cfg,
                                 const DirectionSet& directions,
                                 bool with_regularizer);

// Builds the tape, runs one backward pass from the objective, and returns
// the parts plus weight gradients. The direction set must cover every
// eligible width (only consulted by the sliced-family distances).
ObjectiveEval evaluate_objective(const ResidualNet& net, const Eigen::MatrixXd& X,
                                 const std::vector<int>& y, const TrainConfig& cfg,
                                 const DirectionSet& directions);

// The configured distance between two activation clouds, forward-only.
// Sliced-family distances read their projections from the direction set;
// the other distances ignore it.
double cloud_distance(const PointCloud& mu, const PointCloud& nu,
                      const TrainConfig& cfg, const DirectionSet& directions);

// Forward-only regularizer value on a batch: the mean, over eligible
// blocks, of the configured distance between block input and output
// activations. Returns 0 when no block is eligible.
double regularizer_value(const ResidualNet& net, const Eigen::MatrixXd& X,
                         const TrainConfig& cfg, const DirectionSet& directions);

struct EpochStats {
  double loss = 0.0;      // row-weighted mean minibatch cross-entropy
  double reg = 0.0;       // row-weighted mean minibatch regularizer value
  double accuracy = 0.0;  // on the full training set at epoch end
};

struct TrainLog {
  std::vector<EpochStats> epochs;
};

// Minibatch SGD with momentum on J = L + lambda * R. Shuffles every epoch,
// skips a size-1 remainder batch (the distances need two rows), and aborts
// with a diagnostic if the objective turns non-finite. Velocity update:
// v = momentum * v + g; w -= learning_rate * v. Block states are never
// changed here; Identity blocks stay untouched, AdapterOnly blocks train
// their adapter.
TrainLog train(ResidualNet& net, const Eigen::MatrixXd& X, const std::vector<int>& y,
               const TrainConfig& cfg);

// Fine-tunes with the regularizer off for the given number of epochs,
// keeping every other setting (and all block states) as configured.
TrainLog heal(ResidualNet& net, const Eigen::MatrixXd& X, const std::vector<int>& y,
              const TrainConfig& cfg, int epochs);

// Trains a width-changing block's attached (uncommitted) adapter so its
// outputs transport-match the block's own outputs: minibatch SGD with
// momentum on the adapter weights alone, driving the configured distance
// between the adapter image and the frozen block image of the same rows.
// The learning rate decays geometrically to 1% of cfg.learning_rate by the
// last epoch, which lets the fit settle instead of circling the optimum.
// The block must be Active with an adapter attached. Returns the distance
// over all of X after the final epoch.
double fit_adapter(ResidualNet& net, int block, const Eigen::MatrixXd& X,
                   const TrainConfig& cfg);

}  // namespace otslim
