#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "otslim/rng.hpp"

namespace otslim {

struct Affine {
  Eigen::MatrixXd W;     // in x out
  Eigen::RowVectorXd b;  // 1 x out
};

// Active: the block transform runs. Identity: the block is removed and
// passes its input through (weights are retained so a removal can be rolled
// back). AdapterOnly: a single committed affine replaces the block.
enum class BlockState { Active, Identity, AdapterOnly };

enum class Activation { Relu, Linear };

// Two affine layers with a nonlinearity between them. Equal input/output
// widths get a skip connection (y = x + f(x)) at build time and are the
// blocks whose input/output distributions the regularizer compares;
// width-changing blocks run plain (y = f(x)) and are not eligible.
struct BlockSpec {
  int in_dim = 0;
  int hidden_dim = 0;
  int out_dim = 0;
  BlockState state = BlockState::Active;
  Activation activation = Activation::Relu;
  bool has_skip = false;
  Affine fc1, fc2;
  std::optional<Affine> adapter;  // parallel in -> out path, see attach_adapter

  bool eligible() const { return has_skip && state == BlockState::Active; }
};

struct ResidualNet {
  int input_dim = 0;
  int num_classes = 0;
  std::optional<Affine> lift;  // input_dim -> first block width, when they differ
  std::vector<BlockSpec> blocks;
  Affine head;
};

// Builds a residual MLP. widths[k] is the width entering block k; each block
// maps its width to the next block's width (the last block keeps its own),
// so equal consecutive widths produce residual blocks and width changes
// produce plain ones. Inputs are lifted to widths[0] by a bare affine when
// the dimensions differ. Hidden width equals the block output width.
// Weights use scaled-uniform fan-in initialization.
ResidualNet build_residual_mlp(int input_dim, const std::vector<int>& widths,
                               int num_classes, Rng& rng);

Affine init_affine(int in_dim, int out_dim, Rng& rng);

// y = x W + b for a batch of rows.
Eigen::MatrixXd apply_affine(const Affine& a, const Eigen::MatrixXd& x);

// The transform a block applies in its current state.
Eigen::MatrixXd block_transform(const BlockSpec& block, const Eigen::MatrixXd& x);

// Activations arriving at the given block: the input batch pushed through
// the lift (when present) and every earlier block in its current state.
Eigen::MatrixXd activations_entering(const ResidualNet& net, int block,
                                     const Eigen::MatrixXd& batch);

// Logits for a batch (rows are samples).
Eigen::MatrixXd forward(const ResidualNet& net, const Eigen::MatrixXd& batch);

struct BlockPair {
  int block = -1;
  Eigen::MatrixXd inputs;   // rows aligned with outputs
  Eigen::MatrixXd outputs;
};

struct Collected {
  Eigen::MatrixXd logits;
  Eigen::MatrixXd chain_input;   // activations entering the first block
  Eigen::MatrixXd chain_output;  // activations leaving the last block
  std::vector<BlockPair> pairs;  // one per eligible Active block
};

// Forward pass that also captures each eligible Active block's input and
// output activations, row-aligned with the batch.
Collected forward_collect(const ResidualNet& net, const Eigen::MatrixXd& batch);

// Marks an eligible Active block as removed. Removing a width-changing or
// already-removed block is an error.
void replace_with_identity(ResidualNet& net, int block);

// Undoes replace_with_identity; the retained weights become active again.
void restore_block(ResidualNet& net, int block);

// Creates the parallel affine path on a width-changing Active block. The
// adapter does not participate in forward() until commit_adapter flips the
// block to AdapterOnly; training it touches only the adapter weights.
void attach_adapter(ResidualNet& net, int block, Rng& rng);
void commit_adapter(ResidualNet& net, int block);

// Sequentially executed parametric layers on the input -> head path:
// 2 per Active block, 1 per AdapterOnly block, 0 per Identity block,
// 1 for the lift when present, 1 for the head.
int critical_path_length(const ResidualNet& net);

// Multiply-accumulate count per sample: sum of in*out over live affine
// layers (Identity blocks contribute nothing).
long long macs(const ResidualNet& net);

// Fraction of rows whose argmax logit equals the label.
double accuracy(const ResidualNet& net, const Eigen::MatrixXd& X,
                const std::vector<int>& y);

// Empirical Lipschitz lower bound: max over probe pairs of
// |T(x) - T(y)| / |x - y|. All pairs are used when their count fits the
// budget; otherwise a deterministic sample of pair_budget pairs is drawn.
// Probes with no two distinct points are an error.
double lipschitz_estimate(const ResidualNet& net, const Eigen::MatrixXd& probe,
                          int pair_budget);
double lipschitz_estimate_block(const BlockSpec& block, const Eigen::MatrixXd& probe,
                                int pair_budget);

// Versioned binary checkpoint (little-endian float64 arrays) plus a textual
// manifest at path + ".manifest.txt" mirroring the header.
void save_checkpoint(const ResidualNet& net, const std::string& path);
ResidualNet load_checkpoint(const std::string& path);

}  // namespace otslim
