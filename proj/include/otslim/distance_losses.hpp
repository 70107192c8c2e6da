#pragma once

#include <span>

#include "otslim/distances.hpp"
#include "otslim/tape.hpp"

namespace otslim::ad {

// Differentiable distribution distances between two row sets already on a
// tape. Gradients flow into both arguments (and through them into any
// upstream weights). These operate at p = 2, the order used for training.

struct MswLoss {
  NodeId loss = -1;
  int argmax_direction = -1;  // index into the direction set
  SortRecord mu_order;
  SortRecord nu_order;
};

// Max-sliced W2 over an explicit direction set. The maximizing direction is
// located by a forward scan and only its branch is recorded, so the gradient
// is the envelope gradient at the attained maximum. Sort permutations are
// frozen at the forward pass, and the gradient is 0 when the distance
// vanishes.
MswLoss msw_loss(Tape& tape, NodeId mu_rows, NodeId nu_rows,
                 std::span<const Direction> dirs);

// Sliced W2 over a direction set: sqrt of the mean over directions of the
// mean squared sorted-projection difference. Every direction contributes to
// the gradient.
NodeId sliced_loss(Tape& tape, NodeId mu_rows, NodeId nu_rows,
                   std::span<const Direction> dirs);

// Mean row-paired l1 / l2 distances.
NodeId mean_l1_loss(Tape& tape, NodeId mu_rows, NodeId nu_rows);
NodeId mean_l2_loss(Tape& tape, NodeId mu_rows, NodeId nu_rows);

// Gaussian-kernel MMD (biased V-statistic, sqrt with negative clamp) at a
// fixed bandwidth; the bandwidth is treated as a constant of the loss.
NodeId mmd_loss(Tape& tape, NodeId mu_rows, NodeId nu_rows, double bandwidth);

// KL divergence between diagonal Gaussian fits of the two row sets, with
// population variances floored at 1e-8 (zero gradient through the floor).
NodeId kl_diag_loss(Tape& tape, NodeId mu_rows, NodeId nu_rows);

}  // namespace otslim::ad
