#include "otslim/train.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "otslim/distance_losses.hpp"
#include "otslim/distances.hpp"

namespace otslim {

void TrainConfig::validate() const {
  if (lambda < 0.0) throw std::invalid_argument("lambda must be non-negative");
  if (epochs < 0) throw std::invalid_argument("epochs must be non-negative");
  if (batch_size < 2) throw std::invalid_argument("batch size must be at least 2");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (momentum < 0.0 || momentum >= 1.0)
    throw std::invalid_argument("momentum must lie in [0, 1)");
  if (mmd_bandwidth && !(*mmd_bandwidth > 0.0))
    throw std::invalid_argument("MMD bandwidth must be positive");
  distance_cfg.validate();
  const bool sliced_family =
      distance == Distance::MaxSliced || distance == Distance::Sliced;
  if (sliced_family && distance_cfg.p != 2.0)
    throw std::invalid_argument(
        "the differentiable sliced distances train at order 2 only");
}

DirectionSet make_direction_set(const std::vector<int>& dims,
                                const DistanceConfig& cfg, Rng& stream) {
  DirectionSet out;
  for (int d : dims) {
    if (out.count(d)) continue;
    if (cfg.seed_mode.seeded) {
      Rng own(cfg.seed_mode.seed);  // same derivation standalone evaluations use
      out[d] = sample_unit_directions(d, cfg.n_proj, own);
    } else {
      out[d] = sample_unit_directions(d, cfg.n_proj, stream);
    }
  }
  return out;
}

std::vector<int> eligible_widths(const ResidualNet& net) {
  std::vector<int> dims;
  for (const BlockSpec& b : net.blocks)
    if (b.eligible()) dims.push_back(b.out_dim);
  std::sort(dims.begin(), dims.end());
  dims.erase(std::unique(dims.begin(), dims.end()), dims.end());
  return dims;
}

std::vector<Affine*> live_affines(ResidualNet& net) {
  std::vector<Affine*> out;
  if (net.lift) out.push_back(&*net.lift);
  for (BlockSpec& b : net.blocks) {
    if (b.state == BlockState::Active) {
      out.push_back(&b.fc1);
      out.push_back(&b.fc2);
    } else if (b.state == BlockState::AdapterOnly) {
      out.push_back(&*b.adapter);
    }
  }
  out.push_back(&net.head);
  return out;
}

namespace {

using ad::NodeId;
using ad::Tape;

// Records one affine (y = x W + b) with trainable leaves.
NodeId tape_affine(TrainingTape& tt, const Affine& a, NodeId x) {
  NodeId W = tt.tape.input(a.W);
  NodeId b = tt.tape.input(Eigen::MatrixXd(a.b));
  tt.weight_nodes.push_back(W);
  tt.bias_nodes.push_back(b);
  return tt.tape.add_rowvec(tt.tape.matmul(x, W), b);
}

const std::vector<Direction>& directions_for_width(const DirectionSet& dirs, int d) {
  auto it = dirs.find(d);
  if (it == dirs.end() || it->second.empty()) {
    std::ostringstream msg;
    msg << "no projection directions provided for width " << d;
    throw std::invalid_argument(msg.str());
  }
  return it->second;
}

// The regularizer term for one eligible block already on the tape.
NodeId block_distance_node(TrainingTape& tt, const TrainConfig& cfg,
                           const DirectionSet& directions, NodeId in, NodeId out) {
  Tape& t = tt.tape;
  const int d = static_cast<int>(t.value(in).cols());
  switch (cfg.distance) {
    case Distance::MaxSliced: {
      if (cfg.distance_cfg.max_mode == MaxMode::ProjectedAscent) {
        // Locate the maximizing direction with the forward-only search and
        // record just that branch; the gradient at a maximum only flows
        // through the attained direction.
        PointCloud mu(t.value(in)), nu(t.value(out));
        Rng probe(cfg.distance_cfg.seed_mode.seeded ? cfg.distance_cfg.seed_mode.seed
                                                    : entropy_seed());
        MaxSlicedResult res =
            max_sliced_wasserstein(mu, nu, cfg.distance_cfg, probe);
        std::vector<Direction> best{res.direction};
        return ad::msw_loss(t, in, out, best).loss;
      }
      return ad::msw_loss(t, in, out, directions_for_width(directions, d)).loss;
    }
    case Distance::Sliced:
      return ad::sliced_loss(t, in, out, directions_for_width(directions, d));
    case Distance::MeanL1:
      return ad::mean_l1_loss(t, in, out);
    case Distance::MeanL2:
      return ad::mean_l2_loss(t, in, out);
    case Distance::Mmd: {
      double sigma = cfg.mmd_bandwidth
                         ? *cfg.mmd_bandwidth
                         : mmd_median_bandwidth(PointCloud(t.value(in)),
                                                PointCloud(t.value(out)));
      return ad::mmd_loss(t, in, out, sigma);
    }
    case Distance::KlDiagGaussian:
      return ad::kl_diag_loss(t, in, out);
  }
  throw std::logic_error("unhandled distance kind");
}

}  // namespace

TrainingTape build_training_tape(const ResidualNet& net, const Eigen::MatrixXd& X,
                                 const std::vector<int>& y, const TrainConfig& cfg,
                                 const DirectionSet& directions,
                                 bool with_regularizer) {
  if (X.rows() < 2) throw std::invalid_argument("a training batch needs at least 2 rows");
  if (X.cols() != net.input_dim)
    throw std::invalid_argument("batch width does not match the network input");

  TrainingTape tt;
  Tape& t = tt.tape;
  NodeId h = t.constant(X);
  if (net.lift) h = tape_affine(tt, *net.lift, h);

  std::vector<NodeId> block_terms;
  for (const BlockSpec& b : net.blocks) {
    switch (b.state) {
      case BlockState::Identity:
        break;  // pass-through: reuse h
      case BlockState::AdapterOnly:
        h = tape_affine(tt, *b.adapter, h);
        break;
      case BlockState::Active: {
        NodeId in = h;
        NodeId hidden = tape_affine(tt, b.fc1, in);
        if (b.activation == Activation::Relu) hidden = t.relu(hidden);
        NodeId f = tape_affine(tt, b.fc2, hidden);
        h = b.has_skip ? t.add(in, f) : f;
        if (with_regularizer && b.eligible())
          block_terms.push_back(block_distance_node(tt, cfg, directions, in, h));
        break;
      }
    }
  }
  tt.logits = tape_affine(tt, net.head, h);
  tt.data_loss = t.softmax_cross_entropy(tt.logits, y);

  if (!block_terms.empty()) {
    NodeId sum = block_terms[0];
    for (std::size_t i = 1; i < block_terms.size(); ++i)
      sum = t.add(sum, block_terms[i]);
    tt.regularizer = t.scale(sum, 1.0 / static_cast<double>(block_terms.size()));
    tt.objective = cfg.lambda == 0.0
                       ? tt.data_loss
                       : t.add(tt.data_loss, t.scale(tt.regularizer, cfg.lambda));
  } else {
    tt.objective = tt.data_loss;
  }
  return tt;
}

ObjectiveEval evaluate_objective(const ResidualNet& net, const Eigen::MatrixXd& X,
                                 const std::vector<int>& y, const TrainConfig& cfg,
                                 const DirectionSet& directions) {
  TrainingTape tt = build_training_tape(net, X, y, cfg, directions, true);
  tt.tape.backward(tt.objective);

  ObjectiveEval out;
  out.objective = tt.tape.value(tt.objective)(0, 0);
  out.data_loss = tt.tape.value(tt.data_loss)(0, 0);
  out.regularizer = tt.regularizer >= 0 ? tt.tape.value(tt.regularizer)(0, 0) : 0.0;
  out.grads.W.reserve(tt.weight_nodes.size());
  out.grads.b.reserve(tt.bias_nodes.size());
  for (NodeId w : tt.weight_nodes) out.grads.W.push_back(tt.tape.grad(w));
  for (NodeId b : tt.bias_nodes) out.grads.b.push_back(tt.tape.grad(b).row(0));
  return out;
}

double cloud_distance(const PointCloud& mu, const PointCloud& nu,
                      const TrainConfig& cfg, const DirectionSet& directions) {
  const int d = static_cast<int>(mu.dim());
  switch (cfg.distance) {
    case Distance::MaxSliced:
      if (cfg.distance_cfg.max_mode == MaxMode::ProjectedAscent) {
        Rng probe(cfg.distance_cfg.seed_mode.seeded ? cfg.distance_cfg.seed_mode.seed
                                                    : entropy_seed());
        return max_sliced_wasserstein(mu, nu, cfg.distance_cfg, probe).value;
      }
      return max_sliced_along(mu, nu, directions_for_width(directions, d),
                              cfg.distance_cfg.p)
          .value;
    case Distance::Sliced:
      return sliced_wasserstein_along(mu, nu, directions_for_width(directions, d),
                                      cfg.distance_cfg.p);
    case Distance::MeanL1:
      return mean_lp(mu, nu, 1);
    case Distance::MeanL2:
      return mean_lp(mu, nu, 2);
    case Distance::Mmd:
      return mmd_rbf(mu, nu, cfg.mmd_bandwidth);
    case Distance::KlDiagGaussian:
      return kl_diag_gaussian(mu, nu);
  }
  throw std::logic_error("unhandled distance kind");
}

double regularizer_value(const ResidualNet& net, const Eigen::MatrixXd& X,
                         const TrainConfig& cfg, const DirectionSet& directions) {
  Collected col = forward_collect(net, X);
  if (col.pairs.empty()) return 0.0;
  double sum = 0.0;
  for (const BlockPair& pair : col.pairs)
    sum += cloud_distance(PointCloud(pair.inputs), PointCloud(pair.outputs), cfg,
                          directions);
  return sum / static_cast<double>(col.pairs.size());
}

TrainLog train(ResidualNet& net, const Eigen::MatrixXd& X, const std::vector<int>& y,
               const TrainConfig& cfg) {
  cfg.validate();
  if (X.rows() != static_cast<Eigen::Index>(y.size()))
    throw std::invalid_argument("training needs one label per row");
  if (X.rows() < 2) throw std::invalid_argument("training needs at least two rows");

  // Independent streams so changing the direction draw cadence cannot
  // perturb the shuffle sequence and vice versa.
  Rng shuffle_rng(mix_seed(cfg.seed, 1));
  Rng direction_rng(mix_seed(cfg.seed, 2));

  const std::vector<int> dims = eligible_widths(net);
  DirectionSet directions = make_direction_set(dims, cfg.distance_cfg, direction_rng);
  const bool flowing = !cfg.distance_cfg.seed_mode.seeded;

  std::vector<Affine*> params = live_affines(net);
  std::vector<Eigen::MatrixXd> vel_W;
  std::vector<Eigen::RowVectorXd> vel_b;
  for (const Affine* a : params) {
    vel_W.push_back(Eigen::MatrixXd::Zero(a->W.rows(), a->W.cols()));
    vel_b.push_back(Eigen::RowVectorXd::Zero(a->b.size()));
  }

  const int n = static_cast<int>(X.rows());
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;

  TrainLog log;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (flowing && cfg.refresh == DirectionRefresh::PerEpoch)
      directions = make_direction_set(dims, cfg.distance_cfg, direction_rng);
    shuffle_rng.shuffle(perm);

    double loss_sum = 0.0, reg_sum = 0.0;
    long long rows_seen = 0;
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int rows = std::min(cfg.batch_size, n - start);
      if (rows < 2) continue;  // the distances need two rows; skip a lone leftover
      Eigen::MatrixXd Xb(rows, X.cols());
      std::vector<int> yb(static_cast<std::size_t>(rows));
      for (int r = 0; r < rows; ++r) {
        const int src = perm[static_cast<std::size_t>(start + r)];
        Xb.row(r) = X.row(src);
        yb[static_cast<std::size_t>(r)] = y[static_cast<std::size_t>(src)];
      }

      if (flowing && cfg.refresh == DirectionRefresh::PerMinibatch)
        directions = make_direction_set(dims, cfg.distance_cfg, direction_rng);

      ObjectiveEval eval = evaluate_objective(net, Xb, yb, cfg, directions);
      if (!std::isfinite(eval.objective)) {
        std::ostringstream msg;
        msg << "objective became non-finite at epoch " << epoch << ", batch row "
            << start << " (loss " << eval.data_loss << ", regularizer "
            << eval.regularizer << "); lower the learning rate or lambda";
        throw std::runtime_error(msg.str());
      }

      for (std::size_t k = 0; k < params.size(); ++k) {
        vel_W[k] = cfg.momentum * vel_W[k] + eval.grads.W[k];
        vel_b[k] = cfg.momentum * vel_b[k] + eval.grads.b[k];
        params[k]->W -= cfg.learning_rate * vel_W[k];
        params[k]->b -= cfg.learning_rate * vel_b[k];
      }
      loss_sum += eval.data_loss * rows;
      reg_sum += eval.regularizer * rows;
      rows_seen += rows;
    }

    EpochStats stats;
    stats.loss = rows_seen > 0 ? loss_sum / static_cast<double>(rows_seen) : 0.0;
    stats.reg = rows_seen > 0 ? reg_sum / static_cast<double>(rows_seen) : 0.0;
    stats.accuracy = accuracy(net, X, y);
    log.epochs.push_back(stats);
  }
  return log;
}

TrainLog heal(ResidualNet& net, const Eigen::MatrixXd& X, const std::vector<int>& y,
              const TrainConfig& cfg, int epochs) {
  TrainConfig tuned = cfg;
  tuned.lambda = 0.0;
  tuned.epochs = epochs;
  return train(net, X, y, tuned);
}

double fit_adapter(ResidualNet& net, int block, const Eigen::MatrixXd& X,
                   const TrainConfig& cfg) {
  cfg.validate();
  if (block < 0 || block >= static_cast<int>(net.blocks.size()))
    throw std::invalid_argument("block index out of range");
  BlockSpec& spec = net.blocks[static_cast<std::size_t>(block)];
  if (!spec.adapter)
    throw std::invalid_argument("the block has no attached adapter to fit");
  if (spec.state != BlockState::Active)
    throw std::invalid_argument("adapters are fitted while the block is still active");
  if (X.rows() < 2)
    throw std::invalid_argument("adapter fitting needs at least two rows");
  if (X.cols() != net.input_dim)
    throw std::invalid_argument("batch width does not match the network input");

  // The block's inputs and its frozen outputs are constants of the fit.
  const Eigen::MatrixXd inputs = activations_entering(net, block, X);
  const Eigen::MatrixXd targets = block_transform(spec, inputs);
  const int d = spec.out_dim;

  Rng shuffle_rng(mix_seed(cfg.seed, 1));
  Rng direction_rng(mix_seed(cfg.seed, 2));
  DirectionSet directions = make_direction_set({d}, cfg.distance_cfg, direction_rng);
  const bool flowing = !cfg.distance_cfg.seed_mode.seeded;

  Eigen::MatrixXd vel_W =
      Eigen::MatrixXd::Zero(spec.adapter->W.rows(), spec.adapter->W.cols());
  Eigen::RowVectorXd vel_b = Eigen::RowVectorXd::Zero(spec.adapter->b.size());

  const int n = static_cast<int>(X.rows());
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;

  // The loss rides the extreme direction of the moment, so a fixed step size
  // leaves the weights circling a floor proportional to it. Decay the rate
  // geometrically to 1% of its starting value by the final epoch.
  const double decay =
      cfg.epochs > 1 ? std::pow(0.01, 1.0 / static_cast<double>(cfg.epochs - 1)) : 1.0;
  double lr = cfg.learning_rate;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (flowing && cfg.refresh == DirectionRefresh::PerEpoch)
      directions = make_direction_set({d}, cfg.distance_cfg, direction_rng);
    shuffle_rng.shuffle(perm);
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int rows = std::min(cfg.batch_size, n - start);
      if (rows < 2) continue;
      Eigen::MatrixXd in_b(rows, inputs.cols());
      Eigen::MatrixXd tgt_b(rows, targets.cols());
      for (int r = 0; r < rows; ++r) {
        const int src = perm[static_cast<std::size_t>(start + r)];
        in_b.row(r) = inputs.row(src);
        tgt_b.row(r) = targets.row(src);
      }
      if (flowing && cfg.refresh == DirectionRefresh::PerMinibatch)
        directions = make_direction_set({d}, cfg.distance_cfg, direction_rng);

      TrainingTape tt;
      NodeId x = tt.tape.constant(in_b);
      NodeId pred = tape_affine(tt, *spec.adapter, x);
      NodeId tgt = tt.tape.constant(tgt_b);
      NodeId loss = block_distance_node(tt, cfg, directions, pred, tgt);
      tt.tape.backward(loss);
      const double val = tt.tape.value(loss)(0, 0);
      if (!std::isfinite(val)) {
        std::ostringstream msg;
        msg << "adapter objective became non-finite at epoch " << epoch
            << ", batch row " << start << "; lower the learning rate";
        throw std::runtime_error(msg.str());
      }
      vel_W = cfg.momentum * vel_W + tt.tape.grad(tt.weight_nodes[0]);
      vel_b = cfg.momentum * vel_b + tt.tape.grad(tt.bias_nodes[0]).row(0);
      spec.adapter->W -= lr * vel_W;
      spec.adapter->b -= lr * vel_b;
    }
    lr *= decay;
  }

  if (flowing) directions = make_direction_set({d}, cfg.distance_cfg, direction_rng);
  return cloud_distance(PointCloud(apply_affine(*spec.adapter, inputs)),
                        PointCloud(targets), cfg, directions);
}

}  // namespace otslim
