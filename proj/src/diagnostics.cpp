#include "otslim/diagnostics.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "otslim/distances.hpp"

namespace otslim {

std::pair<double, bool> flagged_cosine(const std::vector<Eigen::MatrixXd>& a,
                                       const std::vector<Eigen::MatrixXd>& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("cosine: gradient collections differ in length");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].rows() != b[i].rows() || a[i].cols() != b[i].cols())
      throw std::invalid_argument("cosine: gradient shapes differ");
    dot += (a[i].array() * b[i].array()).sum();
    na += a[i].squaredNorm();
    nb += b[i].squaredNorm();
  }
  if (na == 0.0 || nb == 0.0) return {0.0, true};
  return {dot / (std::sqrt(na) * std::sqrt(nb)), false};
}

std::vector<AlignmentEntry> gradient_alignment(const ResidualNet& net,
                                               const Eigen::MatrixXd& X,
                                               const std::vector<int>& y,
                                               const TrainConfig& cfg,
                                               const DirectionSet& directions) {
  // Group labels parallel to the tape's weight-leaf order.
  std::vector<std::string> labels;
  if (net.lift) labels.push_back("lift");
  for (int k = 0; k < static_cast<int>(net.blocks.size()); ++k) {
    const BlockSpec& b = net.blocks[static_cast<std::size_t>(k)];
    std::ostringstream name;
    name << "block " << k;
    if (b.state == BlockState::Active) {
      labels.push_back(name.str());
      labels.push_back(name.str());  // fc1 and fc2 share the group
    } else if (b.state == BlockState::AdapterOnly) {
      labels.push_back(name.str());
    }
  }
  labels.push_back("head");

  TrainingTape tt = build_training_tape(net, X, y, cfg, directions, true);
  if (labels.size() != tt.weight_nodes.size())
    throw std::logic_error("weight group labels out of step with the tape");

  // Two backward sweeps over the same tape give both gradients at identical
  // forward values (backward re-zeroes all adjoints first).
  auto collect = [&tt](ad::NodeId root) {
    std::vector<Eigen::MatrixXd> grads;
    tt.tape.backward(root);
    for (std::size_t i = 0; i < tt.weight_nodes.size(); ++i) {
      grads.push_back(tt.tape.grad(tt.weight_nodes[i]));
      grads.push_back(tt.tape.grad(tt.bias_nodes[i]));
    }
    return grads;
  };

  std::vector<std::string> group_order;
  for (const std::string& l : labels)
    if (group_order.empty() || group_order.back() != l) group_order.push_back(l);

  std::vector<AlignmentEntry> out;
  if (tt.regularizer < 0) {  // no eligible blocks: the regularizer is absent
    for (const std::string& g : group_order)
      out.push_back(AlignmentEntry{g, 0.0, true});
    return out;
  }

  std::vector<Eigen::MatrixXd> loss_grads = collect(tt.data_loss);
  std::vector<Eigen::MatrixXd> reg_grads = collect(tt.regularizer);

  for (const std::string& g : group_order) {
    std::vector<Eigen::MatrixXd> gl, gr;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] != g) continue;
      gl.push_back(loss_grads[2 * i]);
      gl.push_back(loss_grads[2 * i + 1]);
      gr.push_back(reg_grads[2 * i]);
      gr.push_back(reg_grads[2 * i + 1]);
    }
    auto [cosine, flagged] = flagged_cosine(gl, gr);
    out.push_back(AlignmentEntry{g, cosine, flagged});
  }
  return out;
}

PointCloud one_hot_cloud(const std::vector<int>& labels, int num_classes) {
  if (num_classes < 2) throw std::invalid_argument("one-hot needs at least two classes");
  Eigen::MatrixXd rows =
      Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(labels.size()), num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes)
      throw std::invalid_argument("label outside [0, num_classes)");
    rows(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return PointCloud(rows);
}

TriangleBound triangle_bound_check(const ResidualNet& net, const Eigen::MatrixXd& batch,
                                   const PointCloud& target, const TrainConfig& cfg,
                                   Rng& rng) {
  // The chain and the target must share one space for the shared-direction
  // estimator's triangle inequality to apply term by term.
  int width = -1;
  for (const BlockSpec& b : net.blocks) {
    if (width < 0) width = b.in_dim;
    if (b.in_dim != width || b.out_dim != width)
      throw std::invalid_argument(
          "chained bound needs a uniform block width along the whole net");
  }
  if (width < 0) throw std::invalid_argument("net has no blocks to chain");
  if (target.dim() != width) {
    std::ostringstream msg;
    msg << "feature space width " << width << " does not match the label embedding "
        << "dimension " << target.dim();
    throw std::invalid_argument(msg.str());
  }
  if (target.size() != batch.rows())
    throw std::invalid_argument("target cloud must have one row per batch row");

  std::vector<Direction> dirs =
      cfg.distance_cfg.seed_mode.seeded
          ? [&] {
              Rng own(cfg.distance_cfg.seed_mode.seed);
              return sample_unit_directions(width, cfg.distance_cfg.n_proj, own);
            }()
          : sample_unit_directions(width, cfg.distance_cfg.n_proj, rng);

  // Walk the chain, accumulating each block's hop under the shared set.
  Eigen::MatrixXd h = batch;
  if (net.lift) {
    h = h * net.lift->W;
    h.rowwise() += net.lift->b;
  }
  const PointCloud first_input{Eigen::MatrixXd(h)};

  TriangleBound out;
  const double p = cfg.distance_cfg.p;
  double hops = 0.0;
  for (const BlockSpec& b : net.blocks) {
    Eigen::MatrixXd next = block_transform(b, h);
    hops += max_sliced_along(PointCloud(h), PointCloud(next), dirs, p).value;
    h = std::move(next);
  }
  out.lhs = max_sliced_along(first_input, target, dirs, p).value;
  out.rhs = hops + max_sliced_along(PointCloud(h), target, dirs, p).value;
  out.holds = out.lhs <= out.rhs + 1e-6;
  return out;
}

}  // namespace otslim
