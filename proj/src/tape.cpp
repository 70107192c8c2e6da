#include "otslim/tape.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace otslim::ad {

namespace {

void check_finite(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite()) throw std::invalid_argument(std::string(what) + ": non-finite values");
}

}  // namespace

NodeId Tape::push_leaf(Eigen::MatrixXd value, bool needs_grad) {
  check_finite(value, "tape leaf");
  Node n;
  n.grad = Eigen::MatrixXd::Zero(value.rows(), value.cols());
  n.value = std::move(value);
  n.tag = OpTag::Leaf;
  n.needs_grad = needs_grad;
  nodes_.push_back(std::move(n));
  return size() - 1;
}

NodeId Tape::push(OpTag tag, Eigen::MatrixXd value, std::vector<NodeId> parents,
                  std::function<void(Tape&, NodeId)> pull) {
  Node n;
  n.grad = Eigen::MatrixXd::Zero(value.rows(), value.cols());
  n.value = std::move(value);
  n.tag = tag;
  n.needs_grad = any_needs_grad(parents);
  n.parents = std::move(parents);
  n.pull = std::move(pull);
  nodes_.push_back(std::move(n));
  return size() - 1;
}

bool Tape::any_needs_grad(const std::vector<NodeId>& parents) const {
  return std::any_of(parents.begin(), parents.end(),
                     [this](NodeId p) { return at(p).needs_grad; });
}

NodeId Tape::matmul(NodeId x, NodeId w) {
  const auto& xv = value(x);
  const auto& wv = value(w);
  if (xv.cols() != wv.rows()) throw std::invalid_argument("matmul: inner dimensions differ");
  return push(OpTag::MatMul, xv * wv, {x, w}, [x, w](Tape& t, NodeId self) {
    const Eigen::MatrixXd& g = t.at(self).grad;
    t.at(x).grad.noalias() += g * t.value(w).transpose();
    t.at(w).grad.noalias() += t.value(x).transpose() * g;
  });
}

NodeId Tape::add_rowvec(NodeId x, NodeId b) {
  const auto& xv = value(x);
  const auto& bv = value(b);
  if (bv.rows() != 1 || bv.cols() != xv.cols())
    throw std::invalid_argument("add_rowvec: bias must be 1 x cols(x)");
  return push(OpTag::AddRowVec, xv.rowwise() + bv.row(0), {x, b},
              [x, b](Tape& t, NodeId self) {
                const Eigen::MatrixXd& g = t.at(self).grad;
                t.at(x).grad += g;
                t.at(b).grad += g.colwise().sum();
              });
}

NodeId Tape::add(NodeId a, NodeId b) {
  if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols())
    throw std::invalid_argument("add: shape mismatch");
  return push(OpTag::Add, value(a) + value(b), {a, b}, [a, b](Tape& t, NodeId self) {
    t.at(a).grad += t.at(self).grad;
    t.at(b).grad += t.at(self).grad;
  });
}

NodeId Tape::sub(NodeId a, NodeId b) {
  if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols())
    throw std::invalid_argument("sub: shape mismatch");
  return push(OpTag::Sub, value(a) - value(b), {a, b}, [a, b](Tape& t, NodeId self) {
    t.at(a).grad += t.at(self).grad;
    t.at(b).grad -= t.at(self).grad;
  });
}

NodeId Tape::relu(NodeId x) {
  return push(OpTag::Relu, value(x).cwiseMax(0.0), {x}, [x](Tape& t, NodeId self) {
    t.at(x).grad.array() +=
        t.at(self).grad.array() * (t.value(x).array() > 0.0).cast<double>();
  });
}

NodeId Tape::scale(NodeId x, double c) {
  return push(OpTag::Scale, value(x) * c, {x}, [x, c](Tape& t, NodeId self) {
    t.at(x).grad += t.at(self).grad * c;
  });
}

NodeId Tape::shift(NodeId x, double c) {
  return push(OpTag::Shift, (value(x).array() + c).matrix(), {x}, [x](Tape& t, NodeId self) {
    t.at(x).grad += t.at(self).grad;
  });
}

NodeId Tape::square(NodeId x) {
  return push(OpTag::Square, value(x).array().square().matrix(), {x}, [x](Tape& t, NodeId self) {
    t.at(x).grad.array() += t.at(self).grad.array() * 2.0 * t.value(x).array();
  });
}

NodeId Tape::abs(NodeId x) {
  return push(OpTag::Abs, value(x).cwiseAbs(), {x}, [x](Tape& t, NodeId self) {
    t.at(x).grad.array() += t.at(self).grad.array() * t.value(x).array().sign();
  });
}

NodeId Tape::sqrt_guarded(NodeId x) {
  return push(OpTag::SqrtGuard, value(x).cwiseMax(0.0).cwiseSqrt(), {x},
              [x](Tape& t, NodeId self) {
                const auto& xv = t.value(x).array();
                const auto& yv = t.at(self).value.array();
                // d sqrt/dx = 1/(2 sqrt(x)); defined as 0 at and below zero.
                t.at(x).grad.array() +=
                    (xv > 0.0).cast<double>() * t.at(self).grad.array() /
                    (2.0 * yv).max(1e-300);
              });
}

NodeId Tape::log(NodeId x) {
  if ((value(x).array() <= 0.0).any())
    throw std::invalid_argument("log: requires strictly positive entries");
  return push(OpTag::Log, value(x).array().log().matrix(), {x}, [x](Tape& t, NodeId self) {
    t.at(x).grad.array() += t.at(self).grad.array() / t.value(x).array();
  });
}

NodeId Tape::div(NodeId a, NodeId b) {
  if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols())
    throw std::invalid_argument("div: shape mismatch");
  if ((value(b).array() == 0.0).any())
    throw std::invalid_argument("div: zero denominator");
  return push(OpTag::Div, (value(a).array() / value(b).array()).matrix(), {a, b},
              [a, b](Tape& t, NodeId self) {
                const auto& g = t.at(self).grad.array();
                const auto& bv = t.value(b).array();
                t.at(a).grad.array() += g / bv;
                t.at(b).grad.array() -= g * t.value(a).array() / (bv * bv);
              });
}

NodeId Tape::exp_scale(NodeId x, double c) {
  return push(OpTag::ExpScale, (value(x).array() * c).exp().matrix(), {x},
              [x, c](Tape& t, NodeId self) {
                t.at(x).grad.array() +=
                    t.at(self).grad.array() * c * t.at(self).value.array();
              });
}

NodeId Tape::row_sum(NodeId x) {
  return push(OpTag::RowSum, value(x).rowwise().sum(), {x}, [x](Tape& t, NodeId self) {
    t.at(x).grad.colwise() += t.at(self).grad.col(0);
  });
}

NodeId Tape::col_mean(NodeId x) {
  const double n = static_cast<double>(value(x).rows());
  return push(OpTag::ColMean, value(x).colwise().mean(), {x},
              [x, n](Tape& t, NodeId self) {
                t.at(x).grad += (t.at(self).grad / n).replicate(t.value(x).rows(), 1);
              });
}

NodeId Tape::col_var(NodeId x, double floor) {
  const auto& xv = value(x);
  const double n = static_cast<double>(xv.rows());
  Eigen::RowVectorXd mean = xv.colwise().mean();
  Eigen::MatrixXd centered = xv.rowwise() - mean;
  Eigen::RowVectorXd var = centered.array().square().colwise().mean().matrix();
  Eigen::Array<bool, 1, Eigen::Dynamic> floored = var.array() < floor;
  Eigen::RowVectorXd out = var.cwiseMax(floor);
  return push(OpTag::ColVarFloor, out, {x},
              [x, n, centered, floored](Tape& t, NodeId self) {
                // d var_j / d x_ij = 2 (x_ij - mean_j) / n; zero when floored.
                const Eigen::MatrixXd& g = t.at(self).grad;
                for (Eigen::Index j = 0; j < g.cols(); ++j) {
                  if (floored(j)) continue;
                  t.at(x).grad.col(j) += (2.0 / n) * g(0, j) * centered.col(j);
                }
              });
}

NodeId Tape::mean_all(NodeId x) {
  const auto& xv = value(x);
  const double n = static_cast<double>(xv.size());
  Eigen::MatrixXd out(1, 1);
  out(0, 0) = xv.mean();
  return push(OpTag::MeanAll, out, {x}, [x, n](Tape& t, NodeId self) {
    t.at(x).grad.array() += t.at(self).grad(0, 0) / n;
  });
}

NodeId Tape::sum_all(NodeId x) {
  Eigen::MatrixXd out(1, 1);
  out(0, 0) = value(x).sum();
  return push(OpTag::SumAll, out, {x}, [x](Tape& t, NodeId self) {
    t.at(x).grad.array() += t.at(self).grad(0, 0);
  });
}

std::pair<NodeId, SortRecord> Tape::sort_column(NodeId x) {
  const auto& xv = value(x);
  if (xv.cols() != 1) throw std::invalid_argument("sort_column: expects a column vector");
  const int n = static_cast<int>(xv.rows());
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&xv](int a, int b) { return xv(a, 0) < xv(b, 0); });
  Eigen::MatrixXd sorted(n, 1);
  for (int i = 0; i < n; ++i) sorted(i, 0) = xv(order[static_cast<std::size_t>(i)], 0);
  NodeId id = push(OpTag::Sort, std::move(sorted), {x},
                   [x, order](Tape& t, NodeId self) {
                     // Scatter through the frozen permutation.
                     const Eigen::MatrixXd& g = t.at(self).grad;
                     for (int i = 0; i < static_cast<int>(order.size()); ++i)
                       t.at(x).grad(order[static_cast<std::size_t>(i)], 0) += g(i, 0);
                   });
  return {id, SortRecord{std::move(order)}};
}

NodeId Tape::softmax_cross_entropy(NodeId logits, const std::vector<int>& labels) {
  const auto& z = value(logits);
  const int n = static_cast<int>(z.rows());
  const int c = static_cast<int>(z.cols());
  if (static_cast<int>(labels.size()) != n)
    throw std::invalid_argument("softmax_cross_entropy: one label per row required");
  for (int y : labels)
    if (y < 0 || y >= c) throw std::invalid_argument("softmax_cross_entropy: label out of range");

  Eigen::MatrixXd probs(n, c);
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    double m = z.row(i).maxCoeff();
    Eigen::RowVectorXd e = (z.row(i).array() - m).exp();
    double s = e.sum();
    probs.row(i) = e / s;
    loss -= (z(i, labels[static_cast<std::size_t>(i)]) - m - std::log(s));
  }
  Eigen::MatrixXd out(1, 1);
  out(0, 0) = loss / n;
  return push(OpTag::SoftmaxXent, out, {logits},
              [logits, probs, labels, n](Tape& t, NodeId self) {
                double g = t.at(self).grad(0, 0);
                Eigen::MatrixXd d = probs;
                for (int i = 0; i < n; ++i)
                  d(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
                t.at(logits).grad += (g / n) * d;
              });
}

NodeId Tape::pair_sq_dist(NodeId x, NodeId y) {
  const auto& xv = value(x);
  const auto& yv = value(y);
  if (xv.cols() != yv.cols())
    throw std::invalid_argument("pair_sq_dist: row dimensions differ");
  const int n = static_cast<int>(xv.rows());
  const int m = static_cast<int>(yv.rows());
  Eigen::MatrixXd d(n, m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) d(i, j) = (xv.row(i) - yv.row(j)).squaredNorm();
  return push(OpTag::PairSqDist, std::move(d), {x, y}, [x, y](Tape& t, NodeId self) {
    const Eigen::MatrixXd& g = t.at(self).grad;
    const auto& xv = t.value(x);
    const auto& yv = t.value(y);
    for (Eigen::Index i = 0; i < xv.rows(); ++i)
      for (Eigen::Index j = 0; j < yv.rows(); ++j) {
        if (g(i, j) == 0.0) continue;
        Eigen::RowVectorXd diff = 2.0 * g(i, j) * (xv.row(i) - yv.row(j));
        t.at(x).grad.row(i) += diff;
        t.at(y).grad.row(j) -= diff;
      }
  });
}

void Tape::backward(NodeId root) {
  if (root < 0 || root >= size()) throw std::out_of_range("backward: bad root id");
  if (at(root).value.size() != 1)
    throw std::invalid_argument("backward: root must be a scalar");
  for (Node& n : nodes_) n.grad.setZero();
  at(root).grad(0, 0) = 1.0;
  for (NodeId id = root; id >= 0; --id) {
    Node& n = at(id);
    if (n.pull && n.needs_grad) n.pull(*this, id);
  }
}

}  // namespace otslim::ad
