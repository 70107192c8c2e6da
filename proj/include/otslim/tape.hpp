#pragma once

#include <Eigen/Dense>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace otslim::ad {

enum class OpTag {
  Leaf,
  MatMul,
  AddRowVec,
  Add,
  Sub,
  Relu,
  Scale,
  Shift,
  Square,
  Abs,
  SqrtGuard,
  Log,
  Div,
  ExpScale,
  RowSum,
  ColMean,
  ColVarFloor,
  MeanAll,
  SumAll,
  Sort,
  SoftmaxXent,
  PairSqDist,
};

// Permutation recorded by a sort: order[i] is the input index of the i-th
// smallest element, a bijection on [0, n).
struct SortRecord {
  std::vector<int> order;
};

using NodeId = int;

// Reverse-mode tape over dense double matrices. Nodes are appended in
// forward order, which is also a topological order, so the backward pass is
// a reverse sweep. Scalars are 1x1 matrices. Gradient slots are
// zero-initialized at the start of every backward() call, so one tape can be
// differentiated repeatedly from different roots.
class Tape {
 public:
  // Leaves. Gradients are only tracked through nodes whose ancestry reaches
  // a differentiable leaf; constants terminate gradient flow.
  NodeId input(Eigen::MatrixXd value) { return push_leaf(std::move(value), true); }
  NodeId constant(Eigen::MatrixXd value) { return push_leaf(std::move(value), false); }

  // y = x * W, shapes (n,k) x (k,m).
  NodeId matmul(NodeId x, NodeId w);
  // y = x + b broadcast over rows; b is 1 x m.
  NodeId add_rowvec(NodeId x, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  // max(x, 0) elementwise; subgradient 0 at exactly 0.
  NodeId relu(NodeId x);
  NodeId scale(NodeId x, double c);
  NodeId shift(NodeId x, double c);
  NodeId square(NodeId x);
  // |x| elementwise; subgradient 0 at exactly 0.
  NodeId abs(NodeId x);
  // sqrt(max(x, 0)) elementwise; gradient defined as 0 wherever x <= 0.
  NodeId sqrt_guarded(NodeId x);
  // log(x) elementwise; requires strictly positive entries.
  NodeId log(NodeId x);
  // a ./ b elementwise; requires nonzero denominators.
  NodeId div(NodeId a, NodeId b);
  // exp(c * x) elementwise.
  NodeId exp_scale(NodeId x, double c);
  // (n,m) -> (n,1) row sums.
  NodeId row_sum(NodeId x);
  // (n,m) -> (1,m) column means.
  NodeId col_mean(NodeId x);
  // (n,m) -> (1,m) population column variances, floored elementwise;
  // gradient is 0 through floored entries.
  NodeId col_var(NodeId x, double floor);
  NodeId mean_all(NodeId x);
  NodeId sum_all(NodeId x);

  // Ascending sort of a column vector. The permutation is recorded at the
  // forward pass and treated as a constant in the backward pass: upstream
  // gradients are scattered back through it unchanged.
  std::pair<NodeId, SortRecord> sort_column(NodeId x);

  // Mean cross-entropy of row-wise softmax against integer labels,
  // stabilized with the log-sum-exp shift. Gradient to the logits is
  // (softmax - onehot) / n.
  NodeId softmax_cross_entropy(NodeId logits, const std::vector<int>& labels);

  // D(i,j) = |x_i - y_j|_2^2 between row sets, shapes (n,d) x (m,d) -> (n,m).
  NodeId pair_sq_dist(NodeId x, NodeId y);

  // Reverse sweep from a scalar root.
  void backward(NodeId root);

  const Eigen::MatrixXd& value(NodeId id) const { return at(id).value; }
  const Eigen::MatrixXd& grad(NodeId id) const { return at(id).grad; }
  OpTag tag(NodeId id) const { return at(id).tag; }
  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Eigen::MatrixXd value;
    Eigen::MatrixXd grad;
    OpTag tag = OpTag::Leaf;
    std::vector<NodeId> parents;
    std::function<void(Tape&, NodeId)> pull;  // accumulate into parents
    bool needs_grad = false;
  };

  const Node& at(NodeId id) const {
    if (id < 0 || id >= size()) throw std::out_of_range("tape node id out of range");
    return nodes_[static_cast<std::size_t>(id)];
  }
  Node& at(NodeId id) { return nodes_[static_cast<std::size_t>(id)]; }

  NodeId push_leaf(Eigen::MatrixXd value, bool needs_grad);
  NodeId push(OpTag tag, Eigen::MatrixXd value, std::vector<NodeId> parents,
              std::function<void(Tape&, NodeId)> pull);
  bool any_needs_grad(const std::vector<NodeId>& parents) const;

  std::vector<Node> nodes_;
};

}  // namespace otslim::ad
