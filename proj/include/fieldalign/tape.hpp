#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "fieldalign/tensor.hpp"

namespace fieldalign {

using NodeId = int32_t;

enum class Op : uint8_t {
  Input,
  Add,
  Sub,
  Mul,
  MatMul,
  Sin,
  Cos,
  Exp,
  Log,
  Relu,
  Softplus,
  Sum,
  Broadcast,
  Reshape,
  Select,
  Div,
  Neg,
  Square,
};

enum class Reduce : uint8_t { All, Rows, Cols };

// Gradients of a scalar root w.r.t. requested inputs, in request order.
// Unreachable inputs carry an all-zero gradient of the input's shape.
class GradMap {
 public:
  void put(NodeId id, Mat g) { entries_.emplace_back(id, std::move(g)); }
  const Mat& at(NodeId id) const;
  bool contains(NodeId id) const;
  size_t size() const { return entries_.size(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::vector<std::pair<NodeId, Mat>> entries_;
};

// Single-use computation graph, rebuilt per optimization step. Values are
// computed eagerly at node creation; backward replays the graph in reverse.
// One Tape per thread; independent tapes may run concurrently.
class Tape {
 public:
  struct Node {
    Op op;
    NodeId a = -1;
    NodeId b = -1;
    Mat value;
    // op parameters
    bool trans_a = false, trans_b = false;  // MatMul
    Reduce axis = Reduce::All;              // Sum
    int r0 = 0, c0 = 0;                     // Select offset
    bool needs_grad = false;
  };

  NodeId input(Mat v) { return leaf(std::move(v), true); }
  NodeId constant(Mat v) { return leaf(std::move(v), false); }
  NodeId scalar(double v);

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId div(NodeId a, NodeId b);
  NodeId matmul(NodeId a, NodeId b, bool trans_a = false, bool trans_b = false);
  NodeId sin(NodeId a);
  NodeId cos(NodeId a);
  NodeId exp(NodeId a);
  NodeId log(NodeId a);
  NodeId relu(NodeId a);
  NodeId softplus(NodeId a);
  NodeId sum(NodeId a, Reduce axis = Reduce::All);
  NodeId broadcast(NodeId a, Eigen::Index rows, Eigen::Index cols);
  NodeId reshape(NodeId a, Eigen::Index rows, Eigen::Index cols);
  NodeId select(NodeId a, Eigen::Index r0, Eigen::Index c0, Eigen::Index rows,
                Eigen::Index cols);
  NodeId neg(NodeId a);
  NodeId square(NodeId a);

  // exp(-softplus(-x)); overflow-free sigmoid composed from tape ops
  NodeId sigmoid(NodeId a);

  const Mat& value(NodeId id) const { return nodes_[id].value; }
  const Node& node(NodeId id) const { return nodes_[id]; }
  size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  // root must be 1x1. Repeated use of a node accumulates adjoints additively.
  GradMap backward(NodeId root, std::span<const NodeId> wrt) const;

 private:
  NodeId leaf(Mat v, bool needs_grad);
  NodeId push(Node n);
  // deque keeps value() references stable across later node pushes
  std::deque<Node> nodes_;
};

// Max over coordinates of |analytic - central difference| / max(1, |analytic|)
// for a scalar graph built from one input row vector. The analytic side comes
// from Tape::backward; the differences re-run the forward pass only.
using GraphFn = std::function<NodeId(Tape&, NodeId)>;
double finite_diff_check(const GraphFn& fn, const Mat& point, double eps);

}  // namespace fieldalign
