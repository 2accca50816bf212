#include "fieldalign/tape.hpp"

#include <cmath>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace fieldalign {

#if defined(__GLIBC__)
namespace {
// Node values are MB-scale buffers churned every optimization step. Keep
// freed blocks on the heap instead of handing pages back to the kernel,
// otherwise every step pays the zero-fill fault cost again.
const bool malloc_tuned = [] {
  mallopt(M_MMAP_THRESHOLD, 256 * 1024 * 1024);
  mallopt(M_TRIM_THRESHOLD, 256 * 1024 * 1024);
  return true;
}();
}  // namespace
#endif

const Mat& GradMap::at(NodeId id) const {
  for (const auto& [k, v] : entries_)
    if (k == id) return v;
  throw std::invalid_argument("GradMap: no gradient recorded for node " +
                              std::to_string(id));
}

bool GradMap::contains(NodeId id) const {
  for (const auto& [k, v] : entries_)
    if (k == id) return true;
  return false;
}

NodeId Tape::leaf(Mat v, bool needs_grad) {
  Node n;
  n.op = Op::Input;
  n.value = std::move(v);
  n.needs_grad = needs_grad;
  return push(std::move(n));
}

NodeId Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::scalar(double v) {
  Mat m(1, 1);
  m(0, 0) = v;
  return constant(std::move(m));
}

static void check_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(op) + ": shape mismatch (" +
                                std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " vs " +
                                std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
}

#define BINARY_PROLOGUE(name)                       \
  const Mat& va = nodes_[a].value;                  \
  const Mat& vb = nodes_[b].value;                  \
  check_same_shape(va, vb, name);                   \
  Node n;                                           \
  n.a = a;                                          \
  n.b = b;                                          \
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad

#define UNARY_PROLOGUE      \
  const Mat& va = nodes_[a].value; \
  Node n;                   \
  n.a = a;                  \
  n.needs_grad = nodes_[a].needs_grad

NodeId Tape::add(NodeId a, NodeId b) {
  BINARY_PROLOGUE("add");
  n.op = Op::Add;
  n.value = va + vb;
  return push(std::move(n));
}

NodeId Tape::sub(NodeId a, NodeId b) {
  BINARY_PROLOGUE("sub");
  n.op = Op::Sub;
  n.value = va - vb;
  return push(std::move(n));
}

NodeId Tape::mul(NodeId a, NodeId b) {
  BINARY_PROLOGUE("mul");
  n.op = Op::Mul;
  n.value = va.cwiseProduct(vb);
  return push(std::move(n));
}

NodeId Tape::div(NodeId a, NodeId b) {
  BINARY_PROLOGUE("div");
  n.op = Op::Div;
  n.value = va.cwiseQuotient(vb);
  return push(std::move(n));
}

NodeId Tape::matmul(NodeId a, NodeId b, bool trans_a, bool trans_b) {
  const Mat& va = nodes_[a].value;
  const Mat& vb = nodes_[b].value;
  const Eigen::Index ka = trans_a ? va.rows() : va.cols();
  const Eigen::Index kb = trans_b ? vb.cols() : vb.rows();
  if (ka != kb) throw std::invalid_argument("matmul: inner dimension mismatch");
  Node n;
  n.op = Op::MatMul;
  n.a = a;
  n.b = b;
  n.trans_a = trans_a;
  n.trans_b = trans_b;
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  if (!trans_a && !trans_b)
    n.value.noalias() = va * vb;
  else if (trans_a && !trans_b)
    n.value.noalias() = va.transpose() * vb;
  else if (!trans_a && trans_b)
    n.value.noalias() = va * vb.transpose();
  else
    n.value.noalias() = va.transpose() * vb.transpose();
  return push(std::move(n));
}

NodeId Tape::sin(NodeId a) {
  UNARY_PROLOGUE;
  n.op = Op::Sin;
  n.value = va.array().sin().matrix();
  return push(std::move(n));
}

NodeId Tape::cos(NodeId a) {
  UNARY_PROLOGUE;
  n.op = Op::Cos;
  n.value = va.array().cos().matrix();
  return push(std::move(n));
}

NodeId Tape::exp(NodeId a) {
  UNARY_PROLOGUE;
  n.op = Op::Exp;
  n.value = va.array().exp().matrix();
  return push(std::move(n));
}

NodeId Tape::log(NodeId a) {
  UNARY_PROLOGUE;
  n.op = Op::Log;
  n.value = va.array().log().matrix();
  return push(std::move(n));
}

NodeId Tape::relu(NodeId a) {
  UNARY_PROLOGUE;
  n.op = Op::Relu;
  n.value = va.cwiseMax(0.0);
  return push(std::move(n));
}

// log1p(exp(x)) for x <= 0, x + log1p(exp(-x)) otherwise; no overflow.
static double softplus_scalar(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

NodeId Tape::softplus(NodeId a) {
  UNARY_PROLOGUE;
  n.op = Op::Softplus;
  n.value = va.unaryExpr([](double x) { return softplus_scalar(x); });
  return push(std::move(n));
}

NodeId Tape::sum(NodeId a, Reduce axis) {
  UNARY_PROLOGUE;
  n.op = Op::Sum;
  n.axis = axis;
  switch (axis) {
    case Reduce::All: {
      Mat m(1, 1);
      m(0, 0) = va.sum();
      n.value = std::move(m);
      break;
    }
    case Reduce::Rows:
      n.value = va.colwise().sum();
      break;
    case Reduce::Cols:
      n.value = va.rowwise().sum();
      break;
  }
  return push(std::move(n));
}

NodeId Tape::broadcast(NodeId a, Eigen::Index rows, Eigen::Index cols) {
  UNARY_PROLOGUE;
  const bool row_rep = va.rows() == 1 && rows >= 1 && va.cols() == cols;
  const bool col_rep = va.cols() == 1 && cols >= 1 && va.rows() == rows;
  const bool scalar_rep = va.rows() == 1 && va.cols() == 1;
  if (!row_rep && !col_rep && !scalar_rep)
    throw std::invalid_argument("broadcast: source must be 1xC, Rx1 or 1x1");
  n.op = Op::Broadcast;
  if (scalar_rep)
    n.value = Mat::Constant(rows, cols, va(0, 0));
  else if (row_rep)
    n.value = va.replicate(rows, 1);
  else
    n.value = va.replicate(1, cols);
  return push(std::move(n));
}

NodeId Tape::reshape(NodeId a, Eigen::Index rows, Eigen::Index cols) {
  UNARY_PROLOGUE;
  if (va.size() != rows * cols)
    throw std::invalid_argument("reshape: element count mismatch");
  n.op = Op::Reshape;
  n.value = Eigen::Map<const Mat>(va.data(), rows, cols);
  return push(std::move(n));
}

NodeId Tape::select(NodeId a, Eigen::Index r0, Eigen::Index c0,
                    Eigen::Index rows, Eigen::Index cols) {
  UNARY_PROLOGUE;
  if (r0 < 0 || c0 < 0 || r0 + rows > va.rows() || c0 + cols > va.cols())
    throw std::invalid_argument("select: block out of range");
  n.op = Op::Select;
  n.r0 = static_cast<int>(r0);
  n.c0 = static_cast<int>(c0);
  n.value = va.block(r0, c0, rows, cols);
  return push(std::move(n));
}

NodeId Tape::neg(NodeId a) {
  UNARY_PROLOGUE;
  n.op = Op::Neg;
  n.value = -va;
  return push(std::move(n));
}

NodeId Tape::square(NodeId a) {
  UNARY_PROLOGUE;
  n.op = Op::Square;
  n.value = va.cwiseProduct(va);
  return push(std::move(n));
}

NodeId Tape::sigmoid(NodeId a) { return exp(neg(softplus(neg(a)))); }

GradMap Tape::backward(NodeId root, std::span<const NodeId> wrt) const {
  if (root < 0 || root >= static_cast<NodeId>(nodes_.size()))
    throw std::invalid_argument("backward: invalid root node");
  const Mat& rv = nodes_[root].value;
  if (rv.rows() != 1 || rv.cols() != 1)
    throw std::invalid_argument("backward: root must be scalar (1x1)");

  std::vector<Mat> adj(nodes_.size());
  std::vector<bool> live(nodes_.size(), false);
  adj[root] = Mat::Ones(1, 1);
  live[root] = true;

  auto accum = [&](NodeId id, const auto& g) {
    if (!nodes_[id].needs_grad) return;
    if (!live[id]) {
      adj[id] = g;
      live[id] = true;
    } else {
      adj[id] += g;
    }
  };

  for (NodeId i = root; i >= 0; --i) {
    if (!live[i] || !nodes_[i].needs_grad) continue;
    const Node& n = nodes_[i];
    const Mat& g = adj[i];
    switch (n.op) {
      case Op::Input:
        break;
      case Op::Add:
        accum(n.a, g);
        accum(n.b, g);
        break;
      case Op::Sub:
        accum(n.a, g);
        accum(n.b, -g);
        break;
      case Op::Mul:
        accum(n.a, g.cwiseProduct(nodes_[n.b].value));
        accum(n.b, g.cwiseProduct(nodes_[n.a].value));
        break;
      case Op::Div: {
        const Mat& vb = nodes_[n.b].value;
        accum(n.a, g.cwiseQuotient(vb));
        accum(n.b, (-g.cwiseProduct(n.value)).cwiseQuotient(vb));
        break;
      }
      case Op::MatMul: {
        const Mat& va = nodes_[n.a].value;
        const Mat& vb = nodes_[n.b].value;
        if (nodes_[n.a].needs_grad) {
          Mat da;
          if (!n.trans_a && !n.trans_b)
            da.noalias() = g * vb.transpose();
          else if (!n.trans_a && n.trans_b)
            da.noalias() = g * vb;
          else if (n.trans_a && !n.trans_b)
            da.noalias() = vb * g.transpose();
          else
            da.noalias() = vb.transpose() * g.transpose();
          accum(n.a, da);
        }
        if (nodes_[n.b].needs_grad) {
          Mat db;
          if (!n.trans_a && !n.trans_b)
            db.noalias() = va.transpose() * g;
          else if (!n.trans_a && n.trans_b)
            db.noalias() = g.transpose() * va;
          else if (n.trans_a && !n.trans_b)
            db.noalias() = va * g;
          else
            db.noalias() = g.transpose() * va.transpose();
          accum(n.b, db);
        }
        break;
      }
      case Op::Sin:
        accum(n.a, g.cwiseProduct(nodes_[n.a].value.array().cos().matrix()));
        break;
      case Op::Cos:
        accum(n.a, -g.cwiseProduct(nodes_[n.a].value.array().sin().matrix()));
        break;
      case Op::Exp:
        accum(n.a, g.cwiseProduct(n.value));
        break;
      case Op::Log:
        accum(n.a, g.cwiseQuotient(nodes_[n.a].value));
        break;
      case Op::Relu: {
        // subgradient at 0 is 0
        const Mat mask =
            (nodes_[n.a].value.array() > 0.0).cast<double>().matrix();
        accum(n.a, g.cwiseProduct(mask));
        break;
      }
      case Op::Softplus: {
        const Mat s = nodes_[n.a].value.unaryExpr(
            [](double x) { return x > 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                          : std::exp(x) / (1.0 + std::exp(x)); });
        accum(n.a, g.cwiseProduct(s));
        break;
      }
      case Op::Sum: {
        const Mat& va = nodes_[n.a].value;
        switch (n.axis) {
          case Reduce::All:
            accum(n.a, Mat::Constant(va.rows(), va.cols(), g(0, 0)));
            break;
          case Reduce::Rows:
            accum(n.a, g.replicate(va.rows(), 1));
            break;
          case Reduce::Cols:
            accum(n.a, g.replicate(1, va.cols()));
            break;
        }
        break;
      }
      case Op::Broadcast: {
        const Mat& va = nodes_[n.a].value;
        if (va.rows() == 1 && va.cols() == 1) {
          Mat s(1, 1);
          s(0, 0) = g.sum();
          accum(n.a, s);
        } else if (va.rows() == 1) {
          accum(n.a, g.colwise().sum());
        } else {
          accum(n.a, g.rowwise().sum());
        }
        break;
      }
      case Op::Reshape: {
        const Mat& va = nodes_[n.a].value;
        accum(n.a, Eigen::Map<const Mat>(g.data(), va.rows(), va.cols()));
        break;
      }
      case Op::Select: {
        const Mat& va = nodes_[n.a].value;
        Mat da = Mat::Zero(va.rows(), va.cols());
        da.block(n.r0, n.c0, g.rows(), g.cols()) = g;
        accum(n.a, da);
        break;
      }
      case Op::Neg:
        accum(n.a, -g);
        break;
      case Op::Square:
        accum(n.a, 2.0 * g.cwiseProduct(nodes_[n.a].value));
        break;
    }
  }

  GradMap out;
  for (NodeId id : wrt) {
    if (id < 0 || id >= static_cast<NodeId>(nodes_.size()))
      throw std::invalid_argument("backward: invalid wrt node");
    const Mat& v = nodes_[id].value;
    if (live[id])
      out.put(id, adj[id]);
    else
      out.put(id, Mat::Zero(v.rows(), v.cols()));
  }
  return out;
}

double finite_diff_check(const GraphFn& fn, const Mat& point, double eps) {
  require(eps > 0.0, "finite_diff_check: eps must be positive");

  auto eval = [&](const Mat& p) {
    Tape t;
    const NodeId x = t.input(p);
    const NodeId root = fn(t, x);
    const Mat& v = t.value(root);
    if (v.rows() != 1 || v.cols() != 1)
      throw std::invalid_argument("finite_diff_check: fn must return a scalar");
    if (!std::isfinite(v(0, 0)))
      throw std::runtime_error("finite_diff_check: non-finite function value");
    return v(0, 0);
  };

  Tape t;
  const NodeId x = t.input(point);
  const NodeId root = fn(t, x);
  const NodeId wrt[] = {x};
  const Mat analytic = t.backward(root, wrt).at(x);

  double worst = 0.0;
  Mat p = point;
  for (Eigen::Index r = 0; r < point.rows(); ++r) {
    for (Eigen::Index c = 0; c < point.cols(); ++c) {
      const double orig = p(r, c);
      p(r, c) = orig + eps;
      const double f_plus = eval(p);
      p(r, c) = orig - eps;
      const double f_minus = eval(p);
      p(r, c) = orig;
      const double fd = (f_plus - f_minus) / (2.0 * eps);
      const double a = analytic(r, c);
      const double err = std::abs(a - fd) / std::max(1.0, std::abs(a));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace fieldalign
