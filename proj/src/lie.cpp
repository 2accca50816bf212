#include "fieldalign/lie.hpp"

#include <cmath>

#include <unsupported/Eigen/MatrixFunctions>

namespace fieldalign {

// Generator basis of sl(3). Only exp(p) enters any objective, so the ordering
// is a free choice; this one keeps translations first so a pure-translation
// warp reads off directly.
//   0: x-translation   E13
//   1: y-translation   E23
//   2: rotation        E21 - E12
//   3: shear           E12 + E21
//   4: aspect scaling  diag(1,-1,0)
//   5: scale vs depth  diag(1,1,-2)
//   6: perspective x   E31
//   7: perspective y   E32
Eigen::Matrix3d sl3_generator(int i) {
  Eigen::Matrix3d g = Eigen::Matrix3d::Zero();
  switch (i) {
    case 0: g(0, 2) = 1; break;
    case 1: g(1, 2) = 1; break;
    case 2: g(1, 0) = 1; g(0, 1) = -1; break;
    case 3: g(0, 1) = 1; g(1, 0) = 1; break;
    case 4: g(0, 0) = 1; g(1, 1) = -1; break;
    case 5: g(0, 0) = 1; g(1, 1) = 1; g(2, 2) = -2; break;
    case 6: g(2, 0) = 1; break;
    case 7: g(2, 1) = 1; break;
    default: throw std::invalid_argument("sl3_generator: index out of range");
  }
  return g;
}

Eigen::Matrix3d hat3(const Eigen::Vector3d& w) {
  Eigen::Matrix3d k;
  k << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
  return k;
}

namespace {

constexpr int kExpTaylorTerms = 12;

int squaring_steps(double norm1) {
  int s = 0;
  while (norm1 > 0.5 && s < 30) {
    norm1 *= 0.5;
    ++s;
  }
  return s;
}

Eigen::Matrix3d sl3_algebra(const Sl3Param& p) {
  Eigen::Matrix3d a = Eigen::Matrix3d::Zero();
  for (int i = 0; i < 8; ++i) a += p.coeffs[i] * sl3_generator(i);
  return a;
}

}  // namespace

Eigen::Matrix3d exp_sl3(const Sl3Param& p) {
  for (double c : p.coeffs)
    require(std::isfinite(c), "exp_sl3: non-finite coefficient");
  const Eigen::Matrix3d a = sl3_algebra(p);
  const int s = squaring_steps(a.cwiseAbs().colwise().sum().maxCoeff());
  const Eigen::Matrix3d as = a / std::pow(2.0, s);
  Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
  for (int k = kExpTaylorTerms; k >= 1; --k)
    r = Eigen::Matrix3d::Identity() + (as / k) * r;
  for (int i = 0; i < s; ++i) r = r * r;
  return r;
}

Sl3Param log_sl3(const Eigen::Matrix3d& h) {
  const Eigen::Matrix3d l = h.log();
  Sl3Param p;
  p.coeffs[0] = l(0, 2);
  p.coeffs[1] = l(1, 2);
  p.coeffs[2] = 0.5 * (l(1, 0) - l(0, 1));
  p.coeffs[3] = 0.5 * (l(1, 0) + l(0, 1));
  p.coeffs[4] = 0.5 * (l(0, 0) - l(1, 1));
  p.coeffs[5] = -0.5 * l(2, 2);
  p.coeffs[6] = l(2, 0);
  p.coeffs[7] = l(2, 1);
  return p;
}

// sin(t)/t, (1-cos t)/t^2, (t-sin t)/t^3 with series fallbacks near zero.
static void rodrigues_coeffs(double theta2, double* a, double* b, double* c) {
  if (theta2 < 1e-12) {
    *a = 1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0;
    *b = 0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0;
    *c = 1.0 / 6.0 - theta2 / 120.0 + theta2 * theta2 / 5040.0;
  } else {
    const double theta = std::sqrt(theta2);
    *a = std::sin(theta) / theta;
    *b = (1.0 - std::cos(theta)) / theta2;
    *c = (theta - std::sin(theta)) / (theta2 * theta);
  }
}

RigidTransform exp_se3(const Se3Param& p) {
  for (double v : p.coeffs)
    require(std::isfinite(v), "exp_se3: non-finite coefficient");
  const Eigen::Vector3d u = p.translation();
  const Eigen::Vector3d w = p.rotation();
  double a, b, c;
  rodrigues_coeffs(w.squaredNorm(), &a, &b, &c);
  const Eigen::Matrix3d k = hat3(w);
  const Eigen::Matrix3d k2 = k * k;
  RigidTransform t;
  t.rotation = Eigen::Matrix3d::Identity() + a * k + b * k2;
  const Eigen::Matrix3d v = Eigen::Matrix3d::Identity() + b * k + c * k2;
  t.translation = v * u;
  return t;
}

Se3Param log_se3(const RigidTransform& t) {
  const Eigen::Matrix3d& r = t.rotation;
  const double cos_theta =
      std::clamp(0.5 * (r.trace() - 1.0), -1.0, 1.0);
  const double theta = std::acos(cos_theta);

  Eigen::Vector3d w;
  if (theta < 1e-6) {
    // w ~ vee(R - R^T)/2 to leading order
    w = 0.5 * Eigen::Vector3d(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0),
                              r(1, 0) - r(0, 1));
  } else if (theta > M_PI - 1e-4) {
    // Near pi the antisymmetric part vanishes; recover the axis from the
    // symmetric part, (S - cos t I)/(1 - cos t) = n n^T, anchored at the
    // largest diagonal entry; fix the sign with vee(R - R^T).
    const Eigen::Matrix3d s = 0.5 * (r + r.transpose());
    const double one_minus_cos = 1.0 - cos_theta;
    Eigen::Vector3d n2;
    for (int i = 0; i < 3; ++i)
      n2[i] = std::max(0.0, (s(i, i) - cos_theta) / one_minus_cos);
    int anchor = 0;
    n2.maxCoeff(&anchor);
    Eigen::Vector3d axis = Eigen::Vector3d::Zero();
    axis[anchor] = std::sqrt(n2[anchor]);
    for (int i = 0; i < 3; ++i)
      if (i != anchor) axis[i] = s(anchor, i) / (one_minus_cos * axis[anchor]);
    axis.normalize();
    const Eigen::Vector3d vee(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0),
                              r(1, 0) - r(0, 1));
    if (axis.dot(vee) < 0.0) axis = -axis;
    w = theta * axis;
  } else {
    const Eigen::Vector3d vee(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0),
                              r(1, 0) - r(0, 1));
    w = (theta / (2.0 * std::sin(theta))) * vee;
  }

  const Eigen::Matrix3d k = hat3(w);
  const Eigen::Matrix3d k2 = k * k;
  const double theta2 = w.squaredNorm();
  double vinv_c;
  if (theta2 < 1e-12) {
    vinv_c = 1.0 / 12.0 + theta2 / 720.0;
  } else {
    const double th = std::sqrt(theta2);
    vinv_c = (1.0 - 0.5 * th * std::sin(th) / (1.0 - std::cos(th))) / theta2;
  }
  const Eigen::Matrix3d vinv =
      Eigen::Matrix3d::Identity() - 0.5 * k + vinv_c * k2;
  const Eigen::Vector3d u = vinv * t.translation;

  Se3Param p;
  p.coeffs = {u.x(), u.y(), u.z(), w.x(), w.y(), w.z()};
  return p;
}

Eigen::Vector2d warp_2d(const Eigen::Matrix3d& h, const Eigen::Vector2d& x) {
  const Eigen::Vector3d y = h * Eigen::Vector3d(x.x(), x.y(), 1.0);
  if (std::abs(y.z()) < 1e-12)
    throw std::runtime_error("warp_2d: degenerate warp (homogeneous depth ~ 0)");
  return {y.x() / y.z(), y.y() / y.z()};
}

Eigen::Vector3d transform_3d(const RigidTransform& t, const Eigen::Vector3d& x) {
  return t.apply(x);
}

// --- tape builders ---

namespace {

Mat to_mat(const Eigen::Matrix3d& m) {
  Mat out(3, 3);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out(r, c) = m(r, c);
  return out;
}

// sum_i coeff_i * basis_i with coeff a 1xK node
NodeId algebra_node(Tape& t, NodeId coeffs, const std::vector<Eigen::Matrix3d>& basis) {
  NodeId acc = -1;
  for (size_t i = 0; i < basis.size(); ++i) {
    const NodeId ci = t.select(coeffs, 0, static_cast<Eigen::Index>(i), 1, 1);
    const NodeId term = t.mul(t.broadcast(ci, 3, 3), t.constant(to_mat(basis[i])));
    acc = (acc < 0) ? term : t.add(acc, term);
  }
  return acc;
}

}  // namespace

NodeId exp_sl3_node(Tape& t, NodeId p) {
  const Mat& pv = t.value(p);
  require(pv.rows() == 1 && pv.cols() == 8, "exp_sl3_node: expected 1x8");
  require(all_finite(pv), "exp_sl3_node: non-finite coefficient");
  std::vector<Eigen::Matrix3d> basis;
  for (int i = 0; i < 8; ++i) basis.push_back(sl3_generator(i));
  const NodeId a = algebra_node(t, p, basis);

  const int s = squaring_steps(t.value(a).cwiseAbs().colwise().sum().maxCoeff());
  const NodeId as = t.mul(a, t.broadcast(t.scalar(std::pow(0.5, s)), 3, 3));
  const NodeId identity = t.constant(to_mat(Eigen::Matrix3d::Identity()));
  NodeId r = identity;
  for (int k = kExpTaylorTerms; k >= 1; --k) {
    const NodeId scaled = t.mul(as, t.broadcast(t.scalar(1.0 / k), 3, 3));
    r = t.add(identity, t.matmul(scaled, r));
  }
  for (int i = 0; i < s; ++i) r = t.matmul(r, r);
  return r;
}

Se3Nodes exp_se3_node(Tape& t, NodeId p) {
  const Mat& pv = t.value(p);
  require(pv.rows() == 1 && pv.cols() == 6, "exp_se3_node: expected 1x6");
  require(all_finite(pv), "exp_se3_node: non-finite coefficient");
  const NodeId u = t.select(p, 0, 0, 1, 3);
  const NodeId w = t.select(p, 0, 3, 1, 3);

  std::vector<Eigen::Matrix3d> so3_basis = {
      hat3({1, 0, 0}), hat3({0, 1, 0}), hat3({0, 0, 1})};
  const NodeId k = algebra_node(t, w, so3_basis);
  const NodeId k2 = t.matmul(k, k);

  const NodeId theta2 = t.sum(t.square(w));
  const double q = t.value(theta2)(0, 0);

  NodeId ca, cb, cc;
  if (q < 1e-12) {
    auto poly = [&](double c0, double c1, double c2) {
      const NodeId q2 = t.square(theta2);
      return t.add(t.scalar(c0), t.add(t.mul(theta2, t.scalar(c1)),
                                       t.mul(q2, t.scalar(c2))));
    };
    ca = poly(1.0, -1.0 / 6.0, 1.0 / 120.0);
    cb = poly(0.5, -1.0 / 24.0, 1.0 / 720.0);
    cc = poly(1.0 / 6.0, -1.0 / 120.0, 1.0 / 5040.0);
  } else {
    const NodeId theta = t.exp(t.mul(t.log(theta2), t.scalar(0.5)));
    const NodeId sin_t = t.sin(theta);
    const NodeId cos_t = t.cos(theta);
    ca = t.div(sin_t, theta);
    cb = t.div(t.sub(t.scalar(1.0), cos_t), theta2);
    cc = t.div(t.sub(theta, sin_t), t.mul(theta2, theta));
  }

  const NodeId identity = t.constant(to_mat(Eigen::Matrix3d::Identity()));
  auto axpy = [&](NodeId coeff, NodeId m1, NodeId coeff2, NodeId m2) {
    return t.add(identity, t.add(t.mul(t.broadcast(coeff, 3, 3), m1),
                                 t.mul(t.broadcast(coeff2, 3, 3), m2)));
  };
  const NodeId rot = axpy(ca, k, cb, k2);
  const NodeId v = axpy(cb, k, cc, k2);
  // (V u)^T as a row vector
  const NodeId trans = t.matmul(u, v, false, true);
  return {rot, trans};
}

NodeId warp_2d_node(Tape& t, NodeId h, NodeId x) {
  require(t.value(x).cols() == 2, "warp_2d_node: expected Bx2 coordinates");
  const Eigen::Index b = t.value(x).rows();
  const NodeId h_lin = t.select(h, 0, 0, 3, 2);   // columns acting on (x, y)
  const NodeId h_off = t.select(h, 0, 2, 3, 1);   // homogeneous column
  NodeId proj = t.add(t.matmul(x, h_lin, false, true),
                      t.broadcast(t.reshape(h_off, 1, 3), b, 3));
  const NodeId depth = t.select(proj, 0, 2, b, 1);
  if (t.value(depth).cwiseAbs().minCoeff() < 1e-12)
    throw std::runtime_error("warp_2d_node: degenerate warp (homogeneous depth ~ 0)");
  return t.div(t.select(proj, 0, 0, b, 2), t.broadcast(depth, b, 2));
}

NodeId transform_3d_node(Tape& t, const Se3Nodes& pose, NodeId x) {
  require(t.value(x).cols() == 3, "transform_3d_node: expected Bx3 points");
  const Eigen::Index b = t.value(x).rows();
  return t.add(t.matmul(x, pose.rotation, false, true),
               t.broadcast(pose.translation, b, 3));
}

}  // namespace fieldalign
