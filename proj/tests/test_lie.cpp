#include <cmath>

#include "doctest.h"
#include "fieldalign/lie.hpp"
#include "fieldalign/rng.hpp"

using namespace fieldalign;

namespace {

// Independent oracle: truncated power series exp(A) = sum A^k / k!.
Eigen::Matrix3d series_exp(const Eigen::Matrix3d& a, int terms) {
  Eigen::Matrix3d sum = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d pow = Eigen::Matrix3d::Identity();
  double fact = 1.0;
  for (int k = 1; k <= terms; ++k) {
    pow = pow * a;
    fact *= k;
    sum += pow / fact;
  }
  return sum;
}

Sl3Param random_sl3(Rng& rng, double scale) {
  Sl3Param p;
  for (double& c : p.coeffs) c = rng.uniform(-scale, scale);
  return p;
}

Se3Param random_se3(Rng& rng, double scale) {
  Se3Param p;
  for (double& c : p.coeffs) c = rng.uniform(-scale, scale);
  return p;
}

}  // namespace

TEST_CASE("exp_sl3: identity, translation, determinant") {
  CHECK(exp_sl3(Sl3Param{}).isApprox(Eigen::Matrix3d::Identity(), 1e-15));

  Sl3Param trans;
  trans.coeffs[0] = 0.3;
  trans.coeffs[1] = -0.8;
  const Eigen::Matrix3d h = exp_sl3(trans);
  CHECK(h(0, 2) == doctest::Approx(0.3));
  CHECK(h(1, 2) == doctest::Approx(-0.8));
  CHECK(h.topLeftCorner<2, 2>().isApprox(Eigen::Matrix2d::Identity(), 1e-12));
  CHECK(h(2, 2) == doctest::Approx(1.0));

  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    const Sl3Param p = random_sl3(rng, 0.8);
    CHECK(std::abs(exp_sl3(p).determinant() - 1.0) < 1e-9);
  }
}

TEST_CASE("exp_sl3 agrees with 30-term series oracle") {
  Rng rng(17);
  for (int i = 0; i < 100; ++i) {
    const Sl3Param p = random_sl3(rng, 1.0 / std::sqrt(8.0));
    Eigen::Matrix3d a = Eigen::Matrix3d::Zero();
    for (int k = 0; k < 8; ++k) a += p.coeffs[k] * sl3_generator(k);
    CHECK((exp_sl3(p) - series_exp(a, 30)).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("log_sl3 inverts exp_sl3") {
  Rng rng(23);
  for (int i = 0; i < 50; ++i) {
    const Sl3Param p = random_sl3(rng, 0.4);
    const Sl3Param q = log_sl3(exp_sl3(p));
    for (int k = 0; k < 8; ++k)
      CHECK(q.coeffs[k] == doctest::Approx(p.coeffs[k]).epsilon(1e-8));
  }
}

TEST_CASE("exp_se3: identity and quarter turn") {
  const RigidTransform id = exp_se3(Se3Param{});
  CHECK(id.rotation.isApprox(Eigen::Matrix3d::Identity(), 1e-15));
  CHECK(id.translation.norm() == 0.0);

  Se3Param quarter;
  quarter.coeffs[5] = M_PI / 2;  // rotation about z
  const RigidTransform t = exp_se3(quarter);
  const Eigen::Vector3d mapped = t.apply({1, 0, 0});
  CHECK(mapped.x() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(mapped.y() == doctest::Approx(1.0));
  CHECK(mapped.z() == doctest::Approx(0.0));
}

TEST_CASE("exp_se3 rotations are orthonormal with unit determinant") {
  Rng rng(31);
  for (int i = 0; i < 100; ++i) {
    const RigidTransform t = exp_se3(random_se3(rng, 2.0));
    CHECK((t.rotation.transpose() * t.rotation - Eigen::Matrix3d::Identity())
              .cwiseAbs()
              .maxCoeff() < 1e-9);
    CHECK(std::abs(t.rotation.determinant() - 1.0) < 1e-9);
  }
}

TEST_CASE("log_se3 is the oracle inverse of exp_se3") {
  Rng rng(37);
  for (int i = 0; i < 100; ++i) {
    const RigidTransform t = exp_se3(random_se3(rng, 1.5));
    const RigidTransform back = exp_se3(log_se3(t.inverse()));
    const RigidTransform composed = t * back;
    CHECK((composed.rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <
          1e-8);
    CHECK(composed.translation.norm() < 1e-8);
  }
  // near-pi rotations exercise the axis-recovery branch
  for (int i = 0; i < 50; ++i) {
    Se3Param p;
    Eigen::Vector3d axis{rng.uniform(-1, 1), rng.uniform(-1, 1),
                         rng.uniform(-1, 1)};
    axis.normalize();
    const double angle = M_PI - rng.uniform(0.0, 1e-5);
    for (int k = 0; k < 3; ++k) {
      p.coeffs[k] = rng.uniform(-1, 1);
      p.coeffs[3 + k] = angle * axis[k];
    }
    const RigidTransform t = exp_se3(p);
    const RigidTransform rt = exp_se3(log_se3(t));
    CHECK((rt.rotation - t.rotation).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((rt.translation - t.translation).norm() < 1e-8);
  }
}

TEST_CASE("exp_se3 roundtrip identity within 1e-10") {
  Rng rng(41);
  for (int i = 0; i < 100; ++i) {
    const RigidTransform t = exp_se3(random_se3(rng, 1.0));
    const RigidTransform composed = t * t.inverse();
    CHECK((composed.rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <
          1e-10);
    CHECK(composed.translation.norm() < 1e-10);
  }
}

TEST_CASE("small-angle limit: exp_se3 ~ I + hat(p)") {
  Rng rng(43);
  for (int i = 0; i < 50; ++i) {
    Se3Param p = random_se3(rng, 1e-6);
    const RigidTransform t = exp_se3(p);
    const Eigen::Matrix3d lin =
        Eigen::Matrix3d::Identity() + hat3(p.rotation());
    CHECK((t.rotation - lin).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((t.translation - p.translation()).norm() < 1e-10);
  }
}

TEST_CASE("warp_2d: identity, translation, homogeneous-division oracle") {
  CHECK((warp_2d(Eigen::Matrix3d::Identity(), {0.3, -0.7}) -
         Eigen::Vector2d{0.3, -0.7})
            .norm() < 1e-15);

  Eigen::Matrix3d trans = Eigen::Matrix3d::Identity();
  trans(0, 2) = 1.2;
  trans(1, 2) = -0.4;
  CHECK((warp_2d(trans, {0, 0}) - Eigen::Vector2d{1.2, -0.4}).norm() < 1e-15);

  Rng rng(47);
  for (int i = 0; i < 100; ++i) {
    Eigen::Matrix3d h = Eigen::Matrix3d::Identity();
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) h(r, c) += rng.uniform(-0.3, 0.3);
    const Eigen::Vector2d x{rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const Eigen::Vector3d y = h * Eigen::Vector3d(x.x(), x.y(), 1.0);
    const Eigen::Vector2d expect{y.x() / y.z(), y.y() / y.z()};
    CHECK((warp_2d(h, x) - expect).norm() < 1e-12);
  }
}

TEST_CASE("warp_2d rejects degenerate homogeneous depth") {
  Eigen::Matrix3d h = Eigen::Matrix3d::Identity();
  h.row(2) << 0, 0, 0;
  CHECK_THROWS_AS(warp_2d(h, {0.1, 0.1}), std::runtime_error);
}

TEST_CASE("transform_3d: identity, translation, involution") {
  const Eigen::Vector3d x{0.4, -0.2, 1.1};
  CHECK((transform_3d(RigidTransform{}, x) - x).norm() == 0.0);

  RigidTransform t;
  t.translation = {1, 2, 3};
  CHECK((transform_3d(t, Eigen::Vector3d::Zero()) - t.translation).norm() == 0.0);

  Se3Param half_turn;
  half_turn.coeffs[5] = M_PI;
  const RigidTransform r = exp_se3(half_turn);
  CHECK((transform_3d(r, transform_3d(r, x)) - x).norm() < 1e-12);
}

TEST_CASE("tape exp maps agree with the plain implementations") {
  Rng rng(53);
  for (int i = 0; i < 25; ++i) {
    const Sl3Param p = random_sl3(rng, 0.7);
    Tape t;
    Mat pm(1, 8);
    for (int k = 0; k < 8; ++k) pm(0, k) = p.coeffs[k];
    const NodeId h = exp_sl3_node(t, t.constant(pm));
    const Eigen::Matrix3d plain = exp_sl3(p);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c)
        CHECK(t.value(h)(r, c) == doctest::Approx(plain(r, c)).epsilon(1e-12));
  }
  for (int i = 0; i < 25; ++i) {
    const Se3Param p = random_se3(rng, 1.2);
    Tape t;
    Mat pm(1, 6);
    for (int k = 0; k < 6; ++k) pm(0, k) = p.coeffs[k];
    const Se3Nodes n = exp_se3_node(t, t.constant(pm));
    const RigidTransform plain = exp_se3(p);
    for (int r = 0; r < 3; ++r) {
      CHECK(t.value(n.translation)(0, r) ==
            doctest::Approx(plain.translation[r]).epsilon(1e-12));
      for (int c = 0; c < 3; ++c)
        CHECK(t.value(n.rotation)(r, c) ==
              doctest::Approx(plain.rotation(r, c)).epsilon(1e-12));
    }
  }
}

TEST_CASE("warp and transform gradients w.r.t. Lie coefficients") {
  Rng rng(59);
  Mat grid(6, 2);
  for (Eigen::Index i = 0; i < grid.size(); ++i)
    grid.data()[i] = rng.uniform(-0.8, 0.8);
  Mat pts(6, 3);
  for (Eigen::Index i = 0; i < pts.size(); ++i)
    pts.data()[i] = rng.uniform(-1, 1);

  const GraphFn warp_fn = [&](Tape& t, NodeId p) {
    const NodeId h = exp_sl3_node(t, p);
    return t.sum(t.square(warp_2d_node(t, h, t.constant(grid))));
  };
  const GraphFn transform_fn = [&](Tape& t, NodeId p) {
    const Se3Nodes pose = exp_se3_node(t, p);
    return t.sum(t.square(transform_3d_node(t, pose, t.constant(pts))));
  };

  double worst_w = 0, worst_t = 0;
  for (int i = 0; i < 100; ++i) {
    Mat p8(1, 8), p6(1, 6);
    for (int k = 0; k < 8; ++k) p8(0, k) = rng.uniform(-0.4, 0.4);
    for (int k = 0; k < 6; ++k) p6(0, k) = rng.uniform(-1.0, 1.0);
    worst_w = std::max(worst_w, finite_diff_check(warp_fn, p8, 1e-6));
    worst_t = std::max(worst_t, finite_diff_check(transform_fn, p6, 1e-6));
  }
  CHECK(worst_w < 1e-5);
  CHECK(worst_t < 1e-5);
}
