#pragma once

#include <array>
#include <string>
#include <vector>

#include "fieldalign/tape.hpp"

namespace fieldalign {

// sl(3) coefficients in the fixed generator basis documented in lie.cpp:
// [tx, ty, rotation, shear, aspect, scale/perspective-balance, persp-x, persp-y]
struct Sl3Param {
  std::array<double, 8> coeffs{};
};

// se(3) coefficients: translation block first, then axis-angle rotation block.
struct Se3Param {
  std::array<double, 6> coeffs{};

  Eigen::Vector3d translation() const {
    return {coeffs[0], coeffs[1], coeffs[2]};
  }
  Eigen::Vector3d rotation() const { return {coeffs[3], coeffs[4], coeffs[5]}; }
};

struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  RigidTransform inverse() const {
    RigidTransform out;
    out.rotation = rotation.transpose();
    out.translation = -(rotation.transpose() * translation);
    return out;
  }
  // this ∘ other: apply other first
  RigidTransform operator*(const RigidTransform& other) const {
    RigidTransform out;
    out.rotation = rotation * other.rotation;
    out.translation = rotation * other.translation + translation;
    return out;
  }
  Eigen::Vector3d apply(const Eigen::Vector3d& x) const {
    return rotation * x + translation;
  }
};

// Ordered rigid transforms with frame identifiers. The convention
// (camera-to-world vs extrinsic) is owned by the caller.
struct PoseSet {
  std::vector<std::string> ids;
  std::vector<RigidTransform> poses;

  size_t size() const { return poses.size(); }
};

Eigen::Matrix3d sl3_generator(int i);
Eigen::Matrix3d hat3(const Eigen::Vector3d& w);

Eigen::Matrix3d exp_sl3(const Sl3Param& p);
Sl3Param log_sl3(const Eigen::Matrix3d& h);

RigidTransform exp_se3(const Se3Param& p);
Se3Param log_se3(const RigidTransform& t);

// Projective warp of pixel coordinates; throws on |third coordinate| < 1e-12.
Eigen::Vector2d warp_2d(const Eigen::Matrix3d& h, const Eigen::Vector2d& x);
Eigen::Vector3d transform_3d(const RigidTransform& t, const Eigen::Vector3d& x);

// --- Tape builders; gradients flow to the coefficient nodes ---

// p: 1x8 -> 3x3 homography via scaling-and-squaring, 12-term Taylor core
NodeId exp_sl3_node(Tape& t, NodeId p);

struct Se3Nodes {
  NodeId rotation;     // 3x3
  NodeId translation;  // 1x3
};
// p: 1x6 -> Rodrigues rotation plus V-coupled translation
Se3Nodes exp_se3_node(Tape& t, NodeId p);

// h: 3x3, x: Bx2 -> Bx2; throws on degenerate homogeneous depth
NodeId warp_2d_node(Tape& t, NodeId h, NodeId x);

// x: Bx3 -> Bx3 rows mapped through R x + t
NodeId transform_3d_node(Tape& t, const Se3Nodes& pose, NodeId x);

}  // namespace fieldalign
