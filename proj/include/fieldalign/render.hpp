#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "fieldalign/fieldnet.hpp"
#include "fieldalign/lie.hpp"
#include "fieldalign/tape.hpp"

namespace fieldalign {

struct CameraIntrinsics {
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;
  int width = 0, height = 0;
};

struct DepthParam {
  enum class Mode { Metric, Inverse };
  Mode mode = Mode::Metric;
  double z_near = 1.0;
  double z_far = 2.0;  // Inverse mode permits +inf (disparity 0)
};

struct DepthJitter {
  bool stratified = false;
  uint64_t seed = 0;
};

// Camera-space homogeneous direction K^-1 [u;1]; a point at depth z is z*dir.
Eigen::Vector3d pixel_to_camera_ray(const Eigen::Vector2d& u,
                                    const CameraIntrinsics& intr);

// Bin midpoints (or stratified draws within bins), linear in z for Metric and
// linear in disparity for Inverse; strictly increasing in depth.
std::vector<double> sample_depths(const DepthParam& param, int n,
                                  const DepthJitter& jitter = {});

struct RaySample {
  Eigen::Vector2d pixel;
  std::vector<double> depths;              // strictly increasing, N >= 2
  std::vector<Eigen::Vector4d> outputs;    // per sample (r, g, b, sigma)
};

struct CompositeResult {
  Eigen::Vector3d rgb;
  double expected_depth = 0;
  double opacity = 0;
  std::vector<double> transmittance;  // T_1..T_{N+1}, T_{i+1} = T_i (1-a_i)
};

// Serial reference compositor (quadrature of the emission-absorption
// integral); the tape path must agree with it.
CompositeResult composite(const RaySample& samples,
                          const Eigen::Vector3d& background);

// Last interval reuses the previous width, so the quadrature stays truncated
// at z_far.
std::vector<double> composite_deltas(const std::vector<double>& depths);

// --- tape compositor over a batch of rays ---
// color[ch] and sigma are B x N (ray-major rows); z holds the sample depths.
// Channels stay separate nodes; losses consume them per channel.
struct CompositeNodes {
  std::array<NodeId, 3> rgb;  // each B x 1
  NodeId opacity;             // B x 1
  NodeId depth;               // B x 1
};
CompositeNodes composite_node(Tape& t, const std::array<NodeId, 3>& color,
                              NodeId sigma, const Mat& z,
                              const Eigen::Vector3d& background);

// Full differentiable pipeline for a batch of rays sharing one pose:
// camera-space points -> rigid transform -> encoding -> field -> compositor.
struct RayBatchRender {
  std::array<NodeId, 3> rgb;
  NodeId opacity;
  NodeId depth;
};
RayBatchRender render_rays_node(Tape& t, const Se3Nodes& pose,
                                const FieldNodes& field, const MlpConfig& config,
                                const EncodingState& enc, const Mat& points_cam,
                                const Mat& z, const Eigen::Vector3d& background);

// Single-pixel convenience; gradients flow to pose and field when their nodes
// are tape inputs, so tests drive this through a caller-built tape instead.
Eigen::Vector3d render_pixel(const Eigen::Vector2d& u, const Se3Param& pose,
                             const FieldParams& params, const EncodingState& enc,
                             const DepthParam& depth, const CameraIntrinsics& intr,
                             int n_samples, const Eigen::Vector3d& background);

}  // namespace fieldalign
