#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fieldalign/image.hpp"
#include "fieldalign/optim.hpp"
#include "fieldalign/render.hpp"

namespace fieldalign {

// Emissive constant-density primitive of the analytic scene.
struct ScenePrimitive {
  enum class Kind { Sphere, Box };
  Kind kind = Kind::Sphere;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 1.0;                                   // sphere
  Eigen::Vector3d half_extent = Eigen::Vector3d::Ones(); // box
  double density = 20.0;
  Eigen::Vector3d color = {0.5, 0.5, 0.5};
};

// Density and density-weighted emission color at a world point.
std::pair<double, Eigen::Vector3d> analytic_field(
    const std::vector<ScenePrimitive>& primitives, const Eigen::Vector3d& x);

struct SceneDataset {
  std::vector<Image> images;
  PoseSet poses;  // camera-to-world
  CameraIntrinsics intrinsics;
  Eigen::Vector3d background = {1, 1, 1};
};

enum class CameraRig { Orbit, FacingArc };

struct SceneSpec {
  std::vector<ScenePrimitive> primitives;
  CameraRig rig = CameraRig::Orbit;
  int image_count = 20;
  int image_size = 64;
  double focal = 70.0;  // pixels
  double orbit_radius = 4.0;
  double orbit_elevation_deg = 20.0;
  double arc_extent = 0.8;      // facing-arc lateral span, world units
  double arc_target_depth = 4.0;
  Eigen::Vector3d background = {1, 1, 1};
  DepthParam depth{DepthParam::Mode::Metric, 2.0, 6.0};
  int oracle_samples = 512;
  uint64_t seed = 1;
};

PoseSet orbit_poses(int count, double radius, double elevation_deg);
PoseSet facing_arc_poses(int count, double extent, double target_depth);

// Ground-truth images rendered through the serial compositor at oracle
// sample counts; deterministic per spec.
SceneDataset generate_synthetic_scene(const SceneSpec& spec);

// Left-composes each pose with exp_se3(dp), dp ~ N(0, sigma^2 I6).
PoseSet perturb_poses(const PoseSet& gt, double sigma, uint64_t seed);

struct TrainConfig {
  int iters = 10000;
  int rays_per_step = 256;
  int n_samples = 64;
  DepthParam depth{DepthParam::Mode::Metric, 2.0, 6.0};
  int bands = 6;
  int alpha_ramp_start = 1000;
  int alpha_ramp_end = 5000;
  ParamGroup lr_field{"field", 5e-4, 1e-4, 10000};
  ParamGroup lr_pose{"pose", 1e-3, 1e-5, 10000};
  std::vector<int> hidden{64, 64, 64, 64};
  enum class PoseInit { Perturbed, Identity };
  PoseInit pose_init = PoseInit::Perturbed;
  double pose_sigma = 0.15;
  EncodeMode mode = EncodeMode::CoarseToFine;
  uint64_t seed = 7;
  int workers = 0;
};

// Optimizer and ray-sampler state carried by checkpoints so a resumed run
// continues the exact trajectory.
struct TrainState {
  AdamState field_state{0};
  AdamState pose_state{0};
  std::vector<uint32_t> ray_perm;
  std::string rng_state;  // serialized engine
  int iter = 0;
};

struct Checkpoint {
  FieldParams field;
  std::vector<Se3Param> poses;
  TrainConfig config;
  std::vector<double> loss_history;
  TrainState state;

  PoseSet pose_set(const std::vector<std::string>& ids = {}) const;
};

// Joint field + pose optimization over random ray minibatches (Adam, two
// groups, coarse-to-fine alpha schedule). Starts fresh or continues from a
// checkpoint; runs until config.iters. Throws on non-finite loss.
Checkpoint train_barf(const SceneDataset& dataset, const TrainConfig& config,
                      const Checkpoint* resume = nullptr);

// Test-time photometric refinement: optimizes only the given pose parameters
// against the frozen field.
std::vector<Se3Param> refine_test_poses(const Checkpoint& checkpoint,
                                        const std::vector<Image>& test_images,
                                        const std::vector<Se3Param>& init,
                                        const CameraIntrinsics& intr,
                                        const Eigen::Vector3d& background,
                                        int iters, double lr_start,
                                        double lr_end, int workers = 0);

struct RenderedView {
  Image rgb;
  Eigen::MatrixXd depth;
  Eigen::MatrixXd opacity;
};

std::vector<RenderedView> render_views(const FieldParams& field,
                                       const EncodingState& enc,
                                       const PoseSet& poses,
                                       const CameraIntrinsics& intr,
                                       const DepthParam& depth, int n_samples,
                                       const Eigen::Vector3d& background,
                                       int workers = 0);

// NeRF-synthetic ingestion: camera_angle_x plus per-frame 4x4 camera-to-world
// transform_matrix (OpenGL axes, converted to the z-forward convention here)
// and PNG paths relative to the JSON file.
SceneDataset load_blender_dataset(const std::string& transforms_path,
                                  const Eigen::Vector3d& background);

}  // namespace fieldalign
