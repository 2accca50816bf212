#pragma once

#include <string>
#include <vector>

#include "fieldalign/image.hpp"
#include "fieldalign/lie.hpp"

namespace fieldalign {

// Similarity recovered by Procrustes analysis over two center sets.
struct Similarity {
  double s = 1.0;
  double s_hat = 1.0;
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
  Eigen::Vector3d t_hat = Eigen::Vector3d::Zero();
  Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
};

// Camera center of an extrinsic [R|t]: o = -R^T t.
Eigen::Vector3d camera_center(const RigidTransform& extrinsic);

// Means, RMS scales and the SVD rotation between two center sets, with the
// det = -1 row-flip correction. Throws on fewer than 3 or coincident centers.
Similarity procrustes(const std::vector<Eigen::Vector3d>& ref_centers,
                      const std::vector<Eigen::Vector3d>& opt_centers);

// Aligns optimized extrinsics onto the reference frame: centers through the
// recovered similarity, rotations by R_hat R^T, translations rebuilt from the
// mapped centers.
PoseSet prealign(const PoseSet& ref_extrinsics, const PoseSet& opt_extrinsics);

// Maps a reference-frame extrinsic into the optimized solution's frame
// (inverse of the prealign similarity); used to carry held-out views over.
RigidTransform map_to_opt_frame(const Similarity& sim,
                                const RigidTransform& ref_extrinsic);

// Angular distance acos((trace(R_ref R_opt^T) - 1) / 2) in degrees, with the
// acos argument clamped to [-1, 1].
double rotation_error_deg(const Eigen::Matrix3d& r_ref,
                          const Eigen::Matrix3d& r_opt);

// Mean Euclidean distance between camera centers of aligned extrinsics.
// Reporting multiplies by 100 to match the table convention.
double translation_error(const PoseSet& a, const PoseSet& b);

// -10 log10(MSE) at peak 1; identical images return the documented 100 dB cap.
double psnr(const Image& a, const Image& b);

// Windowed SSIM, 11x11 Gaussian window sigma 1.5, C1=0.01^2, C2=0.03^2,
// valid-window mean, channel-averaged.
double ssim(const Image& a, const Image& b);

// Pose file format: JSON list of {"id": ..., "extrinsic": [16 row-major]}.
PoseSet load_pose_json(const std::string& path);
void save_pose_json(const PoseSet& poses, const std::string& path);

}  // namespace fieldalign
