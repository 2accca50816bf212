#pragma once

#include <string>
#include <vector>

#include "fieldalign/fieldnet.hpp"
#include "fieldalign/image.hpp"
#include "fieldalign/lie.hpp"
#include "fieldalign/optim.hpp"

namespace fieldalign {

// Pixel-grid <-> normalized coordinates with aspect preserved; the long image
// side maps to [-1, 1].
struct NormalizedFrame {
  double scale = 1.0;  // normalized units per pixel
  double cx = 0.0, cy = 0.0;

  static NormalizedFrame of(int width, int height) {
    NormalizedFrame f;
    f.scale = 2.0 / std::max(width, height);
    f.cx = 0.5 * (width - 1);
    f.cy = 0.5 * (height - 1);
    return f;
  }
  Eigen::Vector2d to_norm(double px, double py) const {
    return {(px - cx) * scale, (py - cy) * scale};
  }
  Eigen::Vector2d to_px(double xn, double yn) const {
    return {xn / scale + cx, yn / scale + cy};
  }
};

struct PlanarTask {
  Image raw_image;
  int patch_count = 5;
  int patch_size = 24;
  double perturbation_scale = 0.15;  // fraction of patch size
  uint64_t seed = 7;
  int iters = 5000;
  int alpha_ramp_end = 2000;
  int bands = 8;
  ParamGroup lr_field{"field", 1e-3, 1e-3, 5000};
  ParamGroup lr_warp{"warp", 1e-3, 1e-3, 5000};
  std::vector<int> hidden{256, 256, 256, 256};
  int chunk_px = 2048;
  int workers = 0;  // 0 = all hardware threads
};

struct PlanarPatches {
  Mat canonical_grid;            // (P*P) x 2 normalized coords, shared
  std::vector<Mat> targets;      // per patch (P*P) x 3
  std::vector<Sl3Param> gt_warps;  // first is identity
};

// Patches are bilinear samples of the raw image at the ground-truth warp of
// the canonical center-crop grid; regenerates the perturbation (bounded
// retries) if a warp escapes the image.
PlanarPatches generate_patches(const PlanarTask& task);

struct PlanarResult {
  std::vector<Sl3Param> est_warps;
  FieldParams field;
  double warp_error = 0.0;
  double patch_psnr = 0.0;  // dB, mean over patches
  std::vector<double> loss_history;
};

// Joint optimization of the image network and the per-patch warps (first
// patch anchored to identity). Throws on non-finite loss.
PlanarResult train_planar(const PlanarTask& task, const PlanarPatches& data,
                          EncodeMode mode);

// Mean over non-anchored patches of || log(exp(est)^-1 exp(gt)) || in sl(3)
// coefficients.
double warp_error(const std::vector<Sl3Param>& est,
                  const std::vector<Sl3Param>& gt);

struct BasinConfig {
  Image image;
  double box_fraction = 1.0 / 3.0;  // box side as a fraction of image height
  int grid = 9;                     // cells per axis
  int iters = 600;
  int bands = 6;
  int alpha_ramp_end = 240;
  std::vector<int> hidden{64, 64};
  ParamGroup lr_field{"field", 1e-2, 1e-3, 600};
  ParamGroup lr_warp{"warp", 1e-2, 1e-3, 600};
  uint64_t seed = 7;
  int workers = 0;
};

struct BasinCell {
  double offset_x_px = 0;
  double offset_y_px = 0;
  double error_px = 0;     // final translational warp error in pixels
  double recon_loss = 0;   // final mean squared reconstruction error
};

// Joint field + translational-warp optimization against a target patch at
// every grid offset; cells are independent and run in parallel.
std::vector<BasinCell> basin_sweep(const BasinConfig& config, EncodeMode mode);

}  // namespace fieldalign
