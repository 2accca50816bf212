#include "fieldalign/planar.hpp"

#include <cmath>

#include "fieldalign/parallel.hpp"
#include "fieldalign/rng.hpp"

namespace fieldalign {

namespace {

// Exact homography mapping four source points onto four targets (h33 = 1).
Eigen::Matrix3d dlt_homography(const std::array<Eigen::Vector2d, 4>& src,
                               const std::array<Eigen::Vector2d, 4>& dst) {
  Eigen::Matrix<double, 8, 8> a = Eigen::Matrix<double, 8, 8>::Zero();
  Eigen::Matrix<double, 8, 1> b;
  for (int i = 0; i < 4; ++i) {
    const double x = src[i].x(), y = src[i].y();
    const double u = dst[i].x(), v = dst[i].y();
    a.row(2 * i) << x, y, 1, 0, 0, 0, -u * x, -u * y;
    a.row(2 * i + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
    b[2 * i] = u;
    b[2 * i + 1] = v;
  }
  const Eigen::Matrix<double, 8, 1> h = a.colPivHouseholderQr().solve(b);
  Eigen::Matrix3d out;
  out << h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0;
  return out;
}

Mat patch_grid(const NormalizedFrame& frame, double cx_px, double cy_px,
               int p) {
  Mat grid(static_cast<Eigen::Index>(p) * p, 2);
  const double half = 0.5 * (p - 1);
  for (int iy = 0; iy < p; ++iy)
    for (int ix = 0; ix < p; ++ix) {
      const Eigen::Vector2d n =
          frame.to_norm(cx_px + ix - half, cy_px + iy - half);
      grid(static_cast<Eigen::Index>(iy) * p + ix, 0) = n.x();
      grid(static_cast<Eigen::Index>(iy) * p + ix, 1) = n.y();
    }
  return grid;
}

Mat sample_patch(const Image& im, const NormalizedFrame& frame, const Mat& grid,
                 const Eigen::Matrix3d& warp) {
  Mat out(grid.rows(), 3);
  for (Eigen::Index i = 0; i < grid.rows(); ++i) {
    const Eigen::Vector2d w = warp_2d(warp, {grid(i, 0), grid(i, 1)});
    const Eigen::Vector2d px = frame.to_px(w.x(), w.y());
    out.row(i) = sample_bilinear(im, px.x(), px.y()).transpose();
  }
  return out;
}

}  // namespace

PlanarPatches generate_patches(const PlanarTask& task) {
  const Image& im = task.raw_image;
  const int p = task.patch_size;
  require(p >= 4, "generate_patches: patch too small");
  require(im.width >= p && im.height >= p,
          "generate_patches: patch does not fit the image");
  require(task.patch_count >= 1, "generate_patches: need at least one patch");

  const NormalizedFrame frame = NormalizedFrame::of(im.width, im.height);
  PlanarPatches out;
  out.canonical_grid = patch_grid(frame, frame.cx, frame.cy, p);

  Rng rng = Rng::substream(task.seed, "data");
  const double half = 0.5 * (p - 1);
  const std::array<Eigen::Vector2d, 4> corners_px = {
      Eigen::Vector2d{frame.cx - half, frame.cy - half},
      Eigen::Vector2d{frame.cx + half, frame.cy - half},
      Eigen::Vector2d{frame.cx + half, frame.cy + half},
      Eigen::Vector2d{frame.cx - half, frame.cy + half}};
  std::array<Eigen::Vector2d, 4> corners_norm;
  for (int i = 0; i < 4; ++i)
    corners_norm[i] = frame.to_norm(corners_px[i].x(), corners_px[i].y());

  out.gt_warps.assign(task.patch_count, Sl3Param{});
  const double magnitude =
      task.perturbation_scale * task.patch_size * frame.scale;

  for (int i = 1; i < task.patch_count; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      std::array<Eigen::Vector2d, 4> moved = corners_norm;
      for (auto& c : moved) {
        c.x() += rng.uniform(-magnitude, magnitude);
        c.y() += rng.uniform(-magnitude, magnitude);
      }
      Eigen::Matrix3d h = dlt_homography(corners_norm, moved);
      const double det = h.determinant();
      if (det <= 0) continue;
      h /= std::cbrt(det);

      // the whole warped grid must stay inside the image (bilinear margin)
      bool inside = true;
      for (Eigen::Index r = 0; r < out.canonical_grid.rows() && inside; ++r) {
        const Eigen::Vector2d w = warp_2d(
            h, {out.canonical_grid(r, 0), out.canonical_grid(r, 1)});
        const Eigen::Vector2d px = frame.to_px(w.x(), w.y());
        inside = px.x() >= 0.5 && px.x() <= im.width - 1.5 && px.y() >= 0.5 &&
                 px.y() <= im.height - 1.5;
      }
      if (!inside) continue;
      out.gt_warps[i] = log_sl3(h);
      placed = true;
    }
    if (!placed)
      throw std::runtime_error(
          "generate_patches: could not place patch inside the image; lower "
          "perturbation_scale or patch_size");
  }

  for (int i = 0; i < task.patch_count; ++i)
    out.targets.push_back(
        sample_patch(im, frame, out.canonical_grid, exp_sl3(out.gt_warps[i])));
  return out;
}

double warp_error(const std::vector<Sl3Param>& est,
                  const std::vector<Sl3Param>& gt) {
  require(est.size() == gt.size(), "warp_error: list length mismatch");
  if (est.size() <= 1) return 0.0;
  double sum = 0;
  for (size_t i = 1; i < est.size(); ++i) {
    const Eigen::Matrix3d rel =
        exp_sl3(est[i]).inverse() * exp_sl3(gt[i]);
    const Sl3Param l = log_sl3(rel);
    double sq = 0;
    for (double c : l.coeffs) sq += c * c;
    sum += std::sqrt(sq);
  }
  return sum / static_cast<double>(est.size() - 1);
}

namespace {

struct Chunk {
  int patch = 0;
  Eigen::Index row0 = 0;
  Eigen::Index rows = 0;
};

struct ChunkSlot {
  double loss = 0;
  std::vector<double> field_grad;
  std::array<double, 8> warp_grad{};
};

}  // namespace

PlanarResult train_planar(const PlanarTask& task, const PlanarPatches& data,
                          EncodeMode mode) {
  const int m = task.patch_count;
  require(static_cast<int>(data.targets.size()) == m,
          "train_planar: patch data mismatch");
  const Eigen::Index px_per_patch = data.canonical_grid.rows();
  const int bands = mode == EncodeMode::None ? 0 : task.bands;

  MlpConfig config;
  config.input_dim = encoded_dim(2, bands);
  config.hidden_dims = task.hidden;
  config.output_dim = 3;
  config.head = OutputHead::RgbSigmoid;
  FieldParams field =
      init_field(config, Rng::substream(task.seed, "init").bits());

  std::vector<double> warp_flat(static_cast<size_t>(m - 1) * 8, 0.0);
  AdamState field_state(field.values.size());
  AdamState warp_state(warp_flat.size());

  std::vector<Chunk> chunks;
  const Eigen::Index parts = std::max<Eigen::Index>(
      1, (px_per_patch + task.chunk_px - 1) / task.chunk_px);
  for (int i = 0; i < m; ++i)
    for (Eigen::Index s = 0; s < parts; ++s) {
      const Eigen::Index r0 = s * px_per_patch / parts;
      const Eigen::Index r1 = (s + 1) * px_per_patch / parts;
      if (r1 > r0) chunks.push_back({i, r0, r1 - r0});
    }
  const int workers = task.workers > 0 ? task.workers : hardware_workers();

  std::vector<ChunkSlot> slots(chunks.size());
  for (auto& s : slots) s.field_grad.assign(field.values.size(), 0.0);

  const double norm = 1.0 / (3.0 * static_cast<double>(m) * px_per_patch);
  PlanarResult result;
  result.est_warps.assign(m, Sl3Param{});

  std::vector<double> field_grad(field.values.size());
  std::vector<double> warp_grad(warp_flat.size());

  for (int iter = 0; iter < task.iters; ++iter) {
    const EncodingState enc(bands,
                            mode_alpha(mode, iter, 0, task.alpha_ramp_end, bands));

    chunk_map<int>(static_cast<int>(chunks.size()), workers, [&](int ci) {
      const Chunk& ch = chunks[ci];
      ChunkSlot& slot = slots[ci];
      std::fill(slot.field_grad.begin(), slot.field_grad.end(), 0.0);
      slot.warp_grad.fill(0.0);

      Tape t;
      const FieldNodes fnodes = field_input_nodes(t, field, true);
      const Mat grid_chunk =
          data.canonical_grid.block(ch.row0, 0, ch.rows, 2);
      const Mat target_chunk =
          data.targets[ch.patch].block(ch.row0, 0, ch.rows, 3);

      NodeId warp_in = -1;
      NodeId x;
      if (ch.patch == 0) {
        x = t.constant(grid_chunk);  // anchored to identity
      } else {
        Mat pw(1, 8);
        for (int k = 0; k < 8; ++k)
          pw(0, k) = warp_flat[static_cast<size_t>(ch.patch - 1) * 8 + k];
        warp_in = t.input(std::move(pw));
        x = warp_2d_node(t, exp_sl3_node(t, warp_in), t.constant(grid_chunk));
      }
      const NodeId rgb = rgb_head_node(
          t, field_raw_node(t, fnodes, config, encode_node(t, x, enc)));
      const NodeId root = t.mul(
          t.sum(t.square(t.sub(rgb, t.constant(target_chunk)))),
          t.scalar(norm));
      slot.loss = t.value(root)(0, 0);

      std::vector<NodeId> wrt;
      for (size_t l = 0; l < fnodes.weights.size(); ++l) {
        wrt.push_back(fnodes.weights[l]);
        wrt.push_back(fnodes.biases[l]);
      }
      if (warp_in >= 0) wrt.push_back(warp_in);
      const GradMap gm = t.backward(root, wrt);
      accumulate_field_grads(t, fnodes, config, gm, slot.field_grad);
      if (warp_in >= 0) {
        const Mat& g = gm.at(warp_in);
        for (int k = 0; k < 8; ++k) slot.warp_grad[k] = g(0, k);
      }
      return 0;
    });

    // ordered reduction keeps trajectories independent of the worker count
    double loss = 0;
    std::fill(field_grad.begin(), field_grad.end(), 0.0);
    std::fill(warp_grad.begin(), warp_grad.end(), 0.0);
    for (size_t ci = 0; ci < chunks.size(); ++ci) {
      loss += slots[ci].loss;
      for (size_t k = 0; k < field_grad.size(); ++k)
        field_grad[k] += slots[ci].field_grad[k];
      if (chunks[ci].patch > 0) {
        const size_t off = static_cast<size_t>(chunks[ci].patch - 1) * 8;
        for (int k = 0; k < 8; ++k)
          warp_grad[off + k] += slots[ci].warp_grad[k];
      }
    }

    if (!std::isfinite(loss))
      throw std::runtime_error("train_planar: non-finite loss at iteration " +
                               std::to_string(iter) + " (mode " +
                               mode_name(mode) + ")");
    result.loss_history.push_back(loss);

    adam_step(field.values, field_grad, field_state, lr_at(task.lr_field, iter));
    adam_step(warp_flat, warp_grad, warp_state, lr_at(task.lr_warp, iter));
  }

  for (int i = 1; i < m; ++i)
    for (int k = 0; k < 8; ++k)
      result.est_warps[i].coeffs[k] =
          warp_flat[static_cast<size_t>(i - 1) * 8 + k];
  result.field = field;
  result.warp_error = warp_error(result.est_warps, data.gt_warps);

  // mean patch PSNR of the recovered field rendered at the estimated warps
  const EncodingState enc_final(
      bands, mode_alpha(mode, task.iters, 0, task.alpha_ramp_end, bands));
  double psnr_sum = 0;
  for (int i = 0; i < m; ++i) {
    Tape t;
    const FieldNodes fnodes = field_input_nodes(t, field, false);
    NodeId x;
    if (i == 0) {
      x = t.constant(data.canonical_grid);
    } else {
      Mat pw(1, 8);
      for (int k = 0; k < 8; ++k) pw(0, k) = result.est_warps[i].coeffs[k];
      x = warp_2d_node(t, exp_sl3_node(t, t.constant(std::move(pw))),
                       t.constant(data.canonical_grid));
    }
    const NodeId rgb = rgb_head_node(
        t, field_raw_node(t, fnodes, config, encode_node(t, x, enc_final)));
    const double mse =
        (t.value(rgb) - data.targets[i]).squaredNorm() /
        static_cast<double>(data.targets[i].size());
    psnr_sum += -10.0 * std::log10(std::max(mse, 1e-10));
  }
  result.patch_psnr = psnr_sum / m;
  return result;
}

std::vector<BasinCell> basin_sweep(const BasinConfig& config, EncodeMode mode) {
  const Image& im = config.image;
  const int p = static_cast<int>(std::lround(im.height * config.box_fraction));
  require(p >= 8, "basin_sweep: box too small");
  const NormalizedFrame frame = NormalizedFrame::of(im.width, im.height);
  const Mat grid = patch_grid(frame, frame.cx, frame.cy, p);
  const Mat center_patch = sample_patch(im, frame, grid,
                                        Eigen::Matrix3d::Identity());

  const int max_ox = (im.width - p) / 2 - 1;
  const int max_oy = (im.height - p) / 2 - 1;
  require(max_ox >= 0 && max_oy >= 0, "basin_sweep: box does not fit");
  std::vector<int> ox_list, oy_list;
  for (int i = 0; i < config.grid; ++i) {
    const double f = config.grid == 1 ? 0.5 : i / (config.grid - 1.0);
    ox_list.push_back(static_cast<int>(std::lround(-max_ox + f * 2 * max_ox)));
    oy_list.push_back(static_cast<int>(std::lround(-max_oy + f * 2 * max_oy)));
  }

  const int bands = mode == EncodeMode::None ? 0 : config.bands;
  MlpConfig mlp;
  mlp.input_dim = encoded_dim(2, bands);
  mlp.hidden_dims = config.hidden;
  mlp.output_dim = 3;
  mlp.head = OutputHead::RgbSigmoid;

  const int cells = config.grid * config.grid;
  const int workers = config.workers > 0 ? config.workers : hardware_workers();
  std::vector<BasinCell> out(cells);

  chunk_map<int>(cells, workers, [&](int cell) {
    const int ox = ox_list[cell % config.grid];
    const int oy = oy_list[cell / config.grid];
    const Eigen::Matrix3d shift = [&] {
      Eigen::Matrix3d s = Eigen::Matrix3d::Identity();
      s(0, 2) = ox * frame.scale;
      s(1, 2) = oy * frame.scale;
      return s;
    }();
    const Mat target_patch = sample_patch(im, frame, grid, shift);

    FieldParams field = init_field(
        mlp, Rng::substream(config.seed, "basin-init:" + std::to_string(cell))
                 .bits());
    std::vector<double> warp{0.0, 0.0};
    AdamState field_state(field.values.size());
    AdamState warp_state(2);
    const double norm = 1.0 / (2.0 * 3.0 * static_cast<double>(grid.rows()));

    double last_loss = 0;
    for (int iter = 0; iter < config.iters; ++iter) {
      const EncodingState enc(
          bands, mode_alpha(mode, iter, 0, config.alpha_ramp_end, bands));
      Tape t;
      const FieldNodes fnodes = field_input_nodes(t, field, true);
      const NodeId grid_c = t.constant(grid);
      const NodeId rgb1 = rgb_head_node(
          t, field_raw_node(t, fnodes, mlp, encode_node(t, grid_c, enc)));
      Mat pw(1, 2);
      pw << warp[0], warp[1];
      const NodeId warp_in = t.input(std::move(pw));
      const NodeId x2 = t.add(grid_c, t.broadcast(warp_in, grid.rows(), 2));
      const NodeId rgb2 = rgb_head_node(
          t, field_raw_node(t, fnodes, mlp, encode_node(t, x2, enc)));
      const NodeId se = t.add(
          t.sum(t.square(t.sub(rgb1, t.constant(center_patch)))),
          t.sum(t.square(t.sub(rgb2, t.constant(target_patch)))));
      const NodeId root = t.mul(se, t.scalar(norm));
      last_loss = t.value(root)(0, 0);
      if (!std::isfinite(last_loss))
        throw std::runtime_error("basin_sweep: non-finite loss");

      std::vector<NodeId> wrt;
      for (size_t l = 0; l < fnodes.weights.size(); ++l) {
        wrt.push_back(fnodes.weights[l]);
        wrt.push_back(fnodes.biases[l]);
      }
      wrt.push_back(warp_in);
      const GradMap gm = t.backward(root, wrt);
      std::vector<double> fgrad(field.values.size(), 0.0);
      accumulate_field_grads(t, fnodes, mlp, gm, fgrad);
      const Mat& wg = gm.at(warp_in);
      std::vector<double> wgrad{wg(0, 0), wg(0, 1)};

      adam_step(field.values, fgrad, field_state, lr_at(config.lr_field, iter));
      adam_step(warp, wgrad, warp_state, lr_at(config.lr_warp, iter));
    }

    BasinCell& c = out[cell];
    c.offset_x_px = ox;
    c.offset_y_px = oy;
    const double ex = warp[0] / frame.scale - ox;
    const double ey = warp[1] / frame.scale - oy;
    c.error_px = std::sqrt(ex * ex + ey * ey);
    c.recon_loss = last_loss;
    return 0;
  });

  return out;
}

}  // namespace fieldalign
