#include "fieldalign/render.hpp"

#include <cmath>

#include "fieldalign/rng.hpp"

namespace fieldalign {

Eigen::Vector3d pixel_to_camera_ray(const Eigen::Vector2d& u,
                                    const CameraIntrinsics& intr) {
  require(intr.fx > 0 && intr.fy > 0, "pixel_to_camera_ray: invalid focal");
  require(u.x() >= 0 && u.x() <= intr.width && u.y() >= 0 && u.y() <= intr.height,
          "pixel_to_camera_ray: pixel out of image bounds");
  return {(u.x() - intr.cx) / intr.fx, (u.y() - intr.cy) / intr.fy, 1.0};
}

std::vector<double> sample_depths(const DepthParam& param, int n,
                                  const DepthJitter& jitter) {
  require(n >= 2, "sample_depths: need at least two samples");
  require(param.z_near > 0, "sample_depths: z_near must be positive");
  require(param.z_near < param.z_far, "sample_depths: need z_near < z_far");
  Rng rng(jitter.seed);
  std::vector<double> z(n);
  if (param.mode == DepthParam::Mode::Metric) {
    const double span = param.z_far - param.z_near;
    for (int i = 0; i < n; ++i) {
      const double f = jitter.stratified ? rng.uniform() : 0.5;
      z[i] = param.z_near + (i + f) / n * span;
    }
  } else {
    const double d_near = 1.0 / param.z_near;
    const double d_far = std::isinf(param.z_far) ? 0.0 : 1.0 / param.z_far;
    for (int i = 0; i < n; ++i) {
      const double f = jitter.stratified ? rng.uniform() : 0.5;
      const double d = d_near + (i + f) / n * (d_far - d_near);
      z[i] = 1.0 / d;
    }
  }
  return z;
}

std::vector<double> composite_deltas(const std::vector<double>& depths) {
  const size_t n = depths.size();
  require(n >= 2, "composite: need at least two depth samples");
  std::vector<double> delta(n);
  for (size_t i = 0; i + 1 < n; ++i) {
    delta[i] = depths[i + 1] - depths[i];
    require(delta[i] > 0, "composite: depths must be strictly increasing");
  }
  delta[n - 1] = delta[n - 2];
  return delta;
}

CompositeResult composite(const RaySample& samples,
                          const Eigen::Vector3d& background) {
  const size_t n = samples.depths.size();
  require(samples.outputs.size() == n, "composite: outputs/depths mismatch");
  const std::vector<double> delta = composite_deltas(samples.depths);

  CompositeResult out;
  out.rgb.setZero();
  out.transmittance.assign(n + 1, 1.0);
  double trans = 1.0;
  double depth_num = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double sigma = samples.outputs[i][3];
    if (sigma < 0)
      throw std::invalid_argument("composite: negative volume density");
    const double alpha = 1.0 - std::exp(-sigma * delta[i]);
    const double w = trans * alpha;
    out.rgb += w * samples.outputs[i].head<3>();
    out.opacity += w;
    depth_num += w * samples.depths[i];
    trans = trans * (1.0 - alpha);
    out.transmittance[i + 1] = trans;
  }
  out.rgb += trans * background;
  out.expected_depth = depth_num / std::max(out.opacity, 1e-8);
  return out;
}

CompositeNodes composite_node(Tape& t, const std::array<NodeId, 3>& color,
                              NodeId sigma, const Mat& z,
                              const Eigen::Vector3d& background) {
  const Mat& sv = t.value(sigma);
  const Eigen::Index b = sv.rows();
  const Eigen::Index n = sv.cols();
  require(z.rows() == b && z.cols() == n, "composite_node: z shape mismatch");
  if (sv.minCoeff() < 0)
    throw std::invalid_argument("composite_node: negative volume density");

  Mat delta(b, n);
  for (Eigen::Index r = 0; r < b; ++r) {
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
      delta(r, i) = z(r, i + 1) - z(r, i);
      require(delta(r, i) > 0, "composite_node: depths must increase");
    }
    delta(r, n - 1) = delta(r, n - 2);
  }

  const NodeId ones_n = t.constant(Mat::Ones(b, n));
  const NodeId alpha =
      t.sub(ones_n, t.exp(t.neg(t.mul(sigma, t.constant(delta)))));

  const NodeId ones = t.constant(Mat::Ones(b, 1));
  NodeId trans = ones;
  std::array<NodeId, 3> rgb{-1, -1, -1};
  NodeId opacity = -1;
  NodeId depth_num = -1;
  for (Eigen::Index i = 0; i < n; ++i) {
    const NodeId a_i = t.select(alpha, 0, i, b, 1);
    const NodeId w_i = t.mul(trans, a_i);
    for (int ch = 0; ch < 3; ++ch) {
      const NodeId term = t.mul(w_i, t.select(color[ch], 0, i, b, 1));
      rgb[ch] = (rgb[ch] < 0) ? term : t.add(rgb[ch], term);
    }
    opacity = (opacity < 0) ? w_i : t.add(opacity, w_i);
    const NodeId zterm = t.mul(w_i, t.constant(Mat(z.col(i))));
    depth_num = (depth_num < 0) ? zterm : t.add(depth_num, zterm);
    trans = t.mul(trans, t.sub(ones, a_i));
  }
  for (int ch = 0; ch < 3; ++ch)
    rgb[ch] = t.add(rgb[ch],
                    t.mul(trans, t.broadcast(t.scalar(background[ch]), b, 1)));

  // max(opacity, eps) via relu keeps zero-opacity rays defined
  const NodeId eps = t.broadcast(t.scalar(1e-8), b, 1);
  const NodeId denom = t.add(t.relu(t.sub(opacity, eps)), eps);
  const NodeId depth = t.div(depth_num, denom);
  return {rgb, opacity, depth};
}

RayBatchRender render_rays_node(Tape& t, const Se3Nodes& pose,
                                const FieldNodes& field, const MlpConfig& config,
                                const EncodingState& enc, const Mat& points_cam,
                                const Mat& z, const Eigen::Vector3d& background) {
  const Eigen::Index b = z.rows();
  const Eigen::Index n = z.cols();
  require(points_cam.rows() == b * n && points_cam.cols() == 3,
          "render_rays_node: expected (B*N)x3 camera points");

  const NodeId pts = t.constant(points_cam);
  const NodeId world = transform_3d_node(t, pose, pts);
  const NodeId raw =
      field_raw_node(t, field, config, encode_node(t, world, enc));
  const RadianceNodes rad = radiance_head_node(t, raw);

  std::array<NodeId, 3> color;
  for (int ch = 0; ch < 3; ++ch)
    color[ch] = t.reshape(t.select(rad.color, 0, ch, b * n, 1), b, n);
  const NodeId sigma = t.reshape(rad.sigma, b, n);

  const CompositeNodes cn = composite_node(t, color, sigma, z, background);
  return {cn.rgb, cn.opacity, cn.depth};
}

Eigen::Vector3d render_pixel(const Eigen::Vector2d& u, const Se3Param& pose,
                             const FieldParams& params, const EncodingState& enc,
                             const DepthParam& depth, const CameraIntrinsics& intr,
                             int n_samples, const Eigen::Vector3d& background) {
  const Eigen::Vector3d dir = pixel_to_camera_ray(u, intr);
  const std::vector<double> zs = sample_depths(depth, n_samples);

  Mat points(n_samples, 3);
  Mat z(1, n_samples);
  for (int i = 0; i < n_samples; ++i) {
    points.row(i) = (zs[i] * dir).transpose();
    z(0, i) = zs[i];
  }

  Tape t;
  Mat pmat(1, 6);
  for (int i = 0; i < 6; ++i) pmat(0, i) = pose.coeffs[i];
  const Se3Nodes pn = exp_se3_node(t, t.constant(std::move(pmat)));
  const FieldNodes fn = field_input_nodes(t, params, false);
  const RayBatchRender r =
      render_rays_node(t, pn, fn, params.config, enc, points, z, background);
  return {t.value(r.rgb[0])(0, 0), t.value(r.rgb[1])(0, 0),
          t.value(r.rgb[2])(0, 0)};
}

}  // namespace fieldalign
