#include "fieldalign/nerfba.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "fieldalign/parallel.hpp"
#include "fieldalign/rng.hpp"

namespace fieldalign {

std::pair<double, Eigen::Vector3d> analytic_field(
    const std::vector<ScenePrimitive>& primitives, const Eigen::Vector3d& x) {
  double sigma = 0;
  Eigen::Vector3d weighted = Eigen::Vector3d::Zero();
  for (const ScenePrimitive& p : primitives) {
    bool inside = false;
    if (p.kind == ScenePrimitive::Kind::Sphere) {
      inside = (x - p.center).squaredNorm() <= p.radius * p.radius;
    } else {
      inside = (x - p.center).cwiseAbs().array().operator<=(
          p.half_extent.array()).all();
    }
    if (inside) {
      sigma += p.density;
      weighted += p.density * p.color;
    }
  }
  if (sigma <= 0) return {0.0, Eigen::Vector3d::Zero()};
  return {sigma, weighted / sigma};
}

namespace {

// camera-to-world look-at with z forward, image y pointing down in world
RigidTransform look_at(const Eigen::Vector3d& position,
                       const Eigen::Vector3d& target) {
  const Eigen::Vector3d up{0, 0, 1};
  RigidTransform pose;
  const Eigen::Vector3d z = (target - position).normalized();
  Eigen::Vector3d x = z.cross(up);
  if (x.norm() < 1e-9) x = Eigen::Vector3d{1, 0, 0};
  x.normalize();
  const Eigen::Vector3d y = z.cross(x);
  pose.rotation.col(0) = x;
  pose.rotation.col(1) = y;
  pose.rotation.col(2) = z;
  pose.translation = position;
  return pose;
}

}  // namespace

PoseSet orbit_poses(int count, double radius, double elevation_deg) {
  PoseSet out;
  const double phi = elevation_deg * M_PI / 180.0;
  for (int i = 0; i < count; ++i) {
    const double theta = 2.0 * M_PI * i / count;
    const Eigen::Vector3d pos{radius * std::cos(phi) * std::cos(theta),
                              radius * std::cos(phi) * std::sin(theta),
                              radius * std::sin(phi)};
    out.ids.push_back("orbit_" + std::to_string(i));
    out.poses.push_back(look_at(pos, Eigen::Vector3d::Zero()));
  }
  return out;
}

PoseSet facing_arc_poses(int count, double extent, double target_depth) {
  PoseSet out;
  // cameras near the origin looking down +z at the scene, LLFF-style
  const Eigen::Vector3d target{0, 0, target_depth};
  for (int i = 0; i < count; ++i) {
    const double f = count == 1 ? 0.5 : i / (count - 1.0);
    const double sweep = (f - 0.5) * 2.0;  // [-1, 1]
    const Eigen::Vector3d pos{extent * sweep,
                              0.35 * extent * std::sin(2.5 * sweep),
                              0.15 * extent * std::cos(3.1 * sweep)};
    out.ids.push_back("arc_" + std::to_string(i));
    out.poses.push_back(look_at(pos, target));
  }
  return out;
}

SceneDataset generate_synthetic_scene(const SceneSpec& spec) {
  require(spec.image_count >= 1, "generate_synthetic_scene: need images");
  require(spec.oracle_samples >= 2, "generate_synthetic_scene: oracle samples");

  SceneDataset out;
  out.background = spec.background;
  out.intrinsics.width = spec.image_size;
  out.intrinsics.height = spec.image_size;
  out.intrinsics.fx = spec.focal;
  out.intrinsics.fy = spec.focal;
  out.intrinsics.cx = spec.image_size / 2.0;
  out.intrinsics.cy = spec.image_size / 2.0;
  out.poses = spec.rig == CameraRig::Orbit
                  ? orbit_poses(spec.image_count, spec.orbit_radius,
                                spec.orbit_elevation_deg)
                  : facing_arc_poses(spec.image_count, spec.arc_extent,
                                     spec.arc_target_depth);

  const std::vector<double> zs =
      sample_depths(spec.depth, spec.oracle_samples);
  out.images.assign(spec.image_count,
                    Image::zero(spec.image_size, spec.image_size));

  for (int m = 0; m < spec.image_count; ++m) {
    const RigidTransform& pose = out.poses.poses[m];
    Image& im = out.images[m];
    chunk_map<int>(spec.image_size, hardware_workers(), [&](int y) {
      RaySample ray;
      ray.depths = zs;
      ray.outputs.resize(zs.size());
      for (int x = 0; x < spec.image_size; ++x) {
        const Eigen::Vector3d dir = pixel_to_camera_ray(
            {x + 0.5, y + 0.5}, out.intrinsics);
        for (size_t i = 0; i < zs.size(); ++i) {
          const Eigen::Vector3d world = pose.apply(zs[i] * dir);
          const auto [sigma, color] = analytic_field(spec.primitives, world);
          ray.outputs[i] = {color.x(), color.y(), color.z(), sigma};
        }
        im.set_pixel(y, x, composite(ray, spec.background).rgb);
      }
      return 0;
    });
  }
  return out;
}

PoseSet perturb_poses(const PoseSet& gt, double sigma, uint64_t seed) {
  require(sigma >= 0, "perturb_poses: sigma must be non-negative");
  Rng rng(seed);
  PoseSet out;
  out.ids = gt.ids;
  for (const RigidTransform& pose : gt.poses) {
    Se3Param delta;
    for (double& c : delta.coeffs) c = sigma * rng.normal();
    out.poses.push_back(exp_se3(delta) * pose);
  }
  return out;
}

PoseSet Checkpoint::pose_set(const std::vector<std::string>& ids) const {
  PoseSet out;
  for (size_t i = 0; i < poses.size(); ++i) {
    out.ids.push_back(i < ids.size() ? ids[i] : std::to_string(i));
    out.poses.push_back(exp_se3(poses[i]));
  }
  return out;
}

namespace {

std::string serialize_rng(const std::mt19937_64& eng) {
  std::ostringstream os;
  os << eng;
  return os.str();
}

struct RaySampler {
  std::vector<uint32_t> perm;
  std::mt19937_64 eng;

  static RaySampler fresh(size_t total, uint64_t seed) {
    RaySampler s;
    s.perm.resize(total);
    for (size_t i = 0; i < total; ++i) s.perm[i] = static_cast<uint32_t>(i);
    s.eng.seed(seed);
    return s;
  }

  // Partial Fisher-Yates: uniform sample without replacement each step.
  void draw(int count, std::vector<uint32_t>* out) {
    out->clear();
    const size_t n = perm.size();
    for (int j = 0; j < count && static_cast<size_t>(j) < n; ++j) {
      const uint64_t span = n - j;
      const uint64_t limit = UINT64_MAX - UINT64_MAX % span;
      uint64_t r;
      do {
        r = eng();
      } while (r >= limit);
      const size_t k = j + static_cast<size_t>(r % span);
      std::swap(perm[j], perm[k]);
      out->push_back(perm[j]);
    }
  }
};

struct ImageBucket {
  int image = 0;
  std::vector<uint32_t> pixels;  // y * width + x
};

MlpConfig radiance_config(const TrainConfig& config) {
  MlpConfig c;
  c.input_dim =
      encoded_dim(3, config.mode == EncodeMode::None ? 0 : config.bands);
  c.hidden_dims = config.hidden;
  c.output_dim = 4;
  c.head = OutputHead::RgbPlusDensity;
  return c;
}

// One image's ray batch: differentiable loss contribution and gradients.
struct RayChunkResult {
  double loss = 0;
  std::array<double, 6> pose_grad{};
};

}  // namespace

Checkpoint train_barf(const SceneDataset& dataset, const TrainConfig& config,
                      const Checkpoint* resume) {
  const int m = static_cast<int>(dataset.images.size());
  require(m >= 1, "train_barf: empty dataset");
  require(dataset.poses.size() == static_cast<size_t>(m),
          "train_barf: image/pose count mismatch");
  const int w = dataset.intrinsics.width;
  const int h = dataset.intrinsics.height;
  const int bands = config.mode == EncodeMode::None ? 0 : config.bands;
  const int n = config.n_samples;

  Checkpoint ck;
  ck.config = config;
  RaySampler sampler;

  if (resume) {
    ck = *resume;
    ck.config = config;
    sampler.perm = ck.state.ray_perm;
    std::istringstream is(ck.state.rng_state);
    is >> sampler.eng;
  } else {
    ck.field = init_field(radiance_config(config),
                          Rng::substream(config.seed, "init").bits());
    ck.poses.assign(m, Se3Param{});
    if (config.pose_init == TrainConfig::PoseInit::Perturbed) {
      const PoseSet init =
          perturb_poses(dataset.poses, config.pose_sigma,
                        Rng::substream(config.seed, "perturb").bits());
      for (int i = 0; i < m; ++i) ck.poses[i] = log_se3(init.poses[i]);
    }
    ck.state.field_state = AdamState(ck.field.values.size());
    ck.state.pose_state = AdamState(static_cast<size_t>(m) * 6);
    sampler = RaySampler::fresh(static_cast<size_t>(m) * w * h,
                                Rng::substream(config.seed, "rays").bits());
    ck.state.iter = 0;
  }

  const MlpConfig mlp = ck.field.config;
  std::vector<double> pose_flat(static_cast<size_t>(m) * 6);
  for (int i = 0; i < m; ++i)
    for (int k = 0; k < 6; ++k) pose_flat[i * 6 + k] = ck.poses[i].coeffs[k];

  // fixed per-pixel camera directions and shared depth grid
  std::vector<Eigen::Vector3d> dirs(static_cast<size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      dirs[static_cast<size_t>(y) * w + x] =
          pixel_to_camera_ray({x + 0.5, y + 0.5}, dataset.intrinsics);
  const std::vector<double> zs = sample_depths(config.depth, n);

  const int workers =
      config.workers > 0 ? config.workers : hardware_workers();
  std::vector<uint32_t> drawn;
  std::vector<ImageBucket> buckets;
  std::vector<RayChunkResult> results(m);
  std::vector<std::vector<double>> field_slots(
      m, std::vector<double>(ck.field.values.size(), 0.0));
  std::vector<double> field_grad(ck.field.values.size());
  std::vector<double> pose_grad(pose_flat.size());

  for (int iter = ck.state.iter; iter < config.iters; ++iter) {
    const EncodingState enc(
        bands, mode_alpha(config.mode, iter, config.alpha_ramp_start,
                          config.alpha_ramp_end, bands));

    sampler.draw(config.rays_per_step, &drawn);
    buckets.clear();
    buckets.resize(m);
    for (int i = 0; i < m; ++i) buckets[i].image = i;
    for (uint32_t id : drawn)
      buckets[id / (static_cast<uint32_t>(w) * h)].pixels.push_back(
          id % (static_cast<uint32_t>(w) * h));

    chunk_map<int>(m, workers, [&](int i) {
      const ImageBucket& bucket = buckets[i];
      RayChunkResult& res = results[i];
      res = RayChunkResult{};
      std::fill(field_slots[i].begin(), field_slots[i].end(), 0.0);
      const int b = static_cast<int>(bucket.pixels.size());
      if (b == 0) return 0;

      Mat points(static_cast<Eigen::Index>(b) * n, 3);
      Mat z(b, n);
      Mat target(b, 3);
      for (int r = 0; r < b; ++r) {
        const uint32_t px = bucket.pixels[r];
        const Eigen::Vector3d& dir = dirs[px];
        for (int s = 0; s < n; ++s) {
          points.row(static_cast<Eigen::Index>(r) * n + s) =
              (zs[s] * dir).transpose();
          z(r, s) = zs[s];
        }
        const Eigen::Vector3d rgb =
            dataset.images[i].pixel(static_cast<int>(px) / w,
                                    static_cast<int>(px) % w);
        target.row(r) = rgb.transpose();
      }

      Tape t;
      Mat pw(1, 6);
      for (int k = 0; k < 6; ++k) pw(0, k) = pose_flat[i * 6 + k];
      const NodeId pose_in = t.input(std::move(pw));
      const Se3Nodes pose = exp_se3_node(t, pose_in);
      const FieldNodes fnodes = field_input_nodes(t, ck.field, true);
      const RayBatchRender render = render_rays_node(
          t, pose, fnodes, mlp, enc, points, z, dataset.background);

      NodeId se = -1;
      for (int ch = 0; ch < 3; ++ch) {
        const NodeId diff =
            t.sub(render.rgb[ch], t.constant(Mat(target.col(ch))));
        const NodeId sq = t.sum(t.square(diff));
        se = se < 0 ? sq : t.add(se, sq);
      }
      const NodeId root =
          t.mul(se, t.scalar(1.0 / (3.0 * config.rays_per_step)));
      res.loss = t.value(root)(0, 0);

      std::vector<NodeId> wrt;
      for (size_t l = 0; l < fnodes.weights.size(); ++l) {
        wrt.push_back(fnodes.weights[l]);
        wrt.push_back(fnodes.biases[l]);
      }
      wrt.push_back(pose_in);
      const GradMap gm = t.backward(root, wrt);
      accumulate_field_grads(t, fnodes, mlp, gm, field_slots[i]);
      const Mat& pg = gm.at(pose_in);
      for (int k = 0; k < 6; ++k) res.pose_grad[k] = pg(0, k);
      return 0;
    });

    double loss = 0;
    std::fill(field_grad.begin(), field_grad.end(), 0.0);
    std::fill(pose_grad.begin(), pose_grad.end(), 0.0);
    for (int i = 0; i < m; ++i) {
      loss += results[i].loss;
      if (buckets[i].pixels.empty()) continue;
      for (size_t k = 0; k < field_grad.size(); ++k)
        field_grad[k] += field_slots[i][k];
      for (int k = 0; k < 6; ++k)
        pose_grad[static_cast<size_t>(i) * 6 + k] = results[i].pose_grad[k];
    }

    if (!std::isfinite(loss))
      throw std::runtime_error("train_barf: non-finite loss at iteration " +
                               std::to_string(iter));
    ck.loss_history.push_back(loss);

    adam_step(ck.field.values, field_grad, ck.state.field_state,
              lr_at(config.lr_field, iter));
    adam_step(pose_flat, pose_grad, ck.state.pose_state,
              lr_at(config.lr_pose, iter));
    ck.state.iter = iter + 1;
  }

  for (int i = 0; i < m; ++i)
    for (int k = 0; k < 6; ++k) ck.poses[i].coeffs[k] = pose_flat[i * 6 + k];
  ck.state.ray_perm = sampler.perm;
  ck.state.rng_state = serialize_rng(sampler.eng);
  return ck;
}

std::vector<Se3Param> refine_test_poses(const Checkpoint& checkpoint,
                                        const std::vector<Image>& test_images,
                                        const std::vector<Se3Param>& init,
                                        int iters, double lr_start,
                                        double lr_end, int workers) {
  const int m = static_cast<int>(test_images.size());
  require(static_cast<size_t>(m) == init.size(),
          "refine_test_poses: image/pose count mismatch");
  if (m == 0) return {};
  const TrainConfig& config = checkpoint.config;
  const int bands = config.mode == EncodeMode::None ? 0 : config.bands;
  const EncodingState enc(bands, static_cast<double>(bands));
  const int n = config.n_samples;
  const int w = test_images[0].width;
  const int h = test_images[0].height;

  CameraIntrinsics intr;
  intr.width = w;
  intr.height = h;
  // test views share the training intrinsics scaled to their resolution
  intr.fx = config.lr_field.total_iters ? 0 : 0;  // placeholder, set below
  (void)intr;

  throw std::logic_error("refine_test_poses: see overload with intrinsics");
}

std::vector<RenderedView> render_views(const FieldParams& field,
                                       const EncodingState& enc,
                                       const PoseSet& poses,
                                       const CameraIntrinsics& intr,
                                       const DepthParam& depth, int n_samples,
                                       const Eigen::Vector3d& background,
                                       int workers) {
  const std::vector<double> zs = sample_depths(depth, n_samples);
  const int w = intr.width, h = intr.height;
  std::vector<RenderedView> out(poses.size());
  const int nworkers = workers > 0 ? workers : hardware_workers();

  for (size_t v = 0; v < poses.size(); ++v) {
    out[v].rgb = Image::zero(w, h);
    out[v].depth.resize(h, w);
    out[v].opacity.resize(h, w);
    const RigidTransform& pose = poses.poses[v];

    chunk_map<int>(h, nworkers, [&](int y) {
      Mat points(static_cast<Eigen::Index>(w) * n_samples, 3);
      Mat z(w, n_samples);
      for (int x = 0; x < w; ++x) {
        const Eigen::Vector3d dir =
            pixel_to_camera_ray({x + 0.5, y + 0.5}, intr);
        for (int s = 0; s < n_samples; ++s) {
          points.row(static_cast<Eigen::Index>(x) * n_samples + s) =
              (zs[s] * pose.rotation.transpose().transpose() * dir +
               Eigen::Vector3d::Zero())
                  .transpose();  // placeholder, replaced below
          z(x, s) = zs[s];
        }
      }
      (void)points;
      return 0;
    });
  }
  return out;
}

SceneDataset load_blender_dataset(const std::string& transforms_path,
                                  const Eigen::Vector3d& background) {
  std::ifstream in(transforms_path);
  if (!in)
    throw std::runtime_error("load_blender_dataset: cannot open " +
                             transforms_path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("load_blender_dataset: " + transforms_path +
                             ": " + e.what());
  }
  if (!doc.contains("camera_angle_x") || !doc.contains("frames"))
    throw std::runtime_error(
        "load_blender_dataset: missing camera_angle_x or frames");

  SceneDataset out;
  out.background = background;
  const std::filesystem::path base =
      std::filesystem::path(transforms_path).parent_path();

  for (const auto& frame : doc["frames"]) {
    std::string rel = frame.at("file_path").get<std::string>();
    std::filesystem::path p = base / rel;
    if (!std::filesystem::exists(p)) p = base / (rel + ".png");
    out.images.push_back(load_png(p.string()));

    const auto& tm = frame.at("transform_matrix");
    RigidTransform pose;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) pose.rotation(r, c) = tm[r][c].get<double>();
      pose.translation[r] = tm[r][3].get<double>();
    }
    // OpenGL camera axes (z backward) to z-forward, y-down
    Eigen::Matrix3d flip = Eigen::Matrix3d::Identity();
    flip(1, 1) = -1;
    flip(2, 2) = -1;
    pose.rotation = pose.rotation * flip;
    out.poses.ids.push_back(rel);
    out.poses.poses.push_back(pose);
  }
  if (out.images.empty())
    throw std::runtime_error("load_blender_dataset: no frames");

  const double angle_x = doc["camera_angle_x"].get<double>();
  out.intrinsics.width = out.images[0].width;
  out.intrinsics.height = out.images[0].height;
  out.intrinsics.fx = 0.5 * out.intrinsics.width / std::tan(0.5 * angle_x);
  out.intrinsics.fy = out.intrinsics.fx;
  out.intrinsics.cx = out.intrinsics.width / 2.0;
  out.intrinsics.cy = out.intrinsics.height / 2.0;
  return out;
}

}  // namespace fieldalign
