#include "fieldalign/evalkit.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"

namespace fieldalign {

Eigen::Vector3d camera_center(const RigidTransform& extrinsic) {
  return -(extrinsic.rotation.transpose() * extrinsic.translation);
}

Similarity procrustes(const std::vector<Eigen::Vector3d>& ref_centers,
                      const std::vector<Eigen::Vector3d>& opt_centers) {
  const size_t m = ref_centers.size();
  require(m >= 3, "procrustes: need at least 3 centers");
  require(opt_centers.size() == m, "procrustes: center count mismatch");

  Similarity sim;
  sim.t.setZero();
  sim.t_hat.setZero();
  for (size_t i = 0; i < m; ++i) {
    sim.t += ref_centers[i];
    sim.t_hat += opt_centers[i];
  }
  sim.t /= static_cast<double>(m);
  sim.t_hat /= static_cast<double>(m);

  double sq = 0, sq_hat = 0;
  for (size_t i = 0; i < m; ++i) {
    sq += (ref_centers[i] - sim.t).squaredNorm();
    sq_hat += (opt_centers[i] - sim.t_hat).squaredNorm();
  }
  sim.s = std::sqrt(sq / m);
  sim.s_hat = std::sqrt(sq_hat / m);
  if (sim.s < 1e-12 || sim.s_hat < 1e-12)
    throw std::runtime_error("procrustes: degenerate (coincident centers)");

  Eigen::Matrix3d cross = Eigen::Matrix3d::Zero();
  for (size_t i = 0; i < m; ++i)
    cross += (ref_centers[i] - sim.t) * (opt_centers[i] - sim.t_hat).transpose();
  cross /= sim.s * sim.s_hat;

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(
      cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  sim.r = svd.matrixU() * svd.matrixV().transpose();
  if (sim.r.determinant() < 0) sim.r.row(2) *= -1.0;
  return sim;
}

PoseSet prealign(const PoseSet& ref_extrinsics, const PoseSet& opt_extrinsics) {
  const size_t m = ref_extrinsics.size();
  require(opt_extrinsics.size() == m, "prealign: pose count mismatch");
  require(m >= 3, "prealign: need at least 3 poses");

  std::vector<Eigen::Vector3d> ref_centers, opt_centers;
  for (size_t i = 0; i < m; ++i) {
    ref_centers.push_back(camera_center(ref_extrinsics.poses[i]));
    opt_centers.push_back(camera_center(opt_extrinsics.poses[i]));
  }
  const Similarity sim = procrustes(ref_centers, opt_centers);

  PoseSet out;
  out.ids = opt_extrinsics.ids;
  for (size_t i = 0; i < m; ++i) {
    const Eigen::Vector3d center_aligned =
        sim.s * (sim.r * ((opt_centers[i] - sim.t_hat) / sim.s_hat)) + sim.t;
    RigidTransform p;
    p.rotation = opt_extrinsics.poses[i].rotation * sim.r.transpose();
    // t = -R o keeps the extrinsic consistent with its mapped center
    p.translation = -(p.rotation * center_aligned);
    out.poses.push_back(p);
  }
  return out;
}

RigidTransform map_to_opt_frame(const Similarity& sim,
                                const RigidTransform& ref_extrinsic) {
  const Eigen::Vector3d center = camera_center(ref_extrinsic);
  const Eigen::Vector3d center_opt =
      sim.s_hat * (sim.r.transpose() * ((center - sim.t) / sim.s)) + sim.t_hat;
  RigidTransform out;
  out.rotation = ref_extrinsic.rotation * sim.r;
  out.translation = -(out.rotation * center_opt);
  return out;
}

double rotation_error_deg(const Eigen::Matrix3d& r_ref,
                          const Eigen::Matrix3d& r_opt) {
  const double arg =
      std::clamp(0.5 * ((r_ref * r_opt.transpose()).trace() - 1.0), -1.0, 1.0);
  return std::acos(arg) * 180.0 / M_PI;
}

double translation_error(const PoseSet& a, const PoseSet& b) {
  require(a.size() == b.size() && a.size() > 0,
          "translation_error: pose count mismatch");
  double sum = 0;
  for (size_t i = 0; i < a.size(); ++i)
    sum += (camera_center(a.poses[i]) - camera_center(b.poses[i])).norm();
  return sum / static_cast<double>(a.size());
}

double psnr(const Image& a, const Image& b) {
  require(a.width == b.width && a.height == b.height,
          "psnr: image shape mismatch");
  double mse = 0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.data.size());
  if (mse <= 0.0) return 100.0;
  return std::min(100.0, -10.0 * std::log10(mse));
}

namespace {

std::vector<double> gaussian_kernel_11() {
  std::vector<double> k(11);
  double sum = 0;
  for (int i = 0; i < 11; ++i) {
    const double d = i - 5.0;
    k[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    sum += k[i];
  }
  for (auto& v : k) v /= sum;
  return k;
}

// separable valid-region Gaussian filter
Eigen::MatrixXd gauss_filter(const Eigen::MatrixXd& img,
                             const std::vector<double>& k) {
  const int h = static_cast<int>(img.rows());
  const int w = static_cast<int>(img.cols());
  const int r = static_cast<int>(k.size());
  Eigen::MatrixXd rows(h, w - r + 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x + r <= w; ++x) {
      double acc = 0;
      for (int i = 0; i < r; ++i) acc += k[i] * img(y, x + i);
      rows(y, x) = acc;
    }
  Eigen::MatrixXd out(h - r + 1, w - r + 1);
  for (int y = 0; y + r <= h; ++y)
    for (int x = 0; x < out.cols(); ++x) {
      double acc = 0;
      for (int i = 0; i < r; ++i) acc += k[i] * rows(y + i, x);
      out(y, x) = acc;
    }
  return out;
}

}  // namespace

double ssim(const Image& a, const Image& b) {
  require(a.width == b.width && a.height == b.height,
          "ssim: image shape mismatch");
  require(a.width >= 11 && a.height >= 11,
          "ssim: image smaller than the 11x11 window");
  const std::vector<double> kernel = gaussian_kernel_11();
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;

  double total = 0;
  for (int ch = 0; ch < 3; ++ch) {
    Eigen::MatrixXd ia(a.height, a.width), ib(a.height, a.width);
    for (int y = 0; y < a.height; ++y)
      for (int x = 0; x < a.width; ++x) {
        ia(y, x) = a.at(y, x, ch);
        ib(y, x) = b.at(y, x, ch);
      }
    const Eigen::MatrixXd mu_a = gauss_filter(ia, kernel);
    const Eigen::MatrixXd mu_b = gauss_filter(ib, kernel);
    const Eigen::MatrixXd aa = gauss_filter(ia.cwiseProduct(ia), kernel);
    const Eigen::MatrixXd bb = gauss_filter(ib.cwiseProduct(ib), kernel);
    const Eigen::MatrixXd ab = gauss_filter(ia.cwiseProduct(ib), kernel);

    double sum = 0;
    for (int y = 0; y < mu_a.rows(); ++y)
      for (int x = 0; x < mu_a.cols(); ++x) {
        const double ma = mu_a(y, x), mb = mu_b(y, x);
        const double va = aa(y, x) - ma * ma;
        const double vb = bb(y, x) - mb * mb;
        const double cov = ab(y, x) - ma * mb;
        sum += ((2 * ma * mb + c1) * (2 * cov + c2)) /
               ((ma * ma + mb * mb + c1) * (va + vb + c2));
      }
    total += sum / (mu_a.rows() * mu_a.cols());
  }
  return total / 3.0;
}

PoseSet load_pose_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_pose_json: cannot open " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("load_pose_json: " + path + ": " + e.what());
  }
  if (!doc.is_array())
    throw std::runtime_error("load_pose_json: expected a JSON list in " + path);

  PoseSet out;
  int line = 0;
  for (const auto& entry : doc) {
    ++line;
    if (!entry.contains("id") || !entry.contains("extrinsic"))
      throw std::runtime_error("load_pose_json: entry " + std::to_string(line) +
                               " misses id/extrinsic");
    const auto& e = entry["extrinsic"];
    if (!e.is_array() || e.size() != 16)
      throw std::runtime_error("load_pose_json: entry " + std::to_string(line) +
                               ": extrinsic must hold 16 row-major values");
    RigidTransform p;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) p.rotation(r, c) = e[r * 4 + c].get<double>();
      p.translation[r] = e[r * 4 + 3].get<double>();
    }
    out.ids.push_back(entry["id"].is_string()
                          ? entry["id"].get<std::string>()
                          : entry["id"].dump());
    out.poses.push_back(p);
  }
  return out;
}

void save_pose_json(const PoseSet& poses, const std::string& path) {
  nlohmann::json doc = nlohmann::json::array();
  for (size_t i = 0; i < poses.size(); ++i) {
    nlohmann::json e;
    e["id"] = i < poses.ids.size() ? poses.ids[i] : std::to_string(i);
    std::vector<double> flat(16, 0.0);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) flat[r * 4 + c] = poses.poses[i].rotation(r, c);
      flat[r * 4 + 3] = poses.poses[i].translation[r];
    }
    flat[15] = 1.0;
    e["extrinsic"] = flat;
    doc.push_back(e);
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_pose_json: cannot open " + path);
  out << doc.dump(1) << "\n";
}

}  // namespace fieldalign
