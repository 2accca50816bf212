#include "fieldalign/encoding.hpp"

#include <cmath>

#include "fieldalign/optim.hpp"

namespace fieldalign {

EncodeMode parse_mode(const std::string& name) {
  if (name == "full") return EncodeMode::Full;
  if (name == "none") return EncodeMode::None;
  if (name == "c2f") return EncodeMode::CoarseToFine;
  throw std::invalid_argument("unknown encoding mode '" + name +
                              "' (expected full, none or c2f)");
}

std::string mode_name(EncodeMode mode) {
  switch (mode) {
    case EncodeMode::Full: return "full";
    case EncodeMode::None: return "none";
    case EncodeMode::CoarseToFine: return "c2f";
  }
  return "?";
}

double mode_alpha(EncodeMode mode, int iter, int ramp_start, int ramp_end,
                  int bands) {
  switch (mode) {
    case EncodeMode::Full: return static_cast<double>(bands);
    case EncodeMode::None: return 0.0;
    case EncodeMode::CoarseToFine:
      return alpha_at(iter, ramp_start, ramp_end, bands);
  }
  return 0.0;
}

EncodingState::EncodingState(int l, double a) : bands(l), alpha(a) {
  require(l >= 0, "EncodingState: band count must be >= 0");
  require(a >= 0.0 && a <= static_cast<double>(l),
          "EncodingState: alpha must lie in [0, L]");
}

double band_weight(int k, double alpha) {
  const double r = alpha - static_cast<double>(k);
  if (r < 0.0) return 0.0;
  if (r >= 1.0) return 1.0;
  return 0.5 * (1.0 - std::cos(r * M_PI));
}

int encoded_dim(int d, int bands) { return d + 2 * d * bands; }

Vec encode(const Vec& x, const EncodingState& state) {
  const Eigen::Index d = x.size();
  Vec out(encoded_dim(static_cast<int>(d), state.bands));
  out.head(d) = x;
  for (int k = 0; k < state.bands; ++k) {
    const double w = band_weight(k, state.alpha);
    const double freq = std::pow(2.0, k) * M_PI;
    for (Eigen::Index j = 0; j < d; ++j) {
      out[d + 2 * d * k + j] = w * std::cos(freq * x[j]);
      out[d + 2 * d * k + d + j] = w * std::sin(freq * x[j]);
    }
  }
  return out;
}

Mat encode_jacobian(const Vec& x, const EncodingState& state) {
  const Eigen::Index d = x.size();
  Mat jac = Mat::Zero(encoded_dim(static_cast<int>(d), state.bands), d);
  for (Eigen::Index j = 0; j < d; ++j) jac(j, j) = 1.0;
  for (int k = 0; k < state.bands; ++k) {
    const double w = band_weight(k, state.alpha);
    if (w == 0.0) continue;
    const double freq = std::pow(2.0, k) * M_PI;
    for (Eigen::Index j = 0; j < d; ++j) {
      jac(d + 2 * d * k + j, j) = -w * freq * std::sin(freq * x[j]);
      jac(d + 2 * d * k + d + j, j) = w * freq * std::cos(freq * x[j]);
    }
  }
  return jac;
}

EncodedBlocks encode_node(Tape& t, NodeId x, const EncodingState& state) {
  const Eigen::Index rows = t.value(x).rows();
  const Eigen::Index cols = t.value(x).cols();
  const int d = static_cast<int>(cols);
  EncodedBlocks out;
  out.dim = encoded_dim(d, state.bands);
  out.blocks.push_back({x, 0});
  for (int k = 0; k < state.bands; ++k) {
    const double w = band_weight(k, state.alpha);
    if (w == 0.0) continue;
    const double freq = std::pow(2.0, k) * M_PI;
    const NodeId arg = t.mul(x, t.broadcast(t.scalar(freq), rows, cols));
    NodeId cos_b = t.cos(arg);
    NodeId sin_b = t.sin(arg);
    if (w != 1.0) {
      const NodeId gate = t.broadcast(t.scalar(w), rows, cols);
      cos_b = t.mul(cos_b, gate);
      sin_b = t.mul(sin_b, gate);
    }
    out.blocks.push_back({cos_b, d + 2 * d * k});
    out.blocks.push_back({sin_b, d + 2 * d * k + d});
  }
  return out;
}

}  // namespace fieldalign
