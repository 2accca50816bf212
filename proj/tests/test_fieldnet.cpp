#include <cmath>

#include "doctest.h"
#include "fieldalign/fieldnet.hpp"
#include "fieldalign/rng.hpp"

using namespace fieldalign;

namespace {

MlpConfig planar_config(int bands) {
  MlpConfig c;
  c.input_dim = encoded_dim(2, bands);
  c.hidden_dims = {256, 256, 256, 256};
  c.output_dim = 3;
  c.head = OutputHead::RgbSigmoid;
  return c;
}

MlpConfig small_radiance_config(int bands) {
  MlpConfig c;
  c.input_dim = encoded_dim(3, bands);
  c.hidden_dims = {32, 32};
  c.output_dim = 4;
  c.head = OutputHead::RgbPlusDensity;
  return c;
}

// Independent plain-Eigen forward pass used as a second route.
Vec plain_forward(const FieldParams& p, Vec x) {
  const MlpConfig& c = p.config;
  for (int l = 0; l < c.layer_count(); ++l) {
    Eigen::Map<const Mat> w(p.values.data() + p.weight_offset(l),
                            c.layer_in(l), c.layer_out(l));
    Eigen::Map<const Mat> b(p.values.data() + p.bias_offset(l), 1,
                            c.layer_out(l));
    Vec z = w.transpose() * x + b.transpose();
    if (l + 1 < c.layer_count()) z = z.cwiseMax(0.0);
    x = z;
  }
  return x;
}

}  // namespace

TEST_CASE("init_field: determinism and parameter count") {
  const MlpConfig c = planar_config(8);
  CHECK(c.input_dim == 34);
  const FieldParams a = init_field(c, 123);
  const FieldParams b = init_field(c, 123);
  CHECK(a.values == b.values);
  const FieldParams other = init_field(c, 124);
  CHECK(a.values != other.values);

  const size_t expect = 34 * 256 + 256 + 3 * (256 * 256 + 256) + 256 * 3 + 3;
  CHECK(a.values.size() == expect);
  CHECK(FieldParams::param_count(c) == expect);
}

TEST_CASE("init_field rejects non-positive dims") {
  MlpConfig c = planar_config(8);
  c.hidden_dims[1] = 0;
  CHECK_THROWS_AS(init_field(c, 1), std::invalid_argument);
  c = planar_config(8);
  c.output_dim = -1;
  CHECK_THROWS_AS(init_field(c, 1), std::invalid_argument);
}

TEST_CASE("init_field: empirical std near the fan-in-scaled nominal value") {
  const MlpConfig c = planar_config(8);
  const FieldParams p = init_field(c, 7);
  // second layer: 256 -> 256, bound sqrt(6/256), uniform std = bound/sqrt(3)
  const double nominal = std::sqrt(6.0 / 256.0) / std::sqrt(3.0);
  const size_t off = p.weight_offset(1);
  double sum = 0, sum2 = 0;
  const size_t n = 256 * 256;
  for (size_t i = 0; i < n; ++i) {
    sum += p.values[off + i];
    sum2 += p.values[off + i] * p.values[off + i];
  }
  const double mean = sum / n;
  const double stddev = std::sqrt(sum2 / n - mean * mean);
  CHECK(stddev > 0.7 * nominal);
  CHECK(stddev < 1.3 * nominal);
  // biases zero
  const size_t boff = p.bias_offset(1);
  for (int i = 0; i < 256; ++i) CHECK(p.values[boff + i] == 0.0);
}

TEST_CASE("forward_rgb: zero weights give sigmoid(0)") {
  MlpConfig c = planar_config(2);
  FieldParams p;
  p.config = c;
  p.values.assign(FieldParams::param_count(c), 0.0);
  const Eigen::Vector3d rgb =
      forward_rgb(p, {0.3, -0.4}, EncodingState(2, 1.0));
  for (int i = 0; i < 3; ++i) CHECK(rgb[i] == doctest::Approx(0.5));
}

TEST_CASE("forward_radiance: zero weights give 0.5 color and ln 2 density") {
  MlpConfig c = small_radiance_config(2);
  FieldParams p;
  p.config = c;
  p.values.assign(FieldParams::param_count(c), 0.0);
  const auto [rgb, sigma] =
      forward_radiance(p, {0.1, 0.2, 0.3}, EncodingState(2, 2.0));
  for (int i = 0; i < 3; ++i) CHECK(rgb[i] == doctest::Approx(0.5));
  CHECK(sigma == doctest::Approx(std::log(2.0)));
}

TEST_CASE("outputs bounded: rgb in (0,1), sigma >= 0") {
  const MlpConfig c = small_radiance_config(4);
  const FieldParams p = init_field(c, 11);
  Rng rng(19);
  const EncodingState enc(4, 2.7);
  for (int i = 0; i < 1000; ++i) {
    const Eigen::Vector3d x{rng.uniform(-3, 3), rng.uniform(-3, 3),
                            rng.uniform(-3, 3)};
    const auto [rgb, sigma] = forward_radiance(p, x, enc);
    for (int k = 0; k < 3; ++k) {
      CHECK(rgb[k] > 0.0);
      CHECK(rgb[k] < 1.0);
    }
    CHECK(sigma >= 0.0);
  }
}

TEST_CASE("L = 0 reproduces a plain MLP on raw coordinates") {
  MlpConfig c;
  c.input_dim = 3;
  c.hidden_dims = {16, 16};
  c.output_dim = 4;
  c.head = OutputHead::RgbPlusDensity;
  const FieldParams p = init_field(c, 31);
  Rng rng(37);
  for (int i = 0; i < 20; ++i) {
    const Eigen::Vector3d x{rng.uniform(-2, 2), rng.uniform(-2, 2),
                            rng.uniform(-2, 2)};
    const auto [rgb, sigma] = forward_radiance(p, x, EncodingState(0, 0.0));
    Vec raw = plain_forward(p, x);
    for (int k = 0; k < 3; ++k)
      CHECK(rgb[k] == doctest::Approx(1.0 / (1.0 + std::exp(-raw[k]))).epsilon(1e-12));
    CHECK(sigma ==
          doctest::Approx(std::log1p(std::exp(-std::abs(raw[3]))) +
                          std::max(raw[3], 0.0)).epsilon(1e-12));
  }
}

TEST_CASE("gradient w.r.t. input coordinates matches finite differences") {
  const MlpConfig c = small_radiance_config(3);
  const FieldParams p = init_field(c, 41);
  const EncodingState enc(3, 1.8);

  const GraphFn fn = [&](Tape& t, NodeId x) {
    const FieldNodes nodes = field_input_nodes(t, p, false);
    const NodeId raw = field_raw_node(t, nodes, c, encode_node(t, x, enc));
    const RadianceNodes rn = radiance_head_node(t, raw);
    return t.add(t.sum(t.square(rn.color)), t.sum(t.square(rn.sigma)));
  };
  Rng rng(43);
  double worst = 0;
  for (int i = 0; i < 50; ++i) {
    Mat x(1, 3);
    for (int k = 0; k < 3; ++k) x(0, k) = rng.uniform(-1, 1);
    worst = std::max(worst, finite_diff_check(fn, x, 1e-6));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("parameter gradients match finite differences on sampled entries") {
  MlpConfig c;
  c.input_dim = encoded_dim(2, 2);
  c.hidden_dims = {12, 12};
  c.output_dim = 3;
  c.head = OutputHead::RgbSigmoid;
  FieldParams p = init_field(c, 47);
  const EncodingState enc(2, 1.3);

  Mat pts(5, 2);
  Rng rng(53);
  for (Eigen::Index i = 0; i < pts.size(); ++i)
    pts.data()[i] = rng.uniform(-1, 1);
  Mat target(5, 3);
  for (Eigen::Index i = 0; i < target.size(); ++i)
    target.data()[i] = rng.uniform(0, 1);

  auto loss_value = [&](const FieldParams& params) {
    Tape t;
    const FieldNodes nodes = field_input_nodes(t, params, false);
    const NodeId rgb = rgb_head_node(
        t, field_raw_node(t, nodes, c, encode_node(t, t.constant(pts), enc)));
    Tape::Node dummy [[maybe_unused]];
    return t.value(t.sum(t.square(t.sub(rgb, t.constant(target)))))(0, 0);
  };

  // analytic
  Tape t;
  const FieldNodes nodes = field_input_nodes(t, p, true);
  const NodeId rgb = rgb_head_node(
      t, field_raw_node(t, nodes, c, encode_node(t, t.constant(pts), enc)));
  const NodeId root = t.sum(t.square(t.sub(rgb, t.constant(target))));
  std::vector<NodeId> wrt;
  for (size_t l = 0; l < nodes.weights.size(); ++l) {
    wrt.push_back(nodes.weights[l]);
    wrt.push_back(nodes.biases[l]);
  }
  const GradMap gm = t.backward(root, wrt);
  std::vector<double> flat(p.values.size(), 0.0);
  accumulate_field_grads(t, nodes, c, gm, flat);

  const double eps = 1e-6;
  for (int rep = 0; rep < 60; ++rep) {
    const size_t idx = rng.integer(p.values.size());
    FieldParams pp = p, pm = p;
    pp.values[idx] += eps;
    pm.values[idx] -= eps;
    const double fd = (loss_value(pp) - loss_value(pm)) / (2 * eps);
    const double err =
        std::abs(flat[idx] - fd) / std::max(1.0, std::abs(flat[idx]));
    CHECK(err < 1e-4);
  }
}
