#include "fieldalign/fieldnet.hpp"

#include <cmath>

#include "fieldalign/rng.hpp"

namespace fieldalign {

size_t FieldParams::param_count(const MlpConfig& c) {
  size_t n = 0;
  for (int l = 0; l < c.layer_count(); ++l)
    n += static_cast<size_t>(c.layer_in(l)) * c.layer_out(l) + c.layer_out(l);
  return n;
}

size_t FieldParams::weight_offset(int l) const {
  size_t off = 0;
  for (int i = 0; i < l; ++i)
    off += static_cast<size_t>(config.layer_in(i)) * config.layer_out(i) +
           config.layer_out(i);
  return off;
}

size_t FieldParams::bias_offset(int l) const {
  return weight_offset(l) +
         static_cast<size_t>(config.layer_in(l)) * config.layer_out(l);
}

FieldParams init_field(const MlpConfig& config, uint64_t seed) {
  require(config.input_dim > 0, "init_field: input_dim must be positive");
  require(config.output_dim > 0, "init_field: output_dim must be positive");
  for (int h : config.hidden_dims)
    require(h > 0, "init_field: hidden dims must be positive");

  FieldParams p;
  p.config = config;
  p.init_seed = seed;
  p.values.assign(FieldParams::param_count(config), 0.0);
  Rng rng(seed);
  for (int l = 0; l < config.layer_count(); ++l) {
    const double bound = std::sqrt(6.0 / config.layer_in(l));
    double* w = p.values.data() + p.weight_offset(l);
    const size_t n = static_cast<size_t>(config.layer_in(l)) * config.layer_out(l);
    for (size_t i = 0; i < n; ++i) w[i] = rng.uniform(-bound, bound);
    // biases stay zero
  }
  return p;
}

FieldNodes field_input_nodes(Tape& t, const FieldParams& params,
                             bool requires_grad) {
  const MlpConfig& c = params.config;
  require(params.values.size() == FieldParams::param_count(c),
          "field_input_nodes: parameter store size mismatch");
  FieldNodes out;
  for (int l = 0; l < c.layer_count(); ++l) {
    Mat w = Eigen::Map<const Mat>(params.values.data() + params.weight_offset(l),
                                  c.layer_in(l), c.layer_out(l));
    Mat b = Eigen::Map<const Mat>(params.values.data() + params.bias_offset(l),
                                  1, c.layer_out(l));
    out.weights.push_back(requires_grad ? t.input(std::move(w))
                                        : t.constant(std::move(w)));
    out.biases.push_back(requires_grad ? t.input(std::move(b))
                                       : t.constant(std::move(b)));
  }
  return out;
}

NodeId field_raw_node(Tape& t, const FieldNodes& nodes, const MlpConfig& config,
                      const EncodedBlocks& enc) {
  require(enc.dim == config.input_dim,
          "field_raw_node: encoded width does not match config.input_dim");
  const Eigen::Index batch = t.value(enc.blocks.front().id).rows();
  const int h0 = config.layer_out(0);

  NodeId pre = -1;
  for (const auto& blk : enc.blocks) {
    const Eigen::Index cols = t.value(blk.id).cols();
    const NodeId w_rows = t.select(nodes.weights[0], blk.row_offset, 0, cols, h0);
    const NodeId term = t.matmul(blk.id, w_rows);
    pre = (pre < 0) ? term : t.add(pre, term);
  }
  pre = t.add(pre, t.broadcast(nodes.biases[0], batch, h0));
  NodeId act = t.relu(pre);

  for (int l = 1; l < config.layer_count(); ++l) {
    NodeId z = t.add(t.matmul(act, nodes.weights[l]),
                     t.broadcast(nodes.biases[l], batch, config.layer_out(l)));
    act = (l == config.layer_count() - 1) ? z : t.relu(z);
  }
  return act;
}

NodeId rgb_head_node(Tape& t, NodeId raw) {
  require(t.value(raw).cols() == 3, "rgb_head_node: expected Bx3 raw output");
  return t.sigmoid(raw);
}

RadianceNodes radiance_head_node(Tape& t, NodeId raw) {
  const Mat& v = t.value(raw);
  require(v.cols() == 4, "radiance_head_node: expected Bx4 raw output");
  const Eigen::Index b = v.rows();
  return {t.sigmoid(t.select(raw, 0, 0, b, 3)),
          t.softplus(t.select(raw, 0, 3, b, 1))};
}

Eigen::Vector3d forward_rgb(const FieldParams& params, const Eigen::Vector2d& x,
                            const EncodingState& enc) {
  Tape t;
  const NodeId xin = t.constant(row2(x.x(), x.y()));
  const FieldNodes nodes = field_input_nodes(t, params, false);
  const NodeId rgb = rgb_head_node(
      t, field_raw_node(t, nodes, params.config, encode_node(t, xin, enc)));
  const Mat& v = t.value(rgb);
  return {v(0, 0), v(0, 1), v(0, 2)};
}

std::pair<Eigen::Vector3d, double> forward_radiance(const FieldParams& params,
                                                    const Eigen::Vector3d& x,
                                                    const EncodingState& enc) {
  Tape t;
  const NodeId xin = t.constant(row3(x.x(), x.y(), x.z()));
  const FieldNodes nodes = field_input_nodes(t, params, false);
  const RadianceNodes rn = radiance_head_node(
      t, field_raw_node(t, nodes, params.config, encode_node(t, xin, enc)));
  const Mat& c = t.value(rn.color);
  return {{c(0, 0), c(0, 1), c(0, 2)}, t.value(rn.sigma)(0, 0)};
}

void accumulate_field_grads(const Tape& t, const FieldNodes& nodes,
                            const MlpConfig& config, const GradMap& grads,
                            std::span<double> out) {
  (void)t;
  size_t off = 0;
  for (int l = 0; l < config.layer_count(); ++l) {
    const Mat& gw = grads.at(nodes.weights[l]);
    for (Eigen::Index i = 0; i < gw.size(); ++i) out[off + i] += gw.data()[i];
    off += gw.size();
    const Mat& gb = grads.at(nodes.biases[l]);
    for (Eigen::Index i = 0; i < gb.size(); ++i) out[off + i] += gb.data()[i];
    off += gb.size();
  }
}

}  // namespace fieldalign
