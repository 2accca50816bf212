#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "fieldalign/encoding.hpp"
#include "fieldalign/tape.hpp"

namespace fieldalign {

enum class OutputHead { RgbSigmoid, RgbPlusDensity };

struct MlpConfig {
  int input_dim = 0;  // post-encoding width
  std::vector<int> hidden_dims;
  int output_dim = 0;
  OutputHead head = OutputHead::RgbSigmoid;

  int layer_count() const { return static_cast<int>(hidden_dims.size()) + 1; }
  int layer_in(int l) const {
    return l == 0 ? input_dim : hidden_dims[l - 1];
  }
  int layer_out(int l) const {
    return l == layer_count() - 1 ? output_dim : hidden_dims[l];
  }
};

// Flat parameter store, layout [W0 | b0 | W1 | b1 | ...] with W row-major
// (in x out). Shapes derive from the config.
struct FieldParams {
  MlpConfig config;
  uint64_t init_seed = 0;
  std::vector<double> values;

  size_t weight_offset(int l) const;
  size_t bias_offset(int l) const;
  static size_t param_count(const MlpConfig& c);
};

// Fan-in-scaled uniform weights, bound sqrt(6 / fan_in); biases zero.
FieldParams init_field(const MlpConfig& config, uint64_t seed);

struct FieldNodes {
  std::vector<NodeId> weights;
  std::vector<NodeId> biases;
};

FieldNodes field_input_nodes(Tape& t, const FieldParams& params,
                             bool requires_grad = true);

// ReLU stack from encoded feature blocks to the raw (pre-head) outputs.
// First-layer weights are consumed as row blocks matching the encoding
// layout, so gated-out bands never touch the graph.
NodeId field_raw_node(Tape& t, const FieldNodes& nodes, const MlpConfig& config,
                      const EncodedBlocks& enc);

NodeId rgb_head_node(Tape& t, NodeId raw);

struct RadianceNodes {
  NodeId color;  // B x 3 in (0,1)
  NodeId sigma;  // B x 1, softplus >= 0
};
RadianceNodes radiance_head_node(Tape& t, NodeId raw);

// Single-point conveniences (throwaway tape)
Eigen::Vector3d forward_rgb(const FieldParams& params, const Eigen::Vector2d& x,
                            const EncodingState& enc);
std::pair<Eigen::Vector3d, double> forward_radiance(const FieldParams& params,
                                                    const Eigen::Vector3d& x,
                                                    const EncodingState& enc);

// Scatter-add tape gradients for the field inputs into a flat buffer laid out
// like FieldParams::values.
void accumulate_field_grads(const Tape& t, const FieldNodes& nodes,
                            const MlpConfig& config, const GradMap& grads,
                            std::span<double> out);

}  // namespace fieldalign
