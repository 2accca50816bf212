#pragma once

#include <string>
#include <vector>

#include "fieldalign/tape.hpp"

namespace fieldalign {

// Frequency-band count L plus the progress scalar alpha in [0, L] driving the
// per-band weights. L = 0 degenerates to the identity mapping.
struct EncodingState {
  int bands = 0;     // L
  double alpha = 0;  // progress in [0, L]

  EncodingState() = default;
  EncodingState(int l, double a);
};

// Smooth band gate: 0 below k, raised-cosine ramp over one unit, then 1.
double band_weight(int k, double alpha);

// The three encoding regimes under comparison: all bands on, no bands, and
// the scheduled coarse-to-fine gate.
enum class EncodeMode { Full, None, CoarseToFine };
EncodeMode parse_mode(const std::string& name);
std::string mode_name(EncodeMode mode);

// Alpha for a mode at an iteration, given the ramp window of c2f mode.
double mode_alpha(EncodeMode mode, int iter, int ramp_start, int ramp_end,
                  int bands);

int encoded_dim(int d, int bands);

// [x, w_0*(cos(pi x), sin(pi x)), w_1*(cos(2 pi x), sin(2 pi x)), ...]
// applied coordinate-wise; output dimension d + 2*d*L.
Vec encode(const Vec& x, const EncodingState& state);

// Analytic (d + 2dL) x d Jacobian of encode; rows of gated-out bands are zero.
Mat encode_jacobian(const Vec& x, const EncodingState& state);

// Tape-side encoding of a batch X (B x d). Instead of materializing one wide
// matrix, the features are kept as column blocks tagged with their offset in
// the encoded layout; fully gated bands are dropped so their gradient
// contribution is nullified exactly. A band with weight exactly 1 skips the
// gating multiply, so the alpha = L graph is bitwise the ungated encoding.
struct EncodedBlocks {
  struct Block {
    NodeId id;       // B x d
    int row_offset;  // offset of this block in the encoded feature layout
  };
  std::vector<Block> blocks;
  int dim = 0;  // full encoded dimension incl. dropped bands
};

EncodedBlocks encode_node(Tape& t, NodeId x, const EncodingState& state);

}  // namespace fieldalign
