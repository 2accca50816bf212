#pragma once

#include <cstdint>

#include "fieldalign/image.hpp"

namespace fieldalign {

// Deterministic multi-scale test texture: smooth color gradients, mid-scale
// blobs and fine gratings, so alignment experiments see content at every
// frequency band.
// octaves: 1 = smooth gradients only, 2 = + mid-scale detail, 3 = + fine
// gratings (default).
Image synth_image(int size, uint64_t seed, int octaves = 3);

}  // namespace fieldalign
