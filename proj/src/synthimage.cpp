#include "fieldalign/synthimage.hpp"

#include <cmath>

#include "fieldalign/rng.hpp"
#include "fieldalign/tensor.hpp"

namespace fieldalign {

Image synth_image(int size, uint64_t seed, int octaves) {
  require(size >= 16, "synth_image: size too small");
  require(octaves >= 1 && octaves <= 3, "synth_image: octaves in 1..3");
  Image im = Image::zero(size, size);

  // Fine gratings carry a Gaussian envelope: a bare sinusoid is locally
  // periodic and leaves translational alignment ambiguous.
  struct Wave {
    double fx, fy, phase, amp;
    double ex, ey, er;  // envelope center and radius (er < 0: none)
  };
  struct Blob {
    double cx, cy, radius;
    Eigen::Vector3d color;
  };

  Rng waves_rng = Rng::substream(seed, "waves");
  Rng blob_rng = Rng::substream(seed, "blobs");

  const double bases[3] = {1.5, 6.0, 22.0};
  std::vector<std::vector<Wave>> waves(3);
  for (int c = 0; c < 3; ++c) {
    for (int oct = 0; oct < 3; ++oct) {
      const double base = bases[oct];
      const int count = oct == 2 ? 6 : 3;
      for (int i = 0; i < count; ++i) {
        Wave w;
        const double f = base * waves_rng.uniform(0.7, 1.4);
        const double ang = waves_rng.uniform(0, 2 * M_PI);
        w.fx = f * std::cos(ang);
        w.fy = f * std::sin(ang);
        w.phase = waves_rng.uniform(0, 2 * M_PI);
        w.amp = (oct == 0 ? 0.25 : oct == 1 ? 0.12 : 0.14) *
                waves_rng.uniform(0.6, 1.0);
        if (oct == 2) {
          w.ex = waves_rng.uniform(0.1, 0.9);
          w.ey = waves_rng.uniform(0.1, 0.9);
          w.er = waves_rng.uniform(0.08, 0.25);
        } else {
          w.ex = w.ey = 0;
          w.er = -1;
        }
        if (oct < octaves) waves[c].push_back(w);
      }
    }
  }

  std::vector<Blob> blobs;
  for (int i = 0; i < 14; ++i) {
    Blob b;
    b.cx = blob_rng.uniform(0.1, 0.9);
    b.cy = blob_rng.uniform(0.1, 0.9);
    b.radius = blob_rng.uniform(0.05, 0.16);
    b.color = {blob_rng.uniform(-0.5, 0.5), blob_rng.uniform(-0.5, 0.5),
               blob_rng.uniform(-0.5, 0.5)};
    blobs.push_back(b);
  }
  // small sharp features, only with the finest octave enabled
  if (octaves == 3) {
    for (int i = 0; i < 24; ++i) {
      Blob b;
      b.cx = blob_rng.uniform(0.05, 0.95);
      b.cy = blob_rng.uniform(0.05, 0.95);
      b.radius = blob_rng.uniform(0.012, 0.03);
      b.color = {blob_rng.uniform(-0.6, 0.6), blob_rng.uniform(-0.6, 0.6),
                 blob_rng.uniform(-0.6, 0.6)};
      blobs.push_back(b);
    }
  }

  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double u = (x + 0.5) / size;
      const double v = (y + 0.5) / size;
      Eigen::Vector3d rgb{0.5 + 0.2 * (u - 0.5), 0.5 + 0.2 * (v - 0.5),
                          0.5 - 0.1 * (u + v - 1.0)};
      for (int c = 0; c < 3; ++c)
        for (const Wave& w : waves[c]) {
          double a = w.amp;
          if (w.er > 0) {
            const double d2 =
                (u - w.ex) * (u - w.ex) + (v - w.ey) * (v - w.ey);
            a *= std::exp(-d2 / (2 * w.er * w.er));
          }
          rgb[c] += a * std::sin(2 * M_PI * (w.fx * u + w.fy * v) + w.phase);
        }
      for (const Blob& b : blobs) {
        const double d2 = (u - b.cx) * (u - b.cx) + (v - b.cy) * (v - b.cy);
        rgb += b.color * std::exp(-d2 / (2 * b.radius * b.radius));
      }
      for (int c = 0; c < 3; ++c) im.at(y, x, c) = std::clamp(rgb[c], 0.0, 1.0);
    }
  }
  return im;
}

}  // namespace fieldalign
