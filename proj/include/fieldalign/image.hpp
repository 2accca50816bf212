#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace fieldalign {

// RGB image, values in [0,1], row-major (y, x, channel).
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  static Image zero(int w, int h) {
    Image im;
    im.width = w;
    im.height = h;
    im.data.assign(static_cast<size_t>(w) * h * 3, 0.0);
    return im;
  }

  double& at(int y, int x, int c) {
    return data[(static_cast<size_t>(y) * width + x) * 3 + c];
  }
  double at(int y, int x, int c) const {
    return data[(static_cast<size_t>(y) * width + x) * 3 + c];
  }
  Eigen::Vector3d pixel(int y, int x) const {
    return {at(y, x, 0), at(y, x, 1), at(y, x, 2)};
  }
  void set_pixel(int y, int x, const Eigen::Vector3d& rgb) {
    for (int c = 0; c < 3; ++c) at(y, x, c) = rgb[c];
  }
  size_t pixel_count() const { return static_cast<size_t>(width) * height; }
};

Image load_png(const std::string& path);
void save_png(const Image& im, const std::string& path);

// Bilinear sample at continuous pixel coordinates (x right, y down), clamped
// to the image border.
Eigen::Vector3d sample_bilinear(const Image& im, double x, double y);

// Grayscale visualization helper: map values to [0,1] over [lo, hi].
Image gray_image(const Eigen::MatrixXd& values, double lo, double hi);

}  // namespace fieldalign
