#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace fieldalign {

// All tape values are dense row-major double matrices. Vectors are 1xN or Nx1.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

inline bool all_finite(const Mat& m) { return m.allFinite(); }

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

inline Mat row2(double a, double b) {
  Mat m(1, 2);
  m << a, b;
  return m;
}

inline Mat row3(double a, double b, double c) {
  Mat m(1, 3);
  m << a, b, c;
  return m;
}

}  // namespace fieldalign
