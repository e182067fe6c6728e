#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace grudw {

using Vec = std::vector<double>;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dense row-major matrix. Only what the recurrent cell needs.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

inline void require_size(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw DimensionError(std::string(what) + ": expected length " + std::to_string(want) +
                         ", got " + std::to_string(got));
  }
}

// out += M * v
inline void gemv_acc(const Matrix& m, std::span<const double> v, std::span<double> out) {
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double* row = &m.data[r * m.cols];
    double acc = 0.0;
    for (std::size_t c = 0; c < m.cols; ++c) acc += row[c] * v[c];
    out[r] += acc;
  }
}

// out += M^T * v
inline void gemv_t_acc(const Matrix& m, std::span<const double> v, std::span<double> out) {
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double* row = &m.data[r * m.cols];
    const double vr = v[r];
    if (vr == 0.0) continue;
    for (std::size_t c = 0; c < m.cols; ++c) out[c] += row[c] * vr;
  }
}

// M += a * b^T
inline void outer_acc(Matrix& m, std::span<const double> a, std::span<const double> b) {
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double ar = a[r];
    if (ar == 0.0) continue;
    double* row = &m.data[r * m.cols];
    for (std::size_t c = 0; c < m.cols; ++c) row[c] += ar * b[c];
  }
}

inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

}  // namespace grudw
