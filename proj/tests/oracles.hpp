#pragma once

// Independent reference computations for tests. These read the packed planes
// only through BitPlaneSet::code and never share code paths with the fitting
// kernels or the GEMV engine.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "anybcq/bcq.hpp"

namespace anybcq::oracle {

// offset + sum_i alpha_i * b_i for one weight, in plane order.
inline double level_value(const ScaleTensor& s, std::size_t row, std::size_t group,
                          std::size_t precision, std::uint32_t pattern) {
  double acc = s.offset(row, group);
  for (std::size_t i = 0; i < precision; ++i) {
    acc += static_cast<double>(s.alpha(i, row, group)) * (((pattern >> i) & 1u) ? 1.0 : -1.0);
  }
  return acc;
}

inline std::uint32_t pattern_at(const BitPlaneSet& planes, std::size_t row, std::size_t col,
                                std::size_t precision) {
  std::uint32_t pattern = 0;
  for (std::size_t i = 0; i < precision; ++i) {
    if (planes.code(i, row, col) > 0) pattern |= 1u << i;
  }
  return pattern;
}

// Dense W_hat (row-major, double) at the given precision.
inline std::vector<double> dense_dequant(const BitPlaneSet& planes, const ScaleTensor& scales,
                                         std::size_t group_size, std::size_t precision) {
  std::vector<double> out(planes.rows() * planes.cols());
  for (std::size_t n = 0; n < planes.rows(); ++n) {
    for (std::size_t k = 0; k < planes.cols(); ++k) {
      out[n * planes.cols() + k] =
          level_value(scales, n, k / group_size, precision, pattern_at(planes, n, k, precision));
    }
  }
  return out;
}

inline double dense_sq_error(const WeightMatrix& w, const std::vector<double>& w_hat) {
  double err = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double d = static_cast<double>(w.data()[i]) - w_hat[i];
    err += d * d;
  }
  return err;
}

// Nearest of all 2^q levels by brute force; exact ties go to the larger level.
inline double exhaustive_level(double w, const ScaleTensor& s, std::size_t row, std::size_t group) {
  const std::size_t q = s.planes();
  double best = 0.0;
  double best_dist = INFINITY;
  for (std::uint32_t pattern = 0; pattern < (1u << q); ++pattern) {
    const double level = level_value(s, row, group, q, pattern);
    const double dist = std::abs(w - level);
    if (dist < best_dist || (dist == best_dist && level > best)) {
      best = level;
      best_dist = dist;
    }
  }
  return best;
}

// y = W_hat x in double from a dense reconstruction.
inline std::vector<double> dense_gemv(const std::vector<double>& w_hat, std::size_t rows,
                                      std::size_t cols, std::span<const float> x) {
  std::vector<double> y(rows, 0.0);
  for (std::size_t n = 0; n < rows; ++n) {
    for (std::size_t k = 0; k < cols; ++k) y[n] += w_hat[n * cols + k] * x[k];
  }
  return y;
}

// max |a - b| / max |b|: deviation relative to the output scale.
template <class A, class B>
double max_relative_deviation(const A& a, const B& b) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    num = std::max(num, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    den = std::max(den, std::abs(static_cast<double>(b[i])));
  }
  return den > 0.0 ? num / den : num;
}

}  // namespace anybcq::oracle
