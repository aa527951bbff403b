#include "linalg.hpp"

#include <algorithm>
#include <cmath>

namespace anybcq::detail {

namespace {

// In-place Cholesky of a copy; false when a pivot falls below tolerance.
bool cholesky_solve(std::vector<double> a, std::span<const double> b, std::size_t n,
                    std::vector<double>& x) {
  double max_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, a[i * n + i]);
  const double tol = 1e-12 * std::max(max_diag, 1e-300);

  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
    if (!(d > tol)) return false;
    const double l = std::sqrt(d);
    a[j * n + j] = l;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
      a[i * n + j] = s / l;
    }
  }
  x.assign(b.begin(), b.end());
  for (std::size_t i = 0; i < n; ++i) {
    double s = x[i];
    for (std::size_t k = 0; k < i; ++k) s -= a[i * n + k] * x[k];
    x[i] = s / a[i * n + i];
  }
  for (std::size_t i = n; i-- > 0;) {
    double s = x[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a[k * n + i] * x[k];
    x[i] = s / a[i * n + i];
  }
  return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

SpdSolve solve_spd(std::span<const double> a, std::span<const double> b, bool force_ridge) {
  const std::size_t n = b.size();
  SpdSolve out;
  std::vector<double> work(a.begin(), a.end());
  if (!force_ridge && cholesky_solve(work, b, n, out.x)) return out;

  double trace = 0.0;
  for (std::size_t i = 0; i < n; ++i) trace += a[i * n + i];
  double lambda = 1e-8 * trace / static_cast<double>(n);
  if (!(lambda > 0.0)) lambda = 1e-12;
  out.ridge_used = true;
  // A tiny ridge may still leave a numerically singular system; grow it.
  for (int attempt = 0; attempt < 32; ++attempt) {
    work.assign(a.begin(), a.end());
    for (std::size_t i = 0; i < n; ++i) work[i * n + i] += lambda;
    if (cholesky_solve(work, b, n, out.x)) return out;
    lambda *= 10.0;
  }
  out.x.assign(n, 0.0);
  return out;
}

}  // namespace anybcq::detail

