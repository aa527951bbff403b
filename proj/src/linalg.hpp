#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace anybcq::detail {

struct SpdSolve {
  std::vector<double> x;
  bool ridge_used = false;
};

// Solves the symmetric positive semi-definite system A x = b (A is n*n,
// row-major) by Cholesky. A singular or numerically indefinite matrix gets a
// ridge term lambda = 1e-8 * trace(A) / n added to the diagonal, and the
// caller is told so. `force_ridge` applies the ridge unconditionally.
SpdSolve solve_spd(std::span<const double> a, std::span<const double> b, bool force_ridge = false);

}  // namespace anybcq::detail
