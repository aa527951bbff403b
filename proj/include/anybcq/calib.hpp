#pragma once

// Output-reconstruction refinement of one precision's scale set against a
// calibration batch X, with every bit-plane held fixed:
//   minimize || X W^T - X W_hat(alpha)^T ||_F^2  over scale set p.

#include <cstddef>

#include "anybcq/progressive.hpp"

namespace anybcq {

enum class RefineSolver { kExact, kGradient };

struct RefineOptions {
  RefineSolver solver = RefineSolver::kExact;
  std::size_t epochs = 10;
  double learning_rate = 1e-4;
};

struct RefineResult {
  ScaleTensor scales;
  double loss_before = 0.0;
  double loss_after = 0.0;
  // Rows whose normal equations were singular or underdetermined and were
  // solved with a ridge term.
  std::size_t ridge_rows = 0;
};

double calibration_loss(const WeightMatrix& w, const QuantizedView& view, const ActivationBatch& x);
double calibration_loss(const WeightMatrix& w, const MultiPrecisionModel& model,
                        const ActivationBatch& x, std::size_t precision);

// Returns the refined scale set for `precision`; the model is not modified.
RefineResult refine_scales(const WeightMatrix& w, const MultiPrecisionModel& model,
                           const ActivationBatch& x, std::size_t precision,
                           const RefineOptions& opts = {});

}  // namespace anybcq
