#pragma once

// Multi-precision BCQ: one shared stack of bit-planes and an independent
// scale set for every precision in [min_precision, max_precision]. Precision
// p reads planes 1..p and scale set p.

#include <cstddef>
#include <vector>

#include "anybcq/bcq.hpp"

namespace anybcq {

class MultiPrecisionModel {
 public:
  // scale_sets[j] belongs to precision min_precision + j and carries exactly
  // that many plane scales; the plane count must equal the top precision.
  MultiPrecisionModel(BitPlaneSet planes, std::vector<ScaleTensor> scale_sets,
                      std::size_t min_precision, const QuantConfig& config);

  std::size_t min_precision() const noexcept { return min_precision_; }
  std::size_t max_precision() const noexcept { return min_precision_ + scale_sets_.size() - 1; }
  bool supports(std::size_t precision) const noexcept {
    return precision >= min_precision() && precision <= max_precision();
  }
  std::size_t rows() const noexcept { return planes_.rows(); }
  std::size_t cols() const noexcept { return planes_.cols(); }
  std::size_t groups() const noexcept { return config_.groups(cols()); }
  const QuantConfig& config() const noexcept { return config_; }

  const BitPlaneSet& bitplanes() const noexcept { return planes_; }
  const ScaleTensor& scale_set(std::size_t precision) const;
  const std::vector<ScaleTensor>& scale_sets() const noexcept { return scale_sets_; }

  // Replaces scale set `precision`; shape must match. Planes are untouched.
  void set_scale_set(std::size_t precision, ScaleTensor scales);

  QuantizedView view(std::size_t precision) const;

  friend bool operator==(const MultiPrecisionModel&, const MultiPrecisionModel&) = default;

 private:
  void check_precision(std::size_t precision) const;
  void check_scale_shape(std::size_t precision, const ScaleTensor& scales) const;

  BitPlaneSet planes_;
  std::vector<ScaleTensor> scale_sets_;
  std::size_t min_precision_;
  QuantConfig config_;
};

// Fits the base precision with alternate_fit, then grows one plane at a time
// up to max_precision with expand_step.
MultiPrecisionModel build_multiprecision(const WeightMatrix& w, std::size_t min_precision,
                                         std::size_t max_precision, const QuantConfig& cfg);

// Adds plane `precision` (= model.max_precision() + 1) and its scale set.
// Existing planes are frozen; the new scale set starts from the previous one
// with a zero scale for the new plane, then runs cfg.cycles rounds of
// {re-sign the new plane from the residual, least-squares over all scales}.
MultiPrecisionModel expand_step(const WeightMatrix& w, const MultiPrecisionModel& model,
                                std::size_t precision);

QuantizedView precision_view(const MultiPrecisionModel& model, std::size_t precision);

}  // namespace anybcq
