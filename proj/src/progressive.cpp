#include "anybcq/progressive.hpp"

#include <string>
#include <utility>

#include "anybcq/parallel.hpp"
#include "bcq_kernels.hpp"

namespace anybcq {

MultiPrecisionModel::MultiPrecisionModel(BitPlaneSet planes, std::vector<ScaleTensor> scale_sets,
                                         std::size_t min_precision, const QuantConfig& config)
    : planes_(std::move(planes)),
      scale_sets_(std::move(scale_sets)),
      min_precision_(min_precision),
      config_(config) {
  config_.validate();
  require(min_precision_ >= 1 && !scale_sets_.empty(), ErrorCode::kInvalidArgument,
          "a model needs at least one precision >= 1");
  require(max_precision() <= kMaxPlanes, ErrorCode::kInvalidArgument,
          "precision above " + std::to_string(kMaxPlanes) + " is not supported");
  require(planes_.planes() == max_precision(), ErrorCode::kShapeMismatch,
          "plane count must equal the highest precision");
  for (std::size_t p = min_precision_; p <= max_precision(); ++p) {
    check_scale_shape(p, scale_sets_[p - min_precision_]);
  }
  planes_.freeze(planes_.planes());
}

void MultiPrecisionModel::check_precision(std::size_t precision) const {
  require(supports(precision), ErrorCode::kInvalidArgument,
          "precision " + std::to_string(precision) + " outside model range [" +
              std::to_string(min_precision()) + ", " + std::to_string(max_precision()) + "]");
}

void MultiPrecisionModel::check_scale_shape(std::size_t precision,
                                            const ScaleTensor& scales) const {
  require(scales.planes() == precision && scales.rows() == rows() && scales.groups() == groups() &&
              scales.has_offset() == config_.asymmetric(),
          ErrorCode::kShapeMismatch,
          "scale set shape does not match precision " + std::to_string(precision));
}

const ScaleTensor& MultiPrecisionModel::scale_set(std::size_t precision) const {
  check_precision(precision);
  return scale_sets_[precision - min_precision_];
}

void MultiPrecisionModel::set_scale_set(std::size_t precision, ScaleTensor scales) {
  check_precision(precision);
  check_scale_shape(precision, scales);
  scale_sets_[precision - min_precision_] = std::move(scales);
}

QuantizedView MultiPrecisionModel::view(std::size_t precision) const {
  return QuantizedView(planes_, scale_set(precision), config_, precision);
}

QuantizedView precision_view(const MultiPrecisionModel& model, std::size_t precision) {
  return model.view(precision);
}

MultiPrecisionModel build_multiprecision(const WeightMatrix& w, std::size_t min_precision,
                                         std::size_t max_precision, const QuantConfig& cfg) {
  require(min_precision >= 1 && min_precision <= max_precision, ErrorCode::kInvalidArgument,
          "precision range must satisfy 1 <= low <= high");
  require(max_precision <= kMaxPlanes, ErrorCode::kInvalidArgument,
          "precision above " + std::to_string(kMaxPlanes) + " is not supported");
  QuantizedMatrix base = alternate_fit(w, min_precision, cfg);
  MultiPrecisionModel model(std::move(base.bitplanes), {std::move(base.scales)}, min_precision,
                            cfg);
  for (std::size_t p = min_precision + 1; p <= max_precision; ++p) {
    model = expand_step(w, model, p);
  }
  return model;
}

MultiPrecisionModel expand_step(const WeightMatrix& w, const MultiPrecisionModel& model,
                                std::size_t precision) {
  require(precision == model.max_precision() + 1, ErrorCode::kInvalidArgument,
          "expansion must add exactly one plane above the current top precision");
  require(precision <= kMaxPlanes, ErrorCode::kInvalidArgument,
          "precision above " + std::to_string(kMaxPlanes) + " is not supported");
  require(w.rows() == model.rows() && w.cols() == model.cols(), ErrorCode::kShapeMismatch,
          "weight matrix shape does not match the model");
  detail::require_finite(w);

  const auto& cfg = model.config();
  const std::size_t cols = w.cols();
  const std::size_t prev = precision - 1;
  const std::size_t new_plane = precision - 1;  // zero-based index of plane `precision`

  BitPlaneSet planes = model.bitplanes().extended(precision);
  planes.freeze(prev);

  const ScaleTensor& prev_scales = model.scale_set(prev);
  ScaleTensor scales(precision, model.rows(), model.groups(), cfg.asymmetric());

  parallel_for(w.rows(), [&](std::size_t row_begin, std::size_t row_end) {
    detail::RowCodes codes(precision, cols);
    for (std::size_t n = row_begin; n < row_end; ++n) {
      const auto w_row = w.row(n);
      detail::load_row_codes(planes, n, codes);
      std::int8_t* fresh = codes.plane(new_plane);
      for (std::size_t gi = 0; gi < model.groups(); ++gi) {
        const auto g = detail::group_span(cfg, cols, gi);
        // Previous precision extended with a zero scale: always feasible, and
        // reconstructs exactly what precision p-1 did.
        detail::GroupScales extended = detail::load_group_scales(prev_scales, n, gi, prev);
        extended.alpha[new_plane] = 0.0f;
        detail::GroupScales current = extended;
        for (std::size_t t = 0; t < cfg.cycles; ++t) {
          for (std::size_t k = g.begin; k < g.end; ++k) {
            const double r = static_cast<double>(w_row[k]) -
                             detail::reconstruct(codes, k, prev, current);
            fresh[k] = r >= 0.0 ? 1 : -1;
          }
          const auto fit = detail::solve_group_ls(w_row, codes, g, precision, cfg.asymmetric());
          current = detail::group_sq_error(w_row, codes, g, precision, fit.scales) <=
                            detail::group_sq_error(w_row, codes, g, precision, extended)
                        ? fit.scales
                        : extended;
        }
        detail::store_group_scales(scales, n, gi, precision, current);
      }
      detail::store_row_codes(planes, n, codes, new_plane);
    }
  });

  std::vector<ScaleTensor> scale_sets = model.scale_sets();
  scale_sets.push_back(std::move(scales));
  return MultiPrecisionModel(std::move(planes), std::move(scale_sets), model.min_precision(), cfg);
}

}  // namespace anybcq
