#include "anybcq/bcq.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

#include "anybcq/parallel.hpp"
#include "bcq_kernels.hpp"
#include "linalg.hpp"

namespace anybcq {

void QuantConfig::validate() const {
  require(group_size >= 1, ErrorCode::kInvalidArgument, "group size must be >= 1");
}

// ---------------------------------------------------------------------------
// BitPlaneSet

BitPlaneSet::BitPlaneSet(std::size_t planes, std::size_t rows, std::size_t cols)
    : planes_(planes),
      rows_(rows),
      cols_(cols),
      words_per_row_((cols + 31) / 32),
      words_(planes * rows * words_per_row_, 0u) {
  require(planes >= 1 && rows >= 1 && cols >= 1, ErrorCode::kInvalidArgument,
          "bit-plane set dimensions must be >= 1");
}

void BitPlaneSet::check_writable(std::size_t plane) const {
  if (plane < frozen_) {
    throw std::logic_error("write to frozen bit-plane " + std::to_string(plane + 1));
  }
}

void BitPlaneSet::set_code(std::size_t plane, std::size_t row, std::size_t col, int code) {
  check_writable(plane);
  std::uint32_t& word = words_[(plane * rows_ + row) * words_per_row_ + (col >> 5)];
  const std::uint32_t bit = 1u << (col & 31);
  if (code >= 0) {
    word |= bit;
  } else {
    word &= ~bit;
  }
}

std::span<std::uint32_t> BitPlaneSet::mutable_row_words(std::size_t plane, std::size_t row) {
  check_writable(plane);
  return {words_.data() + (plane * rows_ + row) * words_per_row_, words_per_row_};
}

std::span<std::uint32_t> BitPlaneSet::mutable_words() {
  check_writable(0);
  return words_;
}

void BitPlaneSet::freeze(std::size_t count) { frozen_ = std::min(count, planes_); }

BitPlaneSet BitPlaneSet::prefix(std::size_t planes) const {
  require(planes >= 1 && planes <= planes_, ErrorCode::kInvalidArgument,
          "prefix plane count out of range");
  BitPlaneSet out(planes, rows_, cols_);
  std::copy_n(words_.begin(), out.words_.size(), out.words_.begin());
  return out;
}

BitPlaneSet BitPlaneSet::extended(std::size_t planes) const {
  require(planes >= planes_, ErrorCode::kInvalidArgument, "cannot shrink when extending");
  BitPlaneSet out(planes, rows_, cols_);
  std::copy(words_.begin(), words_.end(), out.words_.begin());
  return out;
}

std::vector<std::uint32_t> pack_signs(std::span<const std::int8_t> codes) {
  std::vector<std::uint32_t> words((codes.size() + 31) / 32, 0u);
  for (std::size_t k = 0; k < codes.size(); ++k) {
    if (codes[k] >= 0) words[k >> 5] |= 1u << (k & 31);
  }
  return words;
}

std::vector<std::int8_t> unpack_signs(std::span<const std::uint32_t> words, std::size_t cols) {
  std::vector<std::int8_t> codes(cols);
  for (std::size_t k = 0; k < cols; ++k) {
    codes[k] = ((words[k >> 5] >> (k & 31)) & 1u) ? 1 : -1;
  }
  return codes;
}

// ---------------------------------------------------------------------------
// ScaleTensor / views

ScaleTensor::ScaleTensor(std::size_t planes, std::size_t rows, std::size_t groups,
                         bool has_offset)
    : planes_(planes),
      rows_(rows),
      groups_(groups),
      alphas_(planes * rows * groups, 0.0f),
      offsets_(has_offset ? rows * groups : 0, 0.0f) {
  require(planes >= 1 && rows >= 1 && groups >= 1, ErrorCode::kInvalidArgument,
          "scale tensor dimensions must be >= 1");
}

QuantizedView::QuantizedView(const BitPlaneSet& planes, const ScaleTensor& scales,
                             const QuantConfig& config, std::size_t precision)
    : planes_(&planes), scales_(&scales), config_(config), precision_(precision) {
  require(precision >= 1 && precision <= planes.planes() && precision <= scales.planes(),
          ErrorCode::kInvalidArgument,
          "precision " + std::to_string(precision) + " out of range");
  detail::validate_view(*this);
}

ScaleTensor truncate_scales(const ScaleTensor& scales, std::size_t precision) {
  require(precision >= 1 && precision <= scales.planes(), ErrorCode::kInvalidArgument,
          "precision out of range");
  ScaleTensor out(precision, scales.rows(), scales.groups(), scales.has_offset());
  std::copy_n(scales.alphas().begin(), out.alphas().size(), out.alphas().begin());
  std::copy(scales.offsets().begin(), scales.offsets().end(), out.offsets().begin());
  return out;
}

namespace detail {

void validate_view(const QuantizedView& view) {
  const auto& planes = view.bitplanes();
  const auto& scales = view.scales();
  const auto& cfg = view.config();
  cfg.validate();
  require(scales.rows() == planes.rows() && scales.groups() == cfg.groups(planes.cols()),
          ErrorCode::kShapeMismatch, "scale tensor shape does not match the bit-planes");
  require(scales.has_offset() == cfg.asymmetric(), ErrorCode::kShapeMismatch,
          "offsets must be present exactly in asymmetric mode");
}

void require_finite(const WeightMatrix& w) {
  require(all_finite(w.data()), ErrorCode::kNonFinite, "weight matrix has non-finite entries");
}

void load_row_codes(const BitPlaneSet& planes, std::size_t row, RowCodes& out) {
  for (std::size_t i = 0; i < out.planes; ++i) {
    const auto words = planes.row_words(i, row);
    std::int8_t* dst = out.plane(i);
    for (std::size_t k = 0; k < out.cols; ++k) {
      dst[k] = ((words[k >> 5] >> (k & 31)) & 1u) ? 1 : -1;
    }
  }
}

void store_row_codes(BitPlaneSet& planes, std::size_t row, const RowCodes& codes,
                     std::size_t first_plane) {
  for (std::size_t i = first_plane; i < codes.planes; ++i) {
    auto words = planes.mutable_row_words(i, row);
    std::fill(words.begin(), words.end(), 0u);
    const std::int8_t* src = codes.plane(i);
    for (std::size_t k = 0; k < codes.cols; ++k) {
      if (src[k] >= 0) words[k >> 5] |= 1u << (k & 31);
    }
  }
}

GroupScales load_group_scales(const ScaleTensor& scales, std::size_t row, std::size_t group,
                              std::size_t precision) {
  GroupScales s;
  for (std::size_t i = 0; i < precision; ++i) s.alpha[i] = scales.alpha(i, row, group);
  s.offset = scales.offset(row, group);
  return s;
}

void store_group_scales(ScaleTensor& scales, std::size_t row, std::size_t group,
                        std::size_t precision, const GroupScales& s) {
  for (std::size_t i = 0; i < precision; ++i) scales.alpha(i, row, group) = s.alpha[i];
  if (scales.has_offset()) scales.offset(row, group) = s.offset;
}

double group_sq_error(std::span<const float> w_row, const RowCodes& codes, const GroupSpan& g,
                      std::size_t precision, const GroupScales& s) {
  double err = 0.0;
  for (std::size_t k = g.begin; k < g.end; ++k) {
    const double d = static_cast<double>(w_row[k]) - reconstruct(codes, k, precision, s);
    err += d * d;
  }
  return err;
}

GroupLsResult solve_group_ls(std::span<const float> w_row, const RowCodes& codes,
                             const GroupSpan& g, std::size_t precision, bool with_offset) {
  const std::size_t m = precision + (with_offset ? 1 : 0);
  std::vector<double> a(m * m, 0.0);
  std::vector<double> b(m, 0.0);
  auto design = [&](std::size_t col, std::size_t k) -> double {
    return col < precision ? static_cast<double>(codes.plane(col)[k]) : 1.0;
  };
  for (std::size_t k = g.begin; k < g.end; ++k) {
    const double wk = w_row[k];
    for (std::size_t r = 0; r < m; ++r) {
      const double dr = design(r, k);
      b[r] += dr * wk;
      for (std::size_t c = 0; c <= r; ++c) a[r * m + c] += dr * design(c, k);
    }
  }
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = r + 1; c < m; ++c) a[r * m + c] = a[c * m + r];
  }
  const auto solved = solve_spd(a, b);
  GroupLsResult out;
  out.ridge_used = solved.ridge_used;
  for (std::size_t i = 0; i < precision; ++i) out.scales.alpha[i] = static_cast<float>(solved.x[i]);
  if (with_offset) out.scales.offset = static_cast<float>(solved.x[precision]);
  return out;
}

}  // namespace detail

namespace {

using detail::GroupScales;
using detail::RowCodes;

void check_fit_args(const WeightMatrix& w, std::size_t planes, const QuantConfig& cfg) {
  cfg.validate();
  require(planes >= 1, ErrorCode::kInvalidArgument, "plane count must be >= 1");
  require(planes <= kMaxPlanes, ErrorCode::kInvalidArgument,
          "plane count above " + std::to_string(kMaxPlanes) + " is not supported");
  detail::require_finite(w);
}

void check_shapes(const WeightMatrix& w, const BitPlaneSet& planes) {
  require(w.rows() == planes.rows() && w.cols() == planes.cols(), ErrorCode::kShapeMismatch,
          "weight matrix shape does not match the quantized matrix");
}

}  // namespace

// ---------------------------------------------------------------------------
// Fitting

QuantizedMatrix greedy_init(const WeightMatrix& w, std::size_t planes, const QuantConfig& cfg) {
  check_fit_args(w, planes, cfg);
  const std::size_t rows = w.rows();
  const std::size_t cols = w.cols();
  const std::size_t groups = cfg.groups(cols);
  QuantizedMatrix qm{BitPlaneSet(planes, rows, cols),
                     ScaleTensor(planes, rows, groups, cfg.asymmetric()), cfg};

  parallel_for(rows, [&](std::size_t row_begin, std::size_t row_end) {
    RowCodes codes(planes, cols);
    std::vector<double> residual(cols);
    for (std::size_t n = row_begin; n < row_end; ++n) {
      const auto w_row = w.row(n);
      for (std::size_t gi = 0; gi < groups; ++gi) {
        const auto g = detail::group_span(cfg, cols, gi);
        const double len = static_cast<double>(g.size());
        GroupScales s;
        if (cfg.asymmetric()) {
          double sum = 0.0;
          for (std::size_t k = g.begin; k < g.end; ++k) sum += w_row[k];
          s.offset = static_cast<float>(sum / len);
        }
        for (std::size_t k = g.begin; k < g.end; ++k) {
          residual[k] = static_cast<double>(w_row[k]) - static_cast<double>(s.offset);
        }
        for (std::size_t i = 0; i < planes; ++i) {
          std::int8_t* b = codes.plane(i);
          double abs_sum = 0.0;
          for (std::size_t k = g.begin; k < g.end; ++k) {
            b[k] = residual[k] >= 0.0 ? 1 : -1;
            abs_sum += std::abs(residual[k]);
          }
          s.alpha[i] = static_cast<float>(abs_sum / len);
          const double alpha = s.alpha[i];
          for (std::size_t k = g.begin; k < g.end; ++k) residual[k] -= alpha * b[k];
        }
        detail::store_group_scales(qm.scales, n, gi, planes, s);
      }
      detail::store_row_codes(qm.bitplanes, n, codes);
    }
  });
  return qm;
}

ScaleTensor ls_update_scales(const WeightMatrix& w, const QuantizedMatrix& qm) {
  const auto view = qm.view();
  check_shapes(w, qm.bitplanes);
  const auto& cfg = qm.config;
  const std::size_t planes = qm.planes();
  const std::size_t cols = w.cols();
  ScaleTensor out = qm.scales;

  parallel_for(w.rows(), [&](std::size_t row_begin, std::size_t row_end) {
    RowCodes codes(planes, cols);
    for (std::size_t n = row_begin; n < row_end; ++n) {
      const auto w_row = w.row(n);
      detail::load_row_codes(view.bitplanes(), n, codes);
      for (std::size_t gi = 0; gi < view.groups(); ++gi) {
        const auto g = detail::group_span(cfg, cols, gi);
        const auto incumbent = detail::load_group_scales(qm.scales, n, gi, planes);
        const auto fit = detail::solve_group_ls(w_row, codes, g, planes, cfg.asymmetric());
        // Rounding the solution to real32 can lose to an incumbent that was
        // already optimal; never step uphill.
        if (detail::group_sq_error(w_row, codes, g, planes, fit.scales) <=
            detail::group_sq_error(w_row, codes, g, planes, incumbent)) {
          detail::store_group_scales(out, n, gi, planes, fit.scales);
        }
      }
    }
  });
  return out;
}

BitPlaneSet bs_recalibrate_codes(const WeightMatrix& w, const ScaleTensor& scales,
                                 const QuantConfig& cfg) {
  cfg.validate();
  const std::size_t planes = scales.planes();
  require(planes <= kMaxPlanes, ErrorCode::kInvalidArgument,
          "code recalibration supports at most " + std::to_string(kMaxPlanes) + " planes");
  require(scales.rows() == w.rows() && scales.groups() == cfg.groups(w.cols()),
          ErrorCode::kShapeMismatch, "scale tensor shape does not match the weights");
  require(all_finite(scales.alphas()) && all_finite(scales.offsets()), ErrorCode::kNonFinite,
          "scales must be finite");

  const std::size_t cols = w.cols();
  const std::size_t level_count = std::size_t{1} << planes;
  BitPlaneSet out(planes, w.rows(), cols);

  parallel_for(w.rows(), [&](std::size_t row_begin, std::size_t row_end) {
    RowCodes codes(planes, cols);
    std::vector<std::pair<double, std::uint32_t>> levels(level_count);
    std::vector<double> level_values(level_count);
    for (std::size_t n = row_begin; n < row_end; ++n) {
      const auto w_row = w.row(n);
      for (std::size_t gi = 0; gi < scales.groups(); ++gi) {
        const auto g = detail::group_span(cfg, cols, gi);
        const auto s = detail::load_group_scales(scales, n, gi, planes);
        // Same accumulation order as detail::reconstruct, so each level equals
        // the value the error kernel will reconstruct for that pattern.
        for (std::uint32_t pattern = 0; pattern < level_count; ++pattern) {
          double acc = static_cast<double>(s.offset);
          for (std::size_t i = 0; i < planes; ++i) {
            acc += static_cast<double>(s.alpha[i]) * (((pattern >> i) & 1u) ? 1 : -1);
          }
          levels[pattern] = {acc, pattern};
        }
        std::sort(levels.begin(), levels.end());
        for (std::size_t l = 0; l < level_count; ++l) level_values[l] = levels[l].first;

        for (std::size_t k = g.begin; k < g.end; ++k) {
          const double wk = w_row[k];
          const auto it = std::lower_bound(level_values.begin(), level_values.end(), wk);
          std::size_t pick;
          if (it == level_values.begin()) {
            pick = 0;
          } else if (it == level_values.end()) {
            pick = level_count - 1;
          } else {
            const std::size_t hi = static_cast<std::size_t>(it - level_values.begin());
            // Exact midpoints go to the larger level.
            pick = (level_values[hi] - wk) <= (wk - level_values[hi - 1]) ? hi : hi - 1;
          }
          const std::uint32_t pattern = levels[pick].second;
          for (std::size_t i = 0; i < planes; ++i) {
            codes.plane(i)[k] = ((pattern >> i) & 1u) ? 1 : -1;
          }
        }
      }
      detail::store_row_codes(out, n, codes);
    }
  });
  return out;
}

QuantizedMatrix alternate_fit(const WeightMatrix& w, std::size_t planes, const QuantConfig& cfg,
                              FitTrace* trace) {
  QuantizedMatrix qm = greedy_init(w, planes, cfg);
  auto record = [&] {
    if (trace != nullptr) trace->errors.push_back(reconstruction_error(w, qm.view()));
  };
  record();
  for (std::size_t t = 0; t < cfg.cycles; ++t) {
    qm.scales = ls_update_scales(w, qm);
    record();
    qm.bitplanes = bs_recalibrate_codes(w, qm.scales, cfg);
    record();
  }
  return qm;
}

// ---------------------------------------------------------------------------
// Reconstruction

WeightMatrix dequantize(const QuantizedView& view) {
  const std::size_t rows = view.rows();
  const std::size_t cols = view.cols();
  const std::size_t p = view.precision();
  WeightMatrix out(rows, cols);
  parallel_for(rows, [&](std::size_t row_begin, std::size_t row_end) {
    RowCodes codes(p, cols);
    for (std::size_t n = row_begin; n < row_end; ++n) {
      detail::load_row_codes(view.bitplanes(), n, codes);
      auto dst = out.row(n);
      for (std::size_t gi = 0; gi < view.groups(); ++gi) {
        const auto g = detail::group_span(view.config(), cols, gi);
        const auto s = detail::load_group_scales(view.scales(), n, gi, p);
        for (std::size_t k = g.begin; k < g.end; ++k) {
          dst[k] = static_cast<float>(detail::reconstruct(codes, k, p, s));
        }
      }
    }
  });
  return out;
}

WeightMatrix dequantize(const QuantizedMatrix& qm, std::size_t precision) {
  return dequantize(qm.view(precision));
}

double reconstruction_error(const WeightMatrix& w, const QuantizedView& view) {
  require(w.rows() == view.rows() && w.cols() == view.cols(), ErrorCode::kShapeMismatch,
          "weight matrix shape does not match the quantized matrix");
  const std::size_t cols = w.cols();
  const std::size_t p = view.precision();
  std::vector<double> row_errors(w.rows(), 0.0);
  parallel_for(w.rows(), [&](std::size_t row_begin, std::size_t row_end) {
    RowCodes codes(p, cols);
    for (std::size_t n = row_begin; n < row_end; ++n) {
      detail::load_row_codes(view.bitplanes(), n, codes);
      double err = 0.0;
      for (std::size_t gi = 0; gi < view.groups(); ++gi) {
        const auto g = detail::group_span(view.config(), cols, gi);
        err += detail::group_sq_error(w.row(n), codes, g, p,
                                      detail::load_group_scales(view.scales(), n, gi, p));
      }
      row_errors[n] = err;
    }
  });
  double total = 0.0;
  for (double e : row_errors) total += e;
  return total;
}

double reconstruction_error(const WeightMatrix& w, const QuantizedMatrix& qm,
                            std::size_t precision) {
  return reconstruction_error(w, qm.view(precision));
}

double squared_norm(const WeightMatrix& w) {
  double total = 0.0;
  for (float v : w.data()) total += static_cast<double>(v) * v;
  return total;
}

double relative_reconstruction_error(const WeightMatrix& w, const QuantizedView& view) {
  const double norm = squared_norm(w);
  const double err = reconstruction_error(w, view);
  return norm > 0.0 ? err / norm : err;
}

double relative_reconstruction_error(const WeightMatrix& w, const QuantizedMatrix& qm,
                                     std::size_t precision) {
  return relative_reconstruction_error(w, qm.view(precision));
}

}  // namespace anybcq
