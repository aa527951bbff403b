#pragma once

// Row/group primitives shared by the fitting stages. Every error figure that
// feeds a keep-or-reject decision goes through group_sq_error, so the
// comparisons and the reported reconstruction error use identical arithmetic.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "anybcq/bcq.hpp"

namespace anybcq::detail {

struct GroupSpan {
  std::size_t index;
  std::size_t begin;
  std::size_t end;
  std::size_t size() const noexcept { return end - begin; }
};

inline GroupSpan group_span(const QuantConfig& cfg, std::size_t cols, std::size_t group) {
  const std::size_t begin = group * cfg.group_size;
  const std::size_t end = begin + cfg.group_size < cols ? begin + cfg.group_size : cols;
  return {group, begin, end};
}

// Codes of one row: plane i, column k lives at codes[i * cols + k].
struct RowCodes {
  std::size_t planes = 0;
  std::size_t cols = 0;
  std::vector<std::int8_t> codes;

  RowCodes(std::size_t p, std::size_t k) : planes(p), cols(k), codes(p * k, 1) {}
  std::int8_t* plane(std::size_t i) { return codes.data() + i * cols; }
  const std::int8_t* plane(std::size_t i) const { return codes.data() + i * cols; }
};

void load_row_codes(const BitPlaneSet& planes, std::size_t row, RowCodes& out);
// Packs planes [first, out.planes) of `codes` into `planes` for one row.
void store_row_codes(BitPlaneSet& planes, std::size_t row, const RowCodes& codes,
                     std::size_t first_plane = 0);

struct GroupScales {
  std::array<float, kMaxPlanes> alpha{};
  float offset = 0.0f;
};

GroupScales load_group_scales(const ScaleTensor& scales, std::size_t row, std::size_t group,
                              std::size_t precision);
void store_group_scales(ScaleTensor& scales, std::size_t row, std::size_t group,
                        std::size_t precision, const GroupScales& s);

// offset + sum_i alpha_i * code_i, accumulated in double in plane order.
inline double reconstruct(const RowCodes& codes, std::size_t col, std::size_t precision,
                          const GroupScales& s) {
  double acc = static_cast<double>(s.offset);
  for (std::size_t i = 0; i < precision; ++i) {
    acc += static_cast<double>(s.alpha[i]) * codes.plane(i)[col];
  }
  return acc;
}

double group_sq_error(std::span<const float> w_row, const RowCodes& codes, const GroupSpan& g,
                      std::size_t precision, const GroupScales& s);

struct GroupLsResult {
  GroupScales scales;
  bool ridge_used = false;
};

// Least squares for the group's plane scales (and offset when requested)
// against the given weights, with codes fixed. The result is rounded to
// real32 storage.
GroupLsResult solve_group_ls(std::span<const float> w_row, const RowCodes& codes,
                             const GroupSpan& g, std::size_t precision, bool with_offset);

void validate_view(const QuantizedView& view);
void require_finite(const WeightMatrix& w);

}  // namespace anybcq::detail
