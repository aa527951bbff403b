#pragma once

// Matrix-vector products executed directly on packed bit-planes. A call at
// precision p touches planes 1..p and scale set p only, and reports exactly
// how many plane and scale bytes it read.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "anybcq/progressive.hpp"

namespace anybcq {

struct GemvStats {
  std::uint64_t plane_bytes_fetched = 0;
  std::uint64_t scale_bytes_fetched = 0;
  std::uint64_t lut_build_count = 0;
  std::chrono::nanoseconds elapsed{0};
};

// Signed partial sums of x, mu columns at a time: entry t of chunk c is
// sum_j s_j(t) * x[c*mu + j] with s_j(t) = +1 if bit j of t is set, else -1.
// Columns past the end of x count as zero.
class LookupTable {
 public:
  LookupTable(std::span<const float> x, unsigned chunk_bits = 8);

  unsigned chunk_bits() const noexcept { return chunk_bits_; }
  std::size_t entries_per_table() const noexcept { return std::size_t{1} << chunk_bits_; }
  std::size_t table_count() const noexcept { return table_count_; }

  float at(std::size_t chunk, std::size_t index) const {
    return entries_[chunk * entries_per_table() + index];
  }
  std::span<const float> table(std::size_t chunk) const {
    return {entries_.data() + chunk * entries_per_table(), entries_per_table()};
  }

 private:
  unsigned chunk_bits_;
  std::size_t table_count_;
  std::vector<float> entries_;
};

struct GemvOptions {
  unsigned chunk_bits = 8;  // 4 or 8
};

std::vector<float> gemv_naive(const QuantizedView& view, std::span<const float> x,
                              GemvStats* stats = nullptr);
std::vector<float> gemv_lut(const QuantizedView& view, std::span<const float> x,
                            const GemvOptions& opts = {}, GemvStats* stats = nullptr);

std::vector<float> gemv_naive(const MultiPrecisionModel& model, std::size_t precision,
                              std::span<const float> x, GemvStats* stats = nullptr);
std::vector<float> gemv_lut(const MultiPrecisionModel& model, std::size_t precision,
                            std::span<const float> x, const GemvOptions& opts = {},
                            GemvStats* stats = nullptr);

// Plain real32 GEMV over a dense matrix, written in the same loop style as
// gemv_naive; the baseline quantized execution is measured against.
std::vector<float> gemv_dense(const WeightMatrix& w, std::span<const float> x,
                              GemvStats* stats = nullptr);

// Bytes a full GEMV at `precision` must read from the planes.
std::uint64_t expected_plane_bytes(std::size_t rows, std::size_t cols, std::size_t precision);

}  // namespace anybcq
