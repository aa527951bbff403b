#pragma once

// Fixed-precision binary-coded quantization: W ~ sum_i alpha_i * B_i (+ z),
// with B_i in {-1,+1}, fitted per row and per group of consecutive columns.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "anybcq/tensor_io.hpp"

namespace anybcq {

enum class QuantMode : std::uint8_t { kSymmetric = 0, kAsymmetric = 1 };

// Largest supported plane count; the code recalibration enumerates 2^q levels.
inline constexpr std::size_t kMaxPlanes = 16;

struct QuantConfig {
  std::size_t group_size = 128;
  QuantMode mode = QuantMode::kAsymmetric;
  std::size_t cycles = 20;

  bool asymmetric() const noexcept { return mode == QuantMode::kAsymmetric; }
  // Number of column groups for a row of `cols` weights; the last may be ragged.
  std::size_t groups(std::size_t cols) const noexcept {
    return (cols + group_size - 1) / group_size;
  }
  void validate() const;

  friend bool operator==(const QuantConfig&, const QuantConfig&) = default;
};

// Packed sign planes. Per plane and row there are ceil(cols/32) words; bit j
// of word w is column 32*w+j. A set bit is +1, a clear bit is -1, and the
// padding bits past the last column stay zero. Words are stored plane-major,
// then row-major.
class BitPlaneSet {
 public:
  BitPlaneSet() = default;
  BitPlaneSet(std::size_t planes, std::size_t rows, std::size_t cols);

  std::size_t planes() const noexcept { return planes_; }
  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t words_per_row() const noexcept { return words_per_row_; }

  int code(std::size_t plane, std::size_t row, std::size_t col) const {
    const std::uint32_t word = row_words(plane, row)[col >> 5];
    return ((word >> (col & 31)) & 1u) ? 1 : -1;
  }
  void set_code(std::size_t plane, std::size_t row, std::size_t col, int code);

  std::span<const std::uint32_t> row_words(std::size_t plane, std::size_t row) const {
    return {words_.data() + (plane * rows_ + row) * words_per_row_, words_per_row_};
  }
  std::span<std::uint32_t> mutable_row_words(std::size_t plane, std::size_t row);

  std::span<const std::uint32_t> plane_words(std::size_t plane) const {
    return {words_.data() + plane * rows_ * words_per_row_, rows_ * words_per_row_};
  }
  std::span<const std::uint32_t> words() const noexcept { return words_; }
  std::span<std::uint32_t> mutable_words();

  // Planes below `count` reject every write with std::logic_error.
  void freeze(std::size_t count);
  std::size_t frozen_planes() const noexcept { return frozen_; }

  // Copy holding the first `planes` planes.
  BitPlaneSet prefix(std::size_t planes) const;
  // Copy with `planes` planes: the existing ones followed by zeroed ones.
  BitPlaneSet extended(std::size_t planes) const;

  friend bool operator==(const BitPlaneSet& a, const BitPlaneSet& b) {
    return a.planes_ == b.planes_ && a.rows_ == b.rows_ && a.cols_ == b.cols_ &&
           a.words_ == b.words_;
  }

 private:
  void check_writable(std::size_t plane) const;

  std::size_t planes_ = 0;
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::size_t words_per_row_ = 0;
  std::size_t frozen_ = 0;
  std::vector<std::uint32_t> words_;
};

// Pack a row of +-1 codes (any non-negative value counts as +1).
std::vector<std::uint32_t> pack_signs(std::span<const std::int8_t> codes);
std::vector<std::int8_t> unpack_signs(std::span<const std::uint32_t> words, std::size_t cols);

// Per-plane, per-row, per-group scales, stored plane-major then row-major
// then group-major; plus one offset per row and group in asymmetric mode.
class ScaleTensor {
 public:
  ScaleTensor() = default;
  ScaleTensor(std::size_t planes, std::size_t rows, std::size_t groups, bool has_offset);

  std::size_t planes() const noexcept { return planes_; }
  std::size_t rows() const noexcept { return rows_; }
  std::size_t groups() const noexcept { return groups_; }
  bool has_offset() const noexcept { return !offsets_.empty(); }

  float alpha(std::size_t plane, std::size_t row, std::size_t group) const {
    return alphas_[(plane * rows_ + row) * groups_ + group];
  }
  float& alpha(std::size_t plane, std::size_t row, std::size_t group) {
    return alphas_[(plane * rows_ + row) * groups_ + group];
  }
  float offset(std::size_t row, std::size_t group) const {
    return offsets_.empty() ? 0.0f : offsets_[row * groups_ + group];
  }
  float& offset(std::size_t row, std::size_t group) { return offsets_[row * groups_ + group]; }

  std::span<const float> alphas() const noexcept { return alphas_; }
  std::span<float> alphas() noexcept { return alphas_; }
  std::span<const float> offsets() const noexcept { return offsets_; }
  std::span<float> offsets() noexcept { return offsets_; }

  friend bool operator==(const ScaleTensor&, const ScaleTensor&) = default;

 private:
  std::size_t planes_ = 0;
  std::size_t rows_ = 0;
  std::size_t groups_ = 0;
  std::vector<float> alphas_;
  std::vector<float> offsets_;
};

// Non-owning pairing of the first `precision` bit-planes with the first
// `precision` plane scales of a scale set. Dequantization, error and GEMV
// all read through this.
class QuantizedView {
 public:
  QuantizedView(const BitPlaneSet& planes, const ScaleTensor& scales, const QuantConfig& config,
                std::size_t precision);

  std::size_t precision() const noexcept { return precision_; }
  std::size_t rows() const noexcept { return planes_->rows(); }
  std::size_t cols() const noexcept { return planes_->cols(); }
  std::size_t groups() const noexcept { return scales_->groups(); }
  const BitPlaneSet& bitplanes() const noexcept { return *planes_; }
  const ScaleTensor& scales() const noexcept { return *scales_; }
  const QuantConfig& config() const noexcept { return config_; }

 private:
  const BitPlaneSet* planes_;
  const ScaleTensor* scales_;
  QuantConfig config_;
  std::size_t precision_;
};

struct QuantizedMatrix {
  BitPlaneSet bitplanes;
  ScaleTensor scales;
  QuantConfig config;

  std::size_t planes() const noexcept { return bitplanes.planes(); }
  QuantizedView view() const { return view(planes()); }
  QuantizedView view(std::size_t precision) const {
    return QuantizedView(bitplanes, scales, config, precision);
  }

  friend bool operator==(const QuantizedMatrix&, const QuantizedMatrix&) = default;
};

// Error after initialization and after every half-step of the alternation.
struct FitTrace {
  std::vector<double> errors;
};

QuantizedMatrix greedy_init(const WeightMatrix& w, std::size_t planes, const QuantConfig& cfg);

ScaleTensor ls_update_scales(const WeightMatrix& w, const QuantizedMatrix& qm);

BitPlaneSet bs_recalibrate_codes(const WeightMatrix& w, const ScaleTensor& scales,
                                 const QuantConfig& cfg);

QuantizedMatrix alternate_fit(const WeightMatrix& w, std::size_t planes, const QuantConfig& cfg,
                              FitTrace* trace = nullptr);

WeightMatrix dequantize(const QuantizedView& view);
WeightMatrix dequantize(const QuantizedMatrix& qm, std::size_t precision);

// ||W - W_hat||_F^2, accumulated in double per row and group.
double reconstruction_error(const WeightMatrix& w, const QuantizedView& view);
double reconstruction_error(const WeightMatrix& w, const QuantizedMatrix& qm, std::size_t precision);
double relative_reconstruction_error(const WeightMatrix& w, const QuantizedView& view);
double relative_reconstruction_error(const WeightMatrix& w, const QuantizedMatrix& qm,
                                     std::size_t precision);

double squared_norm(const WeightMatrix& w);

// Shape-only copy of the first `precision` plane scales (and the offsets).
ScaleTensor truncate_scales(const ScaleTensor& scales, std::size_t precision);

}  // namespace anybcq
