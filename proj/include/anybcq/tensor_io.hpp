#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "anybcq/error.hpp"

namespace anybcq {

// Dense row-major real32 matrix. The tag keeps weights and activation
// batches from being mixed up at call sites; both share the FMAT format.
template <class Tag>
class DenseMatrix {
 public:
  DenseMatrix() = default;

  DenseMatrix(std::size_t rows, std::size_t cols)
      : DenseMatrix(rows, cols, std::vector<float>(rows * cols, 0.0f)) {}

  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<float> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    require(rows_ >= 1 && cols_ >= 1, ErrorCode::kInvalidArgument,
            "matrix dimensions must be >= 1");
    require(data_.size() == rows_ * cols_, ErrorCode::kShapeMismatch,
            "matrix data length does not match rows*cols");
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  float operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  float& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }

  std::span<const float> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<float> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }

  std::span<const float> data() const noexcept { return data_; }
  std::span<float> data() noexcept { return data_; }

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

struct WeightTag {};
struct ActivationTag {};

using WeightMatrix = DenseMatrix<WeightTag>;
using ActivationBatch = DenseMatrix<ActivationTag>;

// FMAT: "FMAT", u32 version, u8 dtype, 3 reserved bytes, u64 rows, u64 cols,
// then rows*cols little-endian real32 values.
inline constexpr std::size_t kFmatHeaderBytes = 28;
inline constexpr std::uint32_t kFmatVersion = 1;

WeightMatrix load_matrix(const std::filesystem::path& path);
ActivationBatch load_activations(const std::filesystem::path& path);

void save_matrix(const WeightMatrix& m, const std::filesystem::path& path);
void save_activations(const ActivationBatch& x, const std::filesystem::path& path);

bool all_finite(std::span<const float> values);

// xoshiro256** (Blackman & Vigna), seeded through splitmix64. The raw 64-bit
// stream is bit-identical on every platform.
class Xoshiro256 {
 public:
  explicit Xoshiro256(std::uint64_t seed);

  std::uint64_t next();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Standard normal via the Box-Muller transform; values come in pairs.
  double normal();

 private:
  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// i.i.d. N(0,1) entries, row-major draw order from Xoshiro256(seed).
WeightMatrix random_gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed);
ActivationBatch random_activations(std::size_t samples, std::size_t cols, std::uint64_t seed);

}  // namespace anybcq
