#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "anybcq/gemv.hpp"

namespace anybcq {

enum class GemvPath { kLut, kNaive, kDense };

const char* path_name(GemvPath path);

struct BenchRow {
  std::size_t rows = 0;
  std::size_t cols = 0;
  GemvPath path = GemvPath::kLut;
  std::size_t precision = 0;  // 32 for the dense real32 baseline
  double median_us = 0.0;
  double min_us = 0.0;
  std::uint64_t plane_bytes = 0;  // per call; weight bytes for the dense path
  std::uint64_t scale_bytes = 0;
  std::uint64_t lut_builds = 0;   // per call
};

struct BenchOptions {
  std::size_t repeats = 32;
  std::vector<GemvPath> paths = {GemvPath::kLut, GemvPath::kNaive};
  GemvOptions gemv;
};

// One warm-up call per (path, precision) is excluded; the timed repeats use a
// monotonic clock and report the median and minimum.
std::vector<BenchRow> bench(const MultiPrecisionModel& model, std::span<const std::size_t> precisions,
                            std::span<const float> x, const BenchOptions& opts = {});
BenchRow bench_dense(const WeightMatrix& w, std::span<const float> x, std::size_t repeats);

// Random planes and positive scales of the requested shape; no fitting.
MultiPrecisionModel synthetic_model(std::size_t rows, std::size_t cols, std::size_t min_precision,
                                    std::size_t max_precision, const QuantConfig& cfg,
                                    std::uint64_t seed);

// (rows, cols) of the linear layers used for latency tables: square and the
// two MLP orientations at hidden sizes 4096, 5120 and 8192.
std::vector<std::pair<std::size_t, std::size_t>> reference_shapes();

std::string format_bench_table(std::span<const BenchRow> rows);
std::string format_bench_csv(std::span<const BenchRow> rows);

}  // namespace anybcq
