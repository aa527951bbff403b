#include "anybcq/bench.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "anybcq/tensor_io.hpp"

namespace anybcq {

namespace {

template <class Call>
BenchRow time_calls(std::size_t repeats, Call&& call) {
  require(repeats >= 1, ErrorCode::kInvalidArgument, "repeats must be >= 1");
  GemvStats warm;
  call(warm);
  std::vector<double> samples;
  samples.reserve(repeats);
  for (std::size_t r = 0; r < repeats; ++r) {
    GemvStats stats;
    call(stats);
    samples.push_back(std::chrono::duration<double, std::micro>(stats.elapsed).count());
  }
  std::sort(samples.begin(), samples.end());
  BenchRow row;
  const std::size_t mid = samples.size() / 2;
  row.median_us = samples.size() % 2 == 1 ? samples[mid] : 0.5 * (samples[mid - 1] + samples[mid]);
  row.min_us = samples.front();
  row.plane_bytes = warm.plane_bytes_fetched;
  row.scale_bytes = warm.scale_bytes_fetched;
  row.lut_builds = warm.lut_build_count;
  return row;
}

}  // namespace

const char* path_name(GemvPath path) {
  switch (path) {
    case GemvPath::kLut: return "lut";
    case GemvPath::kNaive: return "naive";
    case GemvPath::kDense: return "dense";
  }
  return "?";
}

std::vector<BenchRow> bench(const MultiPrecisionModel& model, std::span<const std::size_t> precisions,
                            std::span<const float> x, const BenchOptions& opts) {
  std::vector<BenchRow> out;
  for (GemvPath path : opts.paths) {
    if (path == GemvPath::kDense) {
      const WeightMatrix dense = dequantize(model.view(model.max_precision()));
      out.push_back(bench_dense(dense, x, opts.repeats));
      continue;
    }
    for (std::size_t p : precisions) {
      const QuantizedView view = model.view(p);
      BenchRow row = time_calls(opts.repeats, [&](GemvStats& stats) {
        if (path == GemvPath::kLut) {
          (void)gemv_lut(view, x, opts.gemv, &stats);
        } else {
          (void)gemv_naive(view, x, &stats);
        }
      });
      row.rows = model.rows();
      row.cols = model.cols();
      row.path = path;
      row.precision = p;
      out.push_back(row);
    }
  }
  return out;
}

BenchRow bench_dense(const WeightMatrix& w, std::span<const float> x, std::size_t repeats) {
  BenchRow row = time_calls(repeats, [&](GemvStats& stats) { (void)gemv_dense(w, x, &stats); });
  row.rows = w.rows();
  row.cols = w.cols();
  row.path = GemvPath::kDense;
  row.precision = 32;
  return row;
}

MultiPrecisionModel synthetic_model(std::size_t rows, std::size_t cols, std::size_t min_precision,
                                    std::size_t max_precision, const QuantConfig& cfg,
                                    std::uint64_t seed) {
  require(min_precision >= 1 && min_precision <= max_precision && max_precision <= kMaxPlanes,
          ErrorCode::kInvalidArgument, "invalid precision range");
  Xoshiro256 rng(seed);
  BitPlaneSet planes(max_precision, rows, cols);
  auto words = planes.mutable_words();
  const std::size_t wpr = planes.words_per_row();
  for (std::size_t i = 0; i < words.size(); ++i) {
    std::uint32_t word = static_cast<std::uint32_t>(rng.next() >> 32);
    const std::size_t tail = cols % 32;
    if (tail != 0 && i % wpr == wpr - 1) word &= (1u << tail) - 1u;
    words[i] = word;
  }
  std::vector<ScaleTensor> sets;
  for (std::size_t p = min_precision; p <= max_precision; ++p) {
    ScaleTensor s(p, rows, cfg.groups(cols), cfg.asymmetric());
    for (std::size_t i = 0; i < p; ++i) {
      for (std::size_t n = 0; n < rows; ++n) {
        for (std::size_t g = 0; g < s.groups(); ++g) {
          s.alpha(i, n, g) = static_cast<float>((0.5 + rng.uniform()) / double(1u << i));
        }
      }
    }
    for (float& z : s.offsets()) z = static_cast<float>(rng.uniform() - 0.5);
    sets.push_back(std::move(s));
  }
  return MultiPrecisionModel(std::move(planes), std::move(sets), min_precision, cfg);
}

std::vector<std::pair<std::size_t, std::size_t>> reference_shapes() {
  return {{4096, 4096}, {14336, 4096}, {4096, 14336},
          {5120, 5120}, {17920, 5120}, {5120, 17920},
          {8192, 8192}, {28672, 8192}, {8192, 28672}};
}

std::string format_bench_table(std::span<const BenchRow> rows) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-13s %-6s %3s %12s %12s %14s %12s\n", "shape", "path", "p",
                "median_us", "min_us", "plane_bytes", "scale_bytes");
  out << line;
  for (const auto& r : rows) {
    const std::string shape = std::to_string(r.rows) + "x" + std::to_string(r.cols);
    std::snprintf(line, sizeof line, "%-13s %-6s %3zu %12.1f %12.1f %14llu %12llu\n",
                  shape.c_str(), path_name(r.path), r.precision, r.median_us, r.min_us,
                  static_cast<unsigned long long>(r.plane_bytes),
                  static_cast<unsigned long long>(r.scale_bytes));
    out << line;
  }
  return out.str();
}

std::string format_bench_csv(std::span<const BenchRow> rows) {
  std::ostringstream out;
  out << "shape,path,p,median_us,min_us,plane_bytes,scale_bytes\n";
  char line[160];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%zux%zu,%s,%zu,%.3f,%.3f,%llu,%llu\n", r.rows, r.cols,
                  path_name(r.path), r.precision, r.median_us, r.min_us,
                  static_cast<unsigned long long>(r.plane_bytes),
                  static_cast<unsigned long long>(r.scale_bytes));
    out << line;
  }
  return out.str();
}

}  // namespace anybcq
