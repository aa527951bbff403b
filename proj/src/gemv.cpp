#include "anybcq/gemv.hpp"

#include <algorithm>
#include <bit>
#include <mutex>
#include <string>

#include "anybcq/parallel.hpp"

namespace anybcq {

namespace {

using Clock = std::chrono::steady_clock;

struct Counters {
  std::uint64_t plane_bytes = 0;
  std::uint64_t scale_bytes = 0;
};

void check_gemv_args(const QuantizedView& view, std::span<const float> x) {
  require(x.size() == view.cols(), ErrorCode::kShapeMismatch,
          "activation length " + std::to_string(x.size()) + " does not match " +
              std::to_string(view.cols()) + " columns");
}

std::vector<double> group_sums(const QuantizedView& view, std::span<const float> x) {
  std::vector<double> sums(view.groups(), 0.0);
  const std::size_t g = view.config().group_size;
  for (std::size_t k = 0; k < x.size(); ++k) sums[k / g] += x[k];
  return sums;
}

// Sum over the group of code * x, unpacking one bit per column.
inline float signed_sum(std::span<const std::uint32_t> words, std::span<const float> x,
                        std::size_t begin, std::size_t end) {
  float s = 0.0f;
  for (std::size_t k = begin; k < end; ++k) {
    const bool plus = (words[k >> 5] >> (k & 31)) & 1u;
    s += plus ? x[k] : -x[k];
  }
  return s;
}

// Sum of table entries for chunks [c0, c1) of one plane row. Four partial
// sums keep the additions from forming a single dependency chain.
template <unsigned Mu>
inline float lut_sum(const std::uint32_t* words, const float* table, std::size_t c0,
                     std::size_t c1) {
  constexpr std::size_t kEntries = std::size_t{1} << Mu;
  constexpr std::uint32_t kMask = static_cast<std::uint32_t>(kEntries - 1);
  const auto entry = [&](std::size_t c) {
    const std::size_t bit = c * Mu;
    return table[c * kEntries + ((words[bit >> 5] >> (bit & 31)) & kMask)];
  };
  float acc[4] = {0.0f, 0.0f, 0.0f, 0.0f};
  std::size_t c = c0;
  for (; c + 4 <= c1; c += 4) {
    acc[0] += entry(c);
    acc[1] += entry(c + 1);
    acc[2] += entry(c + 2);
    acc[3] += entry(c + 3);
  }
  for (; c < c1; ++c) acc[0] += entry(c);
  return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

// Same sum over whole words [w0, w1): each word feeds 32/Mu consecutive
// tables, so it is loaded once and split with constant shifts.
template <unsigned Mu>
inline float lut_sum_words(const std::uint32_t* words, const float* table, std::size_t w0,
                           std::size_t w1) {
  constexpr unsigned kPerWord = 32 / Mu;
  constexpr std::size_t kEntries = std::size_t{1} << Mu;
  constexpr std::uint32_t kMask = static_cast<std::uint32_t>(kEntries - 1);
  float acc[4] = {0.0f, 0.0f, 0.0f, 0.0f};
  const float* t = table + w0 * kPerWord * kEntries;
  for (std::size_t w = w0; w < w1; ++w, t += kPerWord * kEntries) {
    const std::uint32_t v = words[w];
    for (unsigned j = 0; j < kPerWord; ++j) acc[j % 4] += t[j * kEntries + ((v >> (j * Mu)) & kMask)];
  }
  return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

// Runs row_fn(row, counters) over all rows and folds the counters into stats.
template <class RowFn>
void run_rows(std::size_t rows, GemvStats* stats, RowFn&& row_fn) {
  std::mutex mu;
  Counters total;
  parallel_for(rows, [&](std::size_t row_begin, std::size_t row_end) {
    Counters local;
    for (std::size_t n = row_begin; n < row_end; ++n) row_fn(n, local);
    std::lock_guard lock(mu);
    total.plane_bytes += local.plane_bytes;
    total.scale_bytes += local.scale_bytes;
  });
  if (stats != nullptr) {
    stats->plane_bytes_fetched += total.plane_bytes;
    stats->scale_bytes_fetched += total.scale_bytes;
  }
}

}  // namespace

LookupTable::LookupTable(std::span<const float> x, unsigned chunk_bits)
    : chunk_bits_(chunk_bits), table_count_(0) {
  require(chunk_bits == 4 || chunk_bits == 8, ErrorCode::kInvalidArgument,
          "lookup-table chunk width must be 4 or 8 bits");
  const std::size_t mu = chunk_bits;
  const std::size_t entries = std::size_t{1} << mu;
  table_count_ = (x.size() + mu - 1) / mu;
  entries_.resize(table_count_ * entries);

  std::vector<double> scratch(entries);
  double chunk[8];
  for (std::size_t c = 0; c < table_count_; ++c) {
    double all_minus = 0.0;
    for (std::size_t j = 0; j < mu; ++j) {
      const std::size_t k = c * mu + j;
      chunk[j] = k < x.size() ? static_cast<double>(x[k]) : 0.0;
      all_minus -= chunk[j];
    }
    scratch[0] = all_minus;
    // Flipping bit j from clear to set turns -x_j into +x_j.
    for (std::size_t t = 1; t < entries; ++t) {
      const unsigned low = static_cast<unsigned>(std::countr_zero(t));
      scratch[t] = scratch[t & (t - 1)] + 2.0 * chunk[low];
    }
    float* dst = entries_.data() + c * entries;
    for (std::size_t t = 0; t < entries; ++t) dst[t] = static_cast<float>(scratch[t]);
  }
}

std::uint64_t expected_plane_bytes(std::size_t rows, std::size_t cols, std::size_t precision) {
  return static_cast<std::uint64_t>(precision) * rows * ((cols + 31) / 32) * 4;
}

std::vector<float> gemv_naive(const QuantizedView& view, std::span<const float> x,
                              GemvStats* stats) {
  check_gemv_args(view, x);
  const auto start = Clock::now();
  const auto& planes = view.bitplanes();
  const auto& scales = view.scales();
  const auto& cfg = view.config();
  const std::size_t p = view.precision();
  const std::size_t groups = view.groups();
  const std::size_t cols = view.cols();
  const auto xsum = cfg.asymmetric() ? group_sums(view, x) : std::vector<double>{};
  std::vector<float> y(view.rows());

  run_rows(view.rows(), stats, [&](std::size_t n, Counters& counters) {
    double acc = 0.0;
    for (std::size_t i = 0; i < p; ++i) {
      const auto words = planes.row_words(i, n);
      counters.plane_bytes += words.size_bytes();
      for (std::size_t gr = 0; gr < groups; ++gr) {
        const std::size_t begin = gr * cfg.group_size;
        const std::size_t end = std::min(cols, begin + cfg.group_size);
        acc += static_cast<double>(scales.alpha(i, n, gr)) * signed_sum(words, x, begin, end);
      }
      counters.scale_bytes += groups * sizeof(float);
    }
    if (cfg.asymmetric()) {
      for (std::size_t gr = 0; gr < groups; ++gr) {
        acc += static_cast<double>(scales.offset(n, gr)) * xsum[gr];
      }
      counters.scale_bytes += groups * sizeof(float);
    }
    y[n] = static_cast<float>(acc);
  });
  if (stats != nullptr) stats->elapsed += Clock::now() - start;
  return y;
}

std::vector<float> gemv_lut(const QuantizedView& view, std::span<const float> x,
                            const GemvOptions& opts, GemvStats* stats) {
  check_gemv_args(view, x);
  const auto start = Clock::now();
  const LookupTable lut(x, opts.chunk_bits);
  if (stats != nullptr) ++stats->lut_build_count;

  const auto& planes = view.bitplanes();
  const auto& scales = view.scales();
  const auto& cfg = view.config();
  const std::size_t p = view.precision();
  const std::size_t groups = view.groups();
  const std::size_t cols = view.cols();
  const std::size_t mu = opts.chunk_bits;
  // Groups that start mid-chunk cannot be served from the tables.
  const bool aligned = cfg.group_size % mu == 0;
  const auto xsum = cfg.asymmetric() ? group_sums(view, x) : std::vector<double>{};
  const float* table = lut.table(0).data();
  std::vector<float> y(view.rows());

  run_rows(view.rows(), stats, [&](std::size_t n, Counters& counters) {
    double acc = 0.0;
    for (std::size_t i = 0; i < p; ++i) {
      const auto words = planes.row_words(i, n);
      counters.plane_bytes += words.size_bytes();
      for (std::size_t gr = 0; gr < groups; ++gr) {
        const std::size_t begin = gr * cfg.group_size;
        const std::size_t end = std::min(cols, begin + cfg.group_size);
        float s;
        if (!aligned) {
          s = signed_sum(words, x, begin, end);
        } else if (begin % 32 == 0 && end % 32 == 0) {
          s = mu == 8 ? lut_sum_words<8>(words.data(), table, begin / 32, end / 32)
                      : lut_sum_words<4>(words.data(), table, begin / 32, end / 32);
        } else if (mu == 8) {
          s = lut_sum<8>(words.data(), table, begin / mu, (end + mu - 1) / mu);
        } else {
          s = lut_sum<4>(words.data(), table, begin / mu, (end + mu - 1) / mu);
        }
        acc += static_cast<double>(scales.alpha(i, n, gr)) * s;
      }
      counters.scale_bytes += groups * sizeof(float);
    }
    if (cfg.asymmetric()) {
      for (std::size_t gr = 0; gr < groups; ++gr) {
        acc += static_cast<double>(scales.offset(n, gr)) * xsum[gr];
      }
      counters.scale_bytes += groups * sizeof(float);
    }
    y[n] = static_cast<float>(acc);
  });
  if (stats != nullptr) stats->elapsed += Clock::now() - start;
  return y;
}

std::vector<float> gemv_naive(const MultiPrecisionModel& model, std::size_t precision,
                              std::span<const float> x, GemvStats* stats) {
  return gemv_naive(model.view(precision), x, stats);
}

std::vector<float> gemv_lut(const MultiPrecisionModel& model, std::size_t precision,
                            std::span<const float> x, const GemvOptions& opts, GemvStats* stats) {
  return gemv_lut(model.view(precision), x, opts, stats);
}

std::vector<float> gemv_dense(const WeightMatrix& w, std::span<const float> x, GemvStats* stats) {
  require(x.size() == w.cols(), ErrorCode::kShapeMismatch,
          "activation length does not match the matrix columns");
  const auto start = Clock::now();
  std::vector<float> y(w.rows());
  run_rows(w.rows(), stats, [&](std::size_t n, Counters& counters) {
    const auto row = w.row(n);
    float acc = 0.0f;
    for (std::size_t k = 0; k < row.size(); ++k) acc += row[k] * x[k];
    counters.plane_bytes += row.size_bytes();
    y[n] = acc;
  });
  if (stats != nullptr) stats->elapsed += Clock::now() - start;
  return y;
}

}  // namespace anybcq
