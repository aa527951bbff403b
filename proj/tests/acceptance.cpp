// Acceptance gate: runs every release criterion and prints one PASS/FAIL line
// per criterion. Exit status is non-zero if any criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <exception>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "anybcq/bench.hpp"
#include "anybcq/calib.hpp"
#include "anybcq/gemv.hpp"
#include "anybcq/model_format.hpp"
#include "anybcq/parallel.hpp"
#include "oracles.hpp"

using namespace anybcq;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::vector<float> random_vector(std::size_t n, std::uint64_t seed) {
  const auto x = random_activations(1, n, seed);
  return {x.data().begin(), x.data().end()};
}

// 1. Analytic one-bit error on a Gaussian matrix.
Outcome one_bit_error() {
  const auto start = Clock::now();
  const auto w = random_gaussian(1024, 1024, 1);
  const auto qm = alternate_fit(w, 1, QuantConfig{128, QuantMode::kSymmetric, 20});
  const double rel = relative_reconstruction_error(w, qm, 1);
  const double secs = seconds_since(start);
  const double target = 1.0 - 2.0 / std::numbers::pi;
  return {std::abs(rel - target) <= 0.005 && secs < 5.0,
          fmt("rel_error=%.6f target=%.6f tol=0.005 time=%.2fs (limit 5s)", rel, target, secs)};
}

// 2. Binary-search recalibration equals exhaustive pattern search.
Outcome recalibration_oracle() {
  const auto start = Clock::now();
  std::size_t checked = 0;
  std::size_t mismatches = 0;
  for (std::size_t q = 2; q <= 4; ++q) {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      const auto mode = seed % 2 ? QuantMode::kAsymmetric : QuantMode::kSymmetric;
      const QuantConfig cfg{seed < 2 ? 128u : 32u, mode, 3};
      const auto w = random_gaussian(32, 128, 1000 * q + seed);
      const auto qm = alternate_fit(w, q, cfg);
      const auto planes = bs_recalibrate_codes(w, qm.scales, cfg);
      for (std::size_t n = 0; n < 32; ++n) {
        for (std::size_t k = 0; k < 128; ++k) {
          const std::size_t g = k / cfg.group_size;
          const double chosen =
              oracle::level_value(qm.scales, n, g, q, oracle::pattern_at(planes, n, k, q));
          ++checked;
          if (chosen != oracle::exhaustive_level(w(n, k), qm.scales, n, g)) ++mismatches;
        }
      }
    }
  }
  const double secs = seconds_since(start);
  return {mismatches == 0 && secs < 10.0,
          fmt("weights=%zu mismatches=%zu time=%.2fs (limit 10s)", checked, mismatches, secs)};
}

// 3. Alternation error never rises at any half-step.
Outcome monotone_alternation() {
  Xoshiro256 rng(3);
  const std::size_t row_choices[] = {16, 64, 128, 256};
  const std::size_t col_choices[] = {96, 128, 300, 512};
  const std::size_t group_choices[] = {32, 64, 128};
  std::size_t instances = 0;
  std::size_t violations = 0;
  double worst = 0.0;
  for (std::uint64_t i = 0; i < 100; ++i) {
    const std::size_t rows = row_choices[rng.next() % 4];
    const std::size_t cols = col_choices[rng.next() % 4];
    const std::size_t q = 2 + rng.next() % 3;
    const QuantConfig cfg{group_choices[rng.next() % 3],
                          (rng.next() & 1) ? QuantMode::kAsymmetric : QuantMode::kSymmetric, 20};
    const auto w = random_gaussian(rows, cols, 3000 + i);
    FitTrace trace;
    (void)alternate_fit(w, q, cfg, &trace);
    ++instances;
    for (std::size_t s = 1; s < trace.errors.size(); ++s) {
      const double rise = trace.errors[s] - trace.errors[s - 1];
      worst = std::max(worst, rise);
      if (rise > 1e-9) ++violations;
    }
  }
  return {instances >= 100 && violations == 0,
          fmt("instances=%zu violations=%zu max_rise=%.3g (slack 1e-9)", instances, violations, worst)};
}

// 4. Progressive monotonicity and frozen planes.
Outcome progressive_monotonicity() {
  Xoshiro256 rng(4);
  std::size_t matrices = 0;
  std::size_t order_violations = 0;
  std::size_t plane_changes = 0;
  for (std::uint64_t i = 0; i < 50; ++i) {
    const std::size_t rows = 16 + rng.next() % 113;
    const std::size_t cols = 64 + rng.next() % 193;
    const QuantConfig cfg{(rng.next() & 1) ? 128u : 64u,
                          (rng.next() & 1) ? QuantMode::kAsymmetric : QuantMode::kSymmetric, 20};
    const auto w = random_gaussian(rows, cols, 4000 + i);
    auto model = build_multiprecision(w, 2, 2, cfg);
    for (std::size_t p = 3; p <= 4; ++p) {
      std::vector<std::vector<std::uint32_t>> before;
      for (std::size_t j = 0; j + 1 < p; ++j) {
        const auto words = model.bitplanes().plane_words(j);
        before.emplace_back(words.begin(), words.end());
      }
      model = expand_step(w, model, p);
      for (std::size_t j = 0; j + 1 < p; ++j) {
        const auto words = model.bitplanes().plane_words(j);
        if (!std::equal(words.begin(), words.end(), before[j].begin(), before[j].end())) ++plane_changes;
      }
    }
    const double e2 = relative_reconstruction_error(w, model.view(2));
    const double e3 = relative_reconstruction_error(w, model.view(3));
    const double e4 = relative_reconstruction_error(w, model.view(4));
    if (!(e4 <= e3 && e3 <= e2)) ++order_violations;
    ++matrices;
  }
  return {matrices >= 50 && order_violations == 0 && plane_changes == 0,
          fmt("matrices=%zu order_violations=%zu frozen_plane_changes=%zu", matrices,
              order_violations, plane_changes)};
}

// 5. Exact refinement is a global minimum of the calibration loss.
Outcome refinement_optimality() {
  Xoshiro256 rng(5);
  std::size_t instances = 0;
  std::size_t increases = 0;
  std::size_t fd_failures = 0;
  std::size_t probes = 0;
  double worst_drop = 0.0;
  for (std::uint64_t i = 0; i < 20; ++i) {
    const std::size_t rows = 4 + rng.next() % 9;
    const std::size_t cols = 64 + rng.next() % 65;
    const std::size_t p = 2 + rng.next() % 3;
    const QuantConfig cfg{32, (rng.next() & 1) ? QuantMode::kAsymmetric : QuantMode::kSymmetric, 5};
    const auto w = random_gaussian(rows, cols, 5000 + i);
    const auto x = random_activations(96, cols, 5500 + i);
    auto model = build_multiprecision(w, 2, 4, cfg);
    const double initial = calibration_loss(w, model, x, p);
    const auto r = refine_scales(w, model, x, p);
    model.set_scale_set(p, r.scales);
    const double refined = calibration_loss(w, model, x, p);
    if (refined > initial || r.loss_after > r.loss_before) ++increases;

    ScaleTensor probe = r.scales;
    const auto perturb = [&](std::span<float> values) {
      for (float& v : values) {
        const float keep = v;
        for (float eps : {1e-4f, -1e-4f}) {
          v = keep + eps;
          model.set_scale_set(p, probe);
          const double drop = refined - calibration_loss(w, model, x, p);
          worst_drop = std::max(worst_drop, drop);
          ++probes;
          if (drop > 1e-8) ++fd_failures;
        }
        v = keep;
      }
    };
    perturb(probe.alphas());
    perturb(probe.offsets());
    ++instances;
  }
  return {instances >= 20 && increases == 0 && fd_failures == 0,
          fmt("instances=%zu loss_increases=%zu probes=%zu fd_failures=%zu max_drop=%.3g (limit 1e-8)",
              instances, increases, probes, fd_failures, worst_drop)};
}

// 6. LUT, naive and dense-oracle GEMV agree.
Outcome gemv_equivalence() {
  const auto start = Clock::now();
  const auto w = random_gaussian(512, 4096, 6);
  const auto model = build_multiprecision(w, 2, 4, QuantConfig{128, QuantMode::kAsymmetric, 5});
  std::vector<std::vector<double>> w_hat;
  for (std::size_t p = 2; p <= 4; ++p) {
    w_hat.push_back(oracle::dense_dequant(model.bitplanes(), model.scale_set(p), 128, p));
  }
  double worst = 0.0;
  std::size_t inputs = 0;
  for (std::uint64_t i = 0; i < 100; ++i) {
    const auto x = random_vector(4096, 6000 + i);
    for (std::size_t p = 2; p <= 4; ++p) {
      const auto ref = oracle::dense_gemv(w_hat[p - 2], 512, 4096, x);
      const auto lut = gemv_lut(model, p, x);
      const auto naive = gemv_naive(model, p, x);
      worst = std::max({worst, oracle::max_relative_deviation(lut, ref),
                        oracle::max_relative_deviation(naive, ref),
                        oracle::max_relative_deviation(lut, naive)});
    }
    ++inputs;
  }
  const double secs = seconds_since(start);
  return {inputs >= 100 && worst <= 1e-4 && secs < 60.0,
          fmt("inputs=%zu max_rel_dev=%.3g (limit 1e-4) time=%.2fs (limit 60s)", inputs, worst, secs)};
}

// 7. Plane traffic is exactly p * N * ceil(K/32) * 4 bytes.
Outcome traffic_law() {
  std::size_t rows_checked = 0;
  std::size_t mismatches = 0;
  const std::vector<std::size_t> ps{2, 3, 4};
  BenchOptions opts;
  opts.repeats = 1;
  for (const auto& [n, k] : reference_shapes()) {
    const auto model = synthetic_model(n, k, 2, 4, QuantConfig{128, QuantMode::kSymmetric, 0}, n + k);
    const auto x = random_vector(k, 7);
    for (const auto& row : bench(model, ps, x, opts)) {
      const std::uint64_t expected = static_cast<std::uint64_t>(row.precision) * n * ((k + 31) / 32) * 4;
      ++rows_checked;
      if (row.plane_bytes != expected) ++mismatches;
    }
  }
  return {rows_checked == 9 * 3 * 2 && mismatches == 0,
          fmt("bench_rows=%zu mismatches=%zu", rows_checked, mismatches)};
}

// 8. Footprint arithmetic reproduces the published multi-precision table.
Outcome footprint_table() {
  // N*K = 7.8e9 makes the packed 2-bit planes exactly 1.95 GB.
  FootprintQuery q;
  q.rows = 60'937'500;
  q.cols = 128;
  const auto r = footprint(q);
  const auto gb = [](std::uint64_t b) { return static_cast<double>(b) / 1e9; };
  struct Expect {
    const char* what;
    double got;
    double want;
  };
  const Expect checks[] = {
      {"BCQ2.binary", gb(r.per_precision[0].binary_bytes), 1.95},
      {"BCQ3.binary", gb(r.per_precision[1].binary_bytes), 2.92},
      {"BCQ3.scale", gb(r.per_precision[1].scale_bytes), 0.36},
      {"BCQ4.binary", gb(r.per_precision[2].binary_bytes), 3.89},
      {"BCQ4.scale", gb(r.per_precision[2].scale_bytes), 0.49},
      {"Multi.total", gb(r.multi_model.total_bytes), 9.85},
      {"Shared.total", gb(r.shared.total_bytes), 4.99},
  };
  bool ok = true;
  std::string detail;
  for (const auto& c : checks) {
    const double rel = std::abs(c.got - c.want) / c.want;
    ok = ok && rel <= 0.02;
    detail += fmt("%s=%.4f(%.4f) ", c.what, c.got, c.want);
  }
  const double reduction = 100.0 * (1.0 - gb(r.shared.total_bytes) / gb(r.multi_model.total_bytes));
  ok = ok && std::abs(reduction - 49.0) <= 2.0;
  detail += fmt("reduction=%.2f%% (49 +- 2)", reduction);
  return {ok, detail};
}

// 9. Container round trips and corruption detection.
Outcome serialization() {
  Xoshiro256 rng(9);
  std::size_t round_trip_failures = 0;
  std::size_t corruption_failures = 0;
  const auto expect_error = [&](std::span<const std::uint8_t> bytes, ErrorCode want) {
    try {
      (void)decode_model(bytes);
    } catch (const Error& e) {
      if (e.code() == want) return;
    } catch (...) {
    }
    ++corruption_failures;
  };
  for (std::uint64_t trial = 0; trial < 1000; ++trial) {
    const std::size_t rows = 1 + rng.next() % 24;
    const std::size_t cols = 1 + rng.next() % 200;
    const std::size_t pl = 1 + rng.next() % 4;
    const std::size_t ph = pl + rng.next() % 3;
    const QuantConfig cfg{1 + rng.next() % 128,
                          (rng.next() & 1) ? QuantMode::kAsymmetric : QuantMode::kSymmetric, 0};
    const auto model = synthetic_model(rows, cols, pl, ph, cfg, 9000 + trial);
    const auto bytes = encode_model(model);
    const auto back = decode_model(bytes);
    if (!(back == model) || encode_model(back) != bytes) ++round_trip_failures;

    SerializeOptions half;
    half.scale_width = 2;
    const auto once = decode_model(encode_model(model, half));
    if (!(decode_model(encode_model(once, half)) == once) || !(once.bitplanes() == model.bitplanes())) {
      ++round_trip_failures;
    }

    auto bad = bytes;
    bad[rng.next() % 4] ^= 0x20;
    expect_error(bad, ErrorCode::kBadMagic);

    bad = bytes;
    bad.resize(rng.next() % bytes.size());
    expect_error(bad, ErrorCode::kTruncated);

    std::uint32_t header_len;
    std::memcpy(&header_len, bytes.data() + 8, 4);
    const std::size_t body = 12 + header_len;
    bad = bytes;
    bad[body + rng.next() % (bytes.size() - body)] ^= static_cast<std::uint8_t>(1u << (rng.next() % 8));
    expect_error(bad, ErrorCode::kChecksum);
  }
  return {round_trip_failures == 0 && corruption_failures == 0,
          fmt("trials=1000 round_trip_failures=%zu corruption_misclassified=%zu", round_trip_failures,
              corruption_failures)};
}

// 10. Packed-plane GEMV beats a dense real32 GEMV of the same shape.
Outcome latency() {
  const auto model = synthetic_model(4096, 4096, 4, 4, QuantConfig{128, QuantMode::kSymmetric, 0}, 10);
  const auto x = random_vector(4096, 10);
  BenchOptions opts;
  opts.repeats = 32;
  opts.paths = {GemvPath::kLut, GemvPath::kDense};
  const std::vector<std::size_t> ps{4};
  const auto rows = bench(model, ps, x, opts);
  double lut = 0.0;
  double dense = 0.0;
  for (const auto& r : rows) (r.path == GemvPath::kLut ? lut : dense) = r.median_us;
  return {lut > 0.0 && dense > 0.0 && lut < dense,
          fmt("median_us lut(p=4)=%.1f dense(real32)=%.1f speedup=%.2fx repeats=32 threads=%zu", lut,
              dense, dense / lut, max_threads())};
}

}  // namespace

int main() {
  configure_threads_from_env();
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"1 analytic one-bit error", one_bit_error},
      {"2 recalibration oracle equivalence", recalibration_oracle},
      {"3 monotone alternation", monotone_alternation},
      {"4 progressive monotonicity and frozen planes", progressive_monotonicity},
      {"5 calibration refinement optimality", refinement_optimality},
      {"6 gemv path equivalence", gemv_equivalence},
      {"7 traffic law", traffic_law},
      {"8 footprint table cross-consistency", footprint_table},
      {"9 serialization round trip and corruption", serialization},
      {"10 packed vs dense gemv latency", latency},
  };
  int failures = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s [%s] %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of 10 criteria passed\n", 10 - failures);
  return failures == 0 ? 0 : 1;
}
