// Command-line front end: quantize, refine, gemv, bench, inspect, generate.
//
// Exit codes: 0 success, 2 bad flags or arguments, 3 I/O or file-format
// errors, 4 numeric failures. Reports go to stdout, diagnostics to stderr.
#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "anybcq/bench.hpp"
#include "anybcq/calib.hpp"
#include "anybcq/gemv.hpp"
#include "anybcq/model_format.hpp"
#include "anybcq/parallel.hpp"
#include "anybcq/progressive.hpp"
#include "anybcq/tensor_io.hpp"

namespace {

using namespace anybcq;

constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kShapeMismatch:
      return kExitUsage;
    case ErrorCode::kIo:
    case ErrorCode::kBadMagic:
    case ErrorCode::kTruncated:
    case ErrorCode::kUnsupportedDtype:
    case ErrorCode::kVersionMismatch:
    case ErrorCode::kChecksum:
    case ErrorCode::kCorrupt:
      return kExitIo;
    case ErrorCode::kNonFinite:
    case ErrorCode::kNumeric:
      return kExitNumeric;
  }
  return kExitNumeric;
}

std::size_t parse_count(std::string_view text, std::string_view what) {
  std::size_t value = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  require(ec == std::errc{} && end == text.data() + text.size(), ErrorCode::kInvalidArgument,
          "invalid " + std::string(what) + ": '" + std::string(text) + "'");
  return value;
}

std::pair<std::size_t, std::size_t> parse_shape(std::string_view text) {
  const auto x = text.find('x');
  require(x != std::string_view::npos, ErrorCode::kInvalidArgument,
          "shape must be written NxK, got '" + std::string(text) + "'");
  const std::size_t rows = parse_count(text.substr(0, x), "shape");
  const std::size_t cols = parse_count(text.substr(x + 1), "shape");
  require(rows >= 1 && cols >= 1, ErrorCode::kInvalidArgument, "shape dimensions must be >= 1");
  return {rows, cols};
}

// "L:H" selects a progressive range, a single value a fixed precision.
std::pair<std::size_t, std::size_t> parse_bits_range(std::string_view text) {
  const auto colon = text.find(':');
  const std::size_t lo = parse_count(text.substr(0, colon), "bit width");
  const std::size_t hi =
      colon == std::string_view::npos ? lo : parse_count(text.substr(colon + 1), "bit width");
  require(lo >= 1 && lo <= hi && hi <= kMaxPlanes, ErrorCode::kInvalidArgument,
          "--bits must satisfy 1 <= L <= H <= " + std::to_string(kMaxPlanes) + ", got '" +
              std::string(text) + "'");
  return {lo, hi};
}

std::vector<std::size_t> split_counts(std::string_view text, std::string_view what) {
  std::vector<std::size_t> out;
  while (!text.empty()) {
    const auto comma = text.find(',');
    out.push_back(parse_count(text.substr(0, comma), what));
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return out;
}

QuantMode parse_mode(const std::string& mode) {
  return mode == "sym" ? QuantMode::kSymmetric : QuantMode::kAsymmetric;
}

struct WeightSource {
  std::string input;
  std::string random;
  std::uint64_t seed = 0;

  void add_to(CLI::App* cmd, const char* input_flag, const char* input_help) {
    auto* in = cmd->add_option(input_flag, input, input_help);
    auto* rnd = cmd->add_option("--random", random, "Use a seeded N(0,1) matrix of shape NxK");
    in->excludes(rnd);
    cmd->add_option("--seed", seed, "Seed for --random")->capture_default_str();
  }

  bool given() const { return !input.empty() || !random.empty(); }

  WeightMatrix load() const {
    if (!random.empty()) {
      const auto [rows, cols] = parse_shape(random);
      return random_gaussian(rows, cols, seed);
    }
    return load_matrix(input);
  }
};

// quantize ------------------------------------------------------------------

struct QuantizeArgs {
  WeightSource source;
  std::string bits = "2:4";
  std::size_t group = 128;
  std::size_t cycles = 20;
  std::string mode = "asym";
  std::string out;
  std::size_t scale_width = 4;
  std::string format = "text";
};

int run_quantize(const QuantizeArgs& a) {
  require(a.source.given(), ErrorCode::kInvalidArgument, "quantize needs --input or --random");
  const auto [lo, hi] = parse_bits_range(a.bits);
  const WeightMatrix w = a.source.load();
  const QuantConfig cfg{a.group, parse_mode(a.mode), a.cycles};
  const MultiPrecisionModel model = build_multiprecision(w, lo, hi, cfg);

  SerializeOptions opts;
  opts.scale_width = a.scale_width;
  opts.metadata["source"] = a.source.random.empty() ? a.source.input
                                                    : "random:" + a.source.random + ":seed=" +
                                                          std::to_string(a.source.seed);
  serialize(model, a.out, opts);

  const bool csv = a.format == "csv";
  std::printf(csv ? "p,rel_error\n" : "%-3s %14s\n", "p", "rel_error");
  for (std::size_t p = lo; p <= hi; ++p) {
    const double rel = relative_reconstruction_error(w, model.view(p));
    std::printf(csv ? "%zu,%.9g\n" : "%-3zu %14.9g\n", p, rel);
  }
  return 0;
}

// refine --------------------------------------------------------------------

struct RefineArgs {
  std::string model;
  WeightSource weights;
  std::string calib;
  std::size_t bits = 0;
  std::string solver = "exact";
  std::size_t epochs = 10;
  double lr = 1e-4;
  std::string out;
};

int run_refine(const RefineArgs& a) {
  require(a.weights.given(), ErrorCode::kInvalidArgument,
          "refine needs the source weights via --weights or --random");
  ContainerInfo info;
  MultiPrecisionModel model = deserialize(a.model, &info);
  require(model.supports(a.bits), ErrorCode::kInvalidArgument,
          "--bits " + std::to_string(a.bits) + " outside model range [" +
              std::to_string(model.min_precision()) + ", " + std::to_string(model.max_precision()) +
              "]");
  const WeightMatrix w = a.weights.load();
  const ActivationBatch x = load_activations(a.calib);

  RefineOptions opts;
  opts.solver = a.solver == "gd" ? RefineSolver::kGradient : RefineSolver::kExact;
  opts.epochs = a.epochs;
  opts.learning_rate = a.lr;
  if (opts.solver == RefineSolver::kGradient) {
    std::printf("solver=gd epochs=%zu lr=%g\n", opts.epochs, opts.learning_rate);
  } else {
    std::printf("solver=exact\n");
  }
  const RefineResult r = refine_scales(w, model, x, a.bits, opts);
  model.set_scale_set(a.bits, r.scales);

  SerializeOptions sopts;
  sopts.scale_width = info.scale_width;
  sopts.metadata = info.metadata;
  serialize(model, a.out.empty() ? a.model : a.out, sopts);

  std::printf("loss_before=%.17g\nloss_after=%.17g\n", r.loss_before, r.loss_after);
  if (r.ridge_rows > 0) std::printf("ridge_rows=%zu\n", r.ridge_rows);
  return 0;
}

// gemv ----------------------------------------------------------------------

struct GemvArgs {
  std::string model;
  std::size_t bits = 0;
  std::string x;
  std::string out;
  std::string path = "lut";
  unsigned chunk = 8;
};

int run_gemv(const GemvArgs& a) {
  const MultiPrecisionModel model = deserialize(a.model);
  const ActivationBatch xs = load_activations(a.x);
  require(xs.rows() == 1, ErrorCode::kShapeMismatch,
          "--x must hold a single activation row (1xK)");
  GemvStats stats;
  const auto y = a.path == "naive" ? gemv_naive(model, a.bits, xs.row(0), &stats)
                                   : gemv_lut(model, a.bits, xs.row(0), GemvOptions{a.chunk}, &stats);
  if (!a.out.empty()) save_activations(ActivationBatch(1, y.size(), y), a.out);

  double sum = 0.0;
  double sq = 0.0;
  for (float v : y) {
    sum += v;
    sq += static_cast<double>(v) * v;
  }
  std::printf("rows=%zu p=%zu path=%s\n", y.size(), a.bits, a.path.c_str());
  std::printf("checksum sum=%.9g l2=%.9g\n", sum, std::sqrt(sq));
  std::printf("plane_bytes=%llu scale_bytes=%llu\n",
              static_cast<unsigned long long>(stats.plane_bytes_fetched),
              static_cast<unsigned long long>(stats.scale_bytes_fetched));
  return 0;
}

// bench ---------------------------------------------------------------------

struct BenchArgs {
  std::string model;
  std::string shapes;
  std::string bits = "all";
  std::size_t repeats = 32;
  std::string paths = "lut,naive";
  std::string mode = "sym";
  std::size_t group = 128;
  unsigned chunk = 8;
  std::uint64_t seed = 1;
  std::string format = "text";
};

std::vector<GemvPath> parse_paths(std::string_view text) {
  std::vector<GemvPath> out;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const auto name = text.substr(0, comma);
    if (name == "lut") {
      out.push_back(GemvPath::kLut);
    } else if (name == "naive") {
      out.push_back(GemvPath::kNaive);
    } else if (name == "dense") {
      out.push_back(GemvPath::kDense);
    } else {
      fail(ErrorCode::kInvalidArgument, "unknown path '" + std::string(name) + "'");
    }
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  require(!out.empty(), ErrorCode::kInvalidArgument, "--paths is empty");
  return out;
}

int run_bench(const BenchArgs& a) {
  require(a.model.empty() != a.shapes.empty(), ErrorCode::kInvalidArgument,
          "bench needs exactly one of --model or --shapes");
  BenchOptions opts;
  opts.repeats = a.repeats;
  opts.paths = parse_paths(a.paths);
  opts.gemv.chunk_bits = a.chunk;

  const auto precisions_for = [&](std::size_t lo, std::size_t hi) {
    std::vector<std::size_t> ps;
    if (a.bits == "all") {
      for (std::size_t p = lo; p <= hi; ++p) ps.push_back(p);
    } else {
      ps = split_counts(a.bits, "bit width");
    }
    return ps;
  };

  std::vector<BenchRow> rows;
  const auto run_one = [&](const MultiPrecisionModel& model, std::uint64_t seed) {
    const auto x = random_activations(1, model.cols(), seed);
    const auto ps = precisions_for(model.min_precision(), model.max_precision());
    for (std::size_t p : ps) {
      require(model.supports(p), ErrorCode::kInvalidArgument,
              "--bits " + std::to_string(p) + " outside model range");
    }
    const auto part = bench(model, ps, x.row(0), opts);
    rows.insert(rows.end(), part.begin(), part.end());
  };

  if (!a.model.empty()) {
    run_one(deserialize(a.model), a.seed);
  } else {
    std::vector<std::pair<std::size_t, std::size_t>> shapes;
    if (a.shapes == "reference") {
      shapes = reference_shapes();
    } else {
      std::string_view text = a.shapes;
      while (!text.empty()) {
        const auto comma = text.find(',');
        shapes.push_back(parse_shape(text.substr(0, comma)));
        if (comma == std::string_view::npos) break;
        text.remove_prefix(comma + 1);
      }
    }
    // Synthetic planes cover 2..4 bits unless explicit widths ask for more.
    std::size_t lo = 2;
    std::size_t hi = 4;
    if (a.bits != "all") {
      const auto ps = split_counts(a.bits, "bit width");
      require(!ps.empty(), ErrorCode::kInvalidArgument, "--bits is empty");
      lo = *std::min_element(ps.begin(), ps.end());
      hi = *std::max_element(ps.begin(), ps.end());
      require(lo >= 1 && hi <= kMaxPlanes, ErrorCode::kInvalidArgument, "--bits out of range");
    }
    const QuantConfig cfg{a.group, parse_mode(a.mode), 0};
    for (const auto& [n, k] : shapes) run_one(synthetic_model(n, k, lo, hi, cfg, a.seed), a.seed);
  }
  std::fputs((a.format == "csv" ? format_bench_csv(rows) : format_bench_table(rows)).c_str(), stdout);
  return 0;
}

// inspect -------------------------------------------------------------------

struct InspectArgs {
  std::string model;
  std::size_t scale_width = 2;
  std::string format = "text";
};

int run_inspect(const InspectArgs& a) {
  ContainerInfo info;
  const MultiPrecisionModel model = deserialize(a.model, &info);
  const FootprintReport report = footprint(footprint_query(model, a.scale_width));
  if (a.format == "csv") {
    std::fputs(format_footprint_csv(report).c_str(), stdout);
  } else if (a.format == "kv") {
    std::fputs(format_footprint_kv(report).c_str(), stdout);
  } else {
    std::printf("shape      %zux%zu\n", model.rows(), model.cols());
    std::printf("group      %zu\n", model.config().group_size);
    std::printf("mode       %s\n", model.config().asymmetric() ? "asym" : "sym");
    std::printf("precisions %zu:%zu\n", model.min_precision(), model.max_precision());
    std::printf("file       %zu bytes (stored scale width %zu)\n\n", info.file_bytes, info.scale_width);
    std::fputs(format_footprint_table(report).c_str(), stdout);
  }
  return 0;
}

// generate ------------------------------------------------------------------

struct GenerateArgs {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::uint64_t seed = 0;
  std::string out;
};

int run_generate(const GenerateArgs& a) {
  require(a.rows >= 1 && a.cols >= 1, ErrorCode::kInvalidArgument, "--rows and --cols must be >= 1");
  save_matrix(random_gaussian(a.rows, a.cols, a.seed), a.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-precision binary-coded weight quantization"};
  app.require_subcommand(1);

  QuantizeArgs qa;
  auto* quantize = app.add_subcommand("quantize", "Fit a multi-precision model and write it");
  qa.source.add_to(quantize, "--input", "Weight matrix (FMAT)");
  quantize->add_option("--bits", qa.bits, "Precision range L:H, or a single width")->capture_default_str();
  quantize->add_option("--group", qa.group, "Group size in columns")->capture_default_str();
  quantize->add_option("--cycles", qa.cycles, "Alternation / expansion cycles")->capture_default_str();
  quantize->add_option("--mode", qa.mode, "Quantization mode")
      ->check(CLI::IsMember({"asym", "sym"}))
      ->capture_default_str();
  quantize->add_option("--out", qa.out, "Output model (ABCQ)")->required();
  quantize->add_option("--scale-width", qa.scale_width, "Stored scale width in bytes")
      ->check(CLI::IsMember({2, 4}))
      ->capture_default_str();
  quantize->add_option("--format", qa.format, "Report format")
      ->check(CLI::IsMember({"text", "csv"}))
      ->capture_default_str();

  RefineArgs ra;
  auto* refine = app.add_subcommand("refine", "Refine one scale set on calibration activations");
  refine->add_option("--model", ra.model, "Model (ABCQ)")->required();
  ra.weights.add_to(refine, "--weights", "Original weight matrix (FMAT)");
  refine->add_option("--calib", ra.calib, "Calibration activations (FMAT, SxK)")->required();
  refine->add_option("--bits", ra.bits, "Precision whose scale set is refined")->required();
  refine->add_option("--solver", ra.solver, "Solver")
      ->check(CLI::IsMember({"exact", "gd"}))
      ->capture_default_str();
  refine->add_option("--epochs", ra.epochs, "Gradient epochs")->capture_default_str();
  refine->add_option("--lr", ra.lr, "Gradient learning rate")->capture_default_str();
  refine->add_option("--out", ra.out, "Output model (default: overwrite --model)");

  GemvArgs ga;
  auto* gemv = app.add_subcommand("gemv", "Multiply one activation row at a chosen precision");
  gemv->add_option("--model", ga.model, "Model (ABCQ)")->required();
  gemv->add_option("--bits", ga.bits, "Precision")->required();
  gemv->add_option("--x", ga.x, "Activation row (FMAT, 1xK)")->required();
  gemv->add_option("--out", ga.out, "Output vector (FMAT, 1xN)");
  gemv->add_option("--path", ga.path, "Kernel")
      ->check(CLI::IsMember({"lut", "naive"}))
      ->capture_default_str();
  gemv->add_option("--chunk", ga.chunk, "Lookup-table chunk width")
      ->check(CLI::IsMember({4u, 8u}))
      ->capture_default_str();

  BenchArgs ba;
  auto* bench_cmd = app.add_subcommand("bench", "Time GEMV kernels");
  auto* bench_model = bench_cmd->add_option("--model", ba.model, "Model (ABCQ)");
  bench_cmd->add_option("--shapes", ba.shapes, "'reference' or a list NxK,NxK of synthetic shapes")
      ->excludes(bench_model);
  bench_cmd->add_option("--bits", ba.bits, "'all' or a list of widths")->capture_default_str();
  bench_cmd->add_option("--repeats", ba.repeats, "Timed repeats per row")->capture_default_str();
  bench_cmd->add_option("--paths", ba.paths, "Kernels: lut,naive,dense")->capture_default_str();
  bench_cmd->add_option("--mode", ba.mode, "Mode of synthetic models")
      ->check(CLI::IsMember({"asym", "sym"}))
      ->capture_default_str();
  bench_cmd->add_option("--group", ba.group, "Group size of synthetic models")->capture_default_str();
  bench_cmd->add_option("--chunk", ba.chunk, "Lookup-table chunk width")
      ->check(CLI::IsMember({4u, 8u}))
      ->capture_default_str();
  bench_cmd->add_option("--seed", ba.seed, "Seed for synthetic models and inputs")->capture_default_str();
  bench_cmd->add_option("--format", ba.format, "Report format")
      ->check(CLI::IsMember({"text", "csv"}))
      ->capture_default_str();

  InspectArgs ia;
  auto* inspect = app.add_subcommand("inspect", "Print the memory footprint of a model");
  inspect->add_option("--model", ia.model, "Model (ABCQ)")->required();
  inspect->add_option("--scale-width", ia.scale_width, "Scale width in bytes for the accounting")
      ->check(CLI::IsMember({2, 4}))
      ->capture_default_str();
  inspect->add_option("--format", ia.format, "Report format")
      ->check(CLI::IsMember({"text", "csv", "kv"}))
      ->capture_default_str();

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Write a seeded N(0,1) matrix");
  generate->add_option("--rows", gen.rows, "Rows")->required();
  generate->add_option("--cols", gen.cols, "Columns")->required();
  generate->add_option("--seed", gen.seed, "Seed")->capture_default_str();
  generate->add_option("--out", gen.out, "Output (FMAT)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  configure_threads_from_env();
  try {
    if (*quantize) return run_quantize(qa);
    if (*refine) return run_refine(ra);
    if (*gemv) return run_gemv(ga);
    if (*bench_cmd) return run_bench(ba);
    if (*inspect) return run_inspect(ia);
    if (*generate) return run_generate(gen);
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    if (exit_code_for(e.code()) == kExitUsage) {
      const CLI::App* sub = app.get_subcommands().front();
      std::cerr << '\n' << sub->help();
    }
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  }
  return kExitUsage;
}
