#include "anybcq/calib.hpp"

#include <cmath>
#include <vector>

#include "anybcq/parallel.hpp"
#include "bcq_kernels.hpp"
#include "linalg.hpp"

namespace anybcq {

namespace {

// Row parameters are laid out as [alpha(plane 0, groups...), ...,
// alpha(plane p-1, groups...), offset(groups...)]; the offset block exists only
// in asymmetric mode.
struct RowLayout {
  std::size_t precision;
  std::size_t groups;
  bool with_offset;

  std::size_t size() const { return (precision + (with_offset ? 1 : 0)) * groups; }
  std::size_t alpha_index(std::size_t plane, std::size_t group) const {
    return plane * groups + group;
  }
  std::size_t offset_index(std::size_t group) const { return precision * groups + group; }
};

std::vector<float> gather_row(const ScaleTensor& scales, std::size_t row, const RowLayout& lay) {
  std::vector<float> theta(lay.size());
  for (std::size_t i = 0; i < lay.precision; ++i) {
    for (std::size_t g = 0; g < lay.groups; ++g) theta[lay.alpha_index(i, g)] = scales.alpha(i, row, g);
  }
  if (lay.with_offset) {
    for (std::size_t g = 0; g < lay.groups; ++g) theta[lay.offset_index(g)] = scales.offset(row, g);
  }
  return theta;
}

void scatter_row(ScaleTensor& scales, std::size_t row, const RowLayout& lay,
                 const std::vector<float>& theta) {
  for (std::size_t i = 0; i < lay.precision; ++i) {
    for (std::size_t g = 0; g < lay.groups; ++g) scales.alpha(i, row, g) = theta[lay.alpha_index(i, g)];
  }
  if (lay.with_offset) {
    for (std::size_t g = 0; g < lay.groups; ++g) scales.offset(row, g) = theta[lay.offset_index(g)];
  }
}

detail::GroupScales group_params(const std::vector<float>& theta, const RowLayout& lay,
                                 std::size_t group) {
  detail::GroupScales s;
  for (std::size_t i = 0; i < lay.precision; ++i) s.alpha[i] = theta[lay.alpha_index(i, group)];
  if (lay.with_offset) s.offset = theta[lay.offset_index(group)];
  return s;
}

// sum_s (x_s . (w_row - w_hat_row))^2 with w_hat from real32 parameters.
double row_loss(std::span<const float> w_row, const detail::RowCodes& codes,
                const QuantConfig& cfg, const RowLayout& lay, const std::vector<float>& theta,
                const ActivationBatch& x, std::vector<double>& diff) {
  const std::size_t cols = w_row.size();
  for (std::size_t g = 0; g < lay.groups; ++g) {
    const auto span = detail::group_span(cfg, cols, g);
    const auto s = group_params(theta, lay, g);
    for (std::size_t k = span.begin; k < span.end; ++k) {
      diff[k] = static_cast<double>(w_row[k]) - detail::reconstruct(codes, k, lay.precision, s);
    }
  }
  double loss = 0.0;
  for (std::size_t s = 0; s < x.rows(); ++s) {
    const auto xs = x.row(s);
    double dot = 0.0;
    for (std::size_t k = 0; k < cols; ++k) dot += static_cast<double>(xs[k]) * diff[k];
    loss += dot * dot;
  }
  return loss;
}

void check_calib_shapes(const WeightMatrix& w, const QuantizedView& view, const ActivationBatch& x) {
  require(w.rows() == view.rows() && w.cols() == view.cols(), ErrorCode::kShapeMismatch,
          "weight matrix shape does not match the model");
  require(x.cols() == w.cols(), ErrorCode::kShapeMismatch,
          "calibration batch width does not match the weight columns");
}

// Per-row regression problem: features F (samples x params) and targets t.
struct RowSystem {
  std::size_t samples;
  std::size_t params;
  std::vector<double> features;  // row-major samples x params
  std::vector<double> targets;

  double residual_sq(const std::vector<double>& theta) const {
    double loss = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
      double pred = 0.0;
      const double* f = features.data() + s * params;
      for (std::size_t j = 0; j < params; ++j) pred += f[j] * theta[j];
      const double r = pred - targets[s];
      loss += r * r;
    }
    return loss;
  }
};

void build_row_system(std::span<const float> w_row, const detail::RowCodes& codes,
                      const QuantConfig& cfg, const RowLayout& lay, const ActivationBatch& x,
                      RowSystem& sys) {
  const std::size_t cols = w_row.size();
  sys.samples = x.rows();
  sys.params = lay.size();
  sys.features.assign(sys.samples * sys.params, 0.0);
  sys.targets.assign(sys.samples, 0.0);
  for (std::size_t s = 0; s < sys.samples; ++s) {
    const auto xs = x.row(s);
    double* f = sys.features.data() + s * sys.params;
    double target = 0.0;
    for (std::size_t g = 0; g < lay.groups; ++g) {
      const auto span = detail::group_span(cfg, cols, g);
      double xsum = 0.0;
      for (std::size_t k = span.begin; k < span.end; ++k) {
        xsum += xs[k];
        target += static_cast<double>(xs[k]) * w_row[k];
      }
      for (std::size_t i = 0; i < lay.precision; ++i) {
        const std::int8_t* b = codes.plane(i);
        double acc = 0.0;
        for (std::size_t k = span.begin; k < span.end; ++k) acc += b[k] * static_cast<double>(xs[k]);
        f[lay.alpha_index(i, g)] = acc;
      }
      if (lay.with_offset) f[lay.offset_index(g)] = xsum;
    }
    sys.targets[s] = target;
  }
}

void normal_equations(const RowSystem& sys, std::vector<double>& a, std::vector<double>& b) {
  const std::size_t m = sys.params;
  a.assign(m * m, 0.0);
  b.assign(m, 0.0);
  for (std::size_t s = 0; s < sys.samples; ++s) {
    const double* f = sys.features.data() + s * m;
    for (std::size_t r = 0; r < m; ++r) {
      if (f[r] == 0.0) continue;
      b[r] += f[r] * sys.targets[s];
      for (std::size_t c = 0; c <= r; ++c) a[r * m + c] += f[r] * f[c];
    }
  }
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = r + 1; c < m; ++c) a[r * m + c] = a[c * m + r];
  }
}

// Full-batch gradient descent on the summed squared output error. A step that
// raises the loss is rejected and the row's step size halved.
std::vector<double> gradient_descent(const RowSystem& sys, std::vector<double> theta,
                                     const RefineOptions& opts) {
  std::vector<double> a;
  std::vector<double> b;
  normal_equations(sys, a, b);
  const std::size_t m = sys.params;
  double lr = opts.learning_rate;
  double loss = sys.residual_sq(theta);
  std::vector<double> grad(m);
  std::vector<double> trial(m);
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    for (std::size_t r = 0; r < m; ++r) {
      double acc = -b[r];
      for (std::size_t c = 0; c < m; ++c) acc += a[r * m + c] * theta[c];
      grad[r] = 2.0 * acc;
    }
    bool accepted = false;
    for (int attempt = 0; attempt < 60 && !accepted; ++attempt) {
      for (std::size_t j = 0; j < m; ++j) trial[j] = theta[j] - lr * grad[j];
      const double trial_loss = sys.residual_sq(trial);
      if (trial_loss <= loss) {
        theta.swap(trial);
        loss = trial_loss;
        accepted = true;
      } else {
        lr *= 0.5;
      }
    }
    if (!accepted) break;
  }
  return theta;
}

}  // namespace

double calibration_loss(const WeightMatrix& w, const QuantizedView& view, const ActivationBatch& x) {
  check_calib_shapes(w, view, x);
  const RowLayout lay{view.precision(), view.groups(), view.config().asymmetric()};
  std::vector<double> row_losses(w.rows(), 0.0);
  parallel_for(w.rows(), [&](std::size_t row_begin, std::size_t row_end) {
    detail::RowCodes codes(lay.precision, w.cols());
    std::vector<double> diff(w.cols());
    for (std::size_t n = row_begin; n < row_end; ++n) {
      detail::load_row_codes(view.bitplanes(), n, codes);
      row_losses[n] = row_loss(w.row(n), codes, view.config(), lay,
                               gather_row(view.scales(), n, lay), x, diff);
    }
  });
  double total = 0.0;
  for (double l : row_losses) total += l;
  return total;
}

double calibration_loss(const WeightMatrix& w, const MultiPrecisionModel& model,
                        const ActivationBatch& x, std::size_t precision) {
  return calibration_loss(w, model.view(precision), x);
}

RefineResult refine_scales(const WeightMatrix& w, const MultiPrecisionModel& model,
                           const ActivationBatch& x, std::size_t precision,
                           const RefineOptions& opts) {
  const QuantizedView view = model.view(precision);
  check_calib_shapes(w, view, x);
  require(all_finite(w.data()) && all_finite(x.data()), ErrorCode::kNonFinite,
          "refinement inputs must be finite");
  require(opts.learning_rate > 0.0, ErrorCode::kInvalidArgument, "learning rate must be positive");

  const auto& cfg = model.config();
  const RowLayout lay{precision, model.groups(), cfg.asymmetric()};
  const bool underdetermined = x.rows() < lay.size();

  RefineResult result;
  result.scales = model.scale_set(precision);
  std::vector<double> before(w.rows(), 0.0);
  std::vector<double> after(w.rows(), 0.0);
  std::vector<std::uint8_t> ridge(w.rows(), 0);

  parallel_for(w.rows(), [&](std::size_t row_begin, std::size_t row_end) {
    detail::RowCodes codes(precision, w.cols());
    std::vector<double> diff(w.cols());
    RowSystem sys;
    std::vector<double> a;
    std::vector<double> b;
    for (std::size_t n = row_begin; n < row_end; ++n) {
      const auto w_row = w.row(n);
      detail::load_row_codes(model.bitplanes(), n, codes);
      const std::vector<float> incumbent = gather_row(result.scales, n, lay);
      build_row_system(w_row, codes, cfg, lay, x, sys);

      std::vector<double> theta;
      if (opts.solver == RefineSolver::kExact) {
        normal_equations(sys, a, b);
        auto solved = detail::solve_spd(a, b, underdetermined);
        ridge[n] = solved.ridge_used ? 1 : 0;
        theta = std::move(solved.x);
      } else {
        theta = gradient_descent(sys, std::vector<double>(incumbent.begin(), incumbent.end()), opts);
      }
      std::vector<float> candidate(theta.size());
      for (std::size_t j = 0; j < theta.size(); ++j) candidate[j] = static_cast<float>(theta[j]);

      const double loss_old = row_loss(w_row, codes, cfg, lay, incumbent, x, diff);
      const double loss_new = row_loss(w_row, codes, cfg, lay, candidate, x, diff);
      before[n] = loss_old;
      // Rows are written only when the real32 solution does not lose to the
      // incumbent; disjoint rows make this race-free.
      if (loss_new <= loss_old) {
        scatter_row(result.scales, n, lay, candidate);
        after[n] = loss_new;
      } else {
        after[n] = loss_old;
      }
    }
  });

  for (std::size_t n = 0; n < w.rows(); ++n) {
    result.loss_before += before[n];
    result.loss_after += after[n];
    result.ridge_rows += ridge[n];
  }
  return result;
}

}  // namespace anybcq
