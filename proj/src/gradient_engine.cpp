#include "irim/gradient_engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "irim/rng.hpp"

namespace irim {

std::string to_string(BackpropMode mode) {
  return mode == BackpropMode::kStored ? "stored" : "invertible";
}

BackpropMode backprop_mode_from_string(const std::string& s) {
  if (s == "stored") return BackpropMode::kStored;
  if (s == "invertible") return BackpropMode::kInvertible;
  throw ConfigError("unknown backprop mode '" + s +
                    "' (expected stored or invertible)");
}

template <typename T>
double GradReport<T>::max_abs_grad() const {
  double m = 0.0;
  for (const auto& g : grads)
    for (T v : g) m = std::max(m, std::abs(double(v)));
  return m;
}

template <typename T>
double GradReport<T>::grad_norm() const {
  double s = 0.0;
  for (const auto& g : grads)
    for (T v : g) s += double(v) * double(v);
  return std::sqrt(s);
}

namespace {

// Random +-1 projection of x scaled by 1/sqrt(n). A reconstruction error e
// shifts it by roughly the RMS of e, and nothing but a scalar is kept.
template <typename T>
double checksum(const Tensor<T>& x) {
  double s = 0.0;
  std::uint64_t state = 0x6a09e667f3bcc909ULL;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::uint64_t r = derive_seed(state, i);
    s += (r & 1) ? double(x[i]) : -double(x[i]);
  }
  return x.size() ? s / std::sqrt(double(x.size())) : 0.0;
}

template <typename T>
double rms(const Tensor<T>& x) {
  return x.size() ? std::sqrt(double(squared_norm(x)) / double(x.size())) : 0.0;
}

template <typename T>
void add_eta_cotangent(Tensor<T>& cot, const ComplexField<T>& g, double w) {
  const std::size_t plane = g.height() * g.width();
  const std::size_t c = cot.extent(1);
  for (std::size_t b = 0; b < g.batch(); ++b)
    for (std::size_t i = 0; i < plane; ++i) {
      cot[(b * c + 0) * plane + i] += static_cast<T>(w * double(g.re[b * plane + i]));
      cot[(b * c + 1) * plane + i] += static_cast<T>(w * double(g.im[b * plane + i]));
    }
}

// cot(eta_t) += A^H A cot(s'_t)[channels 0-1]; cot(s_t) = cot(s'_t).
template <typename T>
void injection_backward(Tensor<T>& cot, const FourierOperator<T>& op) {
  const ComplexField<T> cs(slice_channels(cot, 2, 3), slice_channels(cot, 3, 4));
  add_eta_cotangent(cot, dc_grad_vjp(op, cs), 1.0);
}

template <typename T>
void require_weights(const IRIMModel<T>& model, const std::vector<double>& weights) {
  validate_weights(weights);
  if (weights.size() != model.steps())
    throw ConfigError("got " + std::to_string(weights.size()) +
                      " step weights for a " + std::to_string(model.steps()) +
                      "-step model");
}

}  // namespace

template <typename T>
double rollout_loss(const IRIMModel<T>& model, const ComplexField<T>& data,
                    const FourierOperator<T>& op, const EstimateLoss<T>& loss,
                    const std::vector<double>& weights) {
  require_weights(model, weights);
  auto state = MachineState<T>::zeros(data.batch(), model.config().channels,
                                      data.height(), data.width());
  double total = 0.0;
  for (std::size_t t = 0; t < model.steps(); ++t) {
    state = irim_forward_step(state, data, op, model.step(t));
    if (weights[t] != 0.0) total += weights[t] * double(loss.value(state.eta()));
  }
  return total;
}

template <typename T>
GradReport<T> backprop(const IRIMModel<T>& model, const ComplexField<T>& data,
                       const FourierOperator<T>& op, const EstimateLoss<T>& loss,
                       const std::vector<double>& weights, BackpropMode mode,
                       const BackpropOptions& opts, MemoryMeter* meter) {
  require_weights(model, weights);
  if (opts.check_every == 0) throw ConfigError("check_every must be >= 1");
  MemoryMeter local;
  MemoryMeter* m = meter ? meter : &local;

  const ModelConfig& cfg = model.config();
  const std::size_t steps = model.steps();
  const std::size_t L = cfg.layers;
  const bool stored = mode == BackpropMode::kStored;
  const bool exact = cfg.flow == GradientFlow::kExact;

  GradReport<T> report;
  report.grads.resize(model.layer_count());
  for (std::size_t i = 0; i < model.layer_count(); ++i)
    report.grads[i].assign(model.layer(i).parameter_count(), T(0));

  // Forward sweep.
  m->set_phase("rollout");
  std::vector<Tensor<T>> inputs;  // stored mode: every layer input
  std::vector<double> sums, scales;  // invertible mode: per-layer checksums
  if (stored) inputs.reserve(model.layer_count());
  else {
    sums.reserve(model.layer_count());
    scales.reserve(model.layer_count());
  }
  auto state = MachineState<T>::zeros(data.batch(), cfg.channels, data.height(),
                                      data.width());
  const std::size_t state_size = state.values.size();
  double total = 0.0;
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor<T> x = inject(state, data, op);
    for (std::size_t l = 0; l < L; ++l) {
      if (stored) {
        m->retain(state_size);
        inputs.push_back(x);
      } else {
        sums.push_back(checksum(x));
        scales.push_back(std::max(1.0, rms(x)));
      }
      x = model.step(t).layer(l).forward(x, m);
    }
    state = MachineState<T>{std::move(x), t + 1};
    if (weights[t] != 0.0) total += weights[t] * double(loss.value(state.eta()));
  }
  if (!std::isfinite(total))
    throw NumericalError("backprop: loss is not finite (" + std::to_string(total) + ")");
  report.loss = total;

  // Backward sweep.
  m->set_phase("backward");
  Tensor<T> cot(state.values.shape());
  Tensor<T> current = std::move(state.values);  // x_{t+1}
  Tensor<T> reconstructed_u0;
  for (std::size_t tt = steps; tt-- > 0;) {
    if (weights[tt] != 0.0) {
      const ComplexField<T> eta(slice_channels(current, 0, 1),
                                slice_channels(current, 1, 2));
      add_eta_cotangent(cot, loss.gradient(eta), weights[tt]);
    }
    for (std::size_t l = L; l-- > 0;) {
      const std::size_t g = tt * L + l;
      const auto& layer = model.step(tt).layer(l);
      Tensor<T> input;
      if (stored) {
        input = std::move(inputs[g]);
      } else {
        input = layer.inverse(current, m);
        if (opts.corrupt_inverse_layer == static_cast<long>(g)) {
          std::uint64_t s = derive_seed(0x5eed, g);
          for (std::size_t i = 0; i < input.size(); ++i)
            input[i] += static_cast<T>(opts.corrupt_scale *
                                       ((derive_seed(s, i) & 1) ? 1.0 : -1.0));
        }
        if (g % opts.check_every == 0) {
          const double drift = std::abs(checksum(input) - sums[g]) / scales[g];
          report.max_drift = std::max(report.max_drift, drift);
          if (!(drift <= opts.drift_bound))
            throw NumericalError("reconstruction drift " + std::to_string(drift) +
                                 " exceeds bound " + std::to_string(opts.drift_bound) +
                                 " at step " + std::to_string(tt) + ", layer " +
                                 std::to_string(l) + " (global layer " +
                                 std::to_string(g) + ")");
        }
        if (g == 0) {
          // The initial state is known to be zero, so the first input can be
          // recomputed exactly; the reconstruction only serves the drift check.
          reconstructed_u0 = std::move(input);
          input = inject(MachineState<T>::zeros(data.batch(), cfg.channels,
                                                data.height(), data.width()),
                         data, op);
        }
      }
      cot = layer.vjp(input, cot, report.grads[g], m);
      if (opts.corrupt_vjp_layer == static_cast<long>(g))
        for (T& v : report.grads[g]) v *= static_cast<T>(1.0 + opts.corrupt_scale);
      // The layer input becomes the working state.
      if (stored) m->release(state_size);
      current = std::move(input);
    }
    // current and cot now refer to (z'_t, s'_t). In stored mode only eta of
    // x_t is needed further on, and z'_t = eta_t already.
    if (exact) injection_backward(cot, op);
    if (!stored && tt > 0) current = remove_injection(current, data, op, tt).values;
  }
  if (!stored) {
    report.initial_state_error = max_abs(
        remove_injection(L ? reconstructed_u0 : current, data, op, 0).values);
    report.max_drift = std::max(report.max_drift, report.initial_state_error);
    if (!(report.initial_state_error <= opts.drift_bound))
      throw NumericalError("reconstructed initial state deviates from zero by " +
                           std::to_string(report.initial_state_error) +
                           " (bound " + std::to_string(opts.drift_bound) + ")");
  }
  for (const auto& g : report.grads)
    for (T v : g)
      if (!std::isfinite(double(v)))
        throw NumericalError("backprop: non-finite parameter gradient");

  report.peak_elements = m->peak();
  report.layer_evals = m->layer_evals();
  report.phase_peaks = m->phase_peaks();
  return report;
}

template <typename T>
std::vector<ParamCoordinate> sample_coordinates(const IRIMModel<T>& model,
                                                std::size_t count,
                                                std::uint64_t seed) {
  std::vector<std::size_t> offsets{0};
  for (std::size_t i = 0; i < model.layer_count(); ++i)
    offsets.push_back(offsets.back() + model.layer(i).parameter_count());
  const std::size_t total = offsets.back();
  if (count > total)
    throw ConfigError("cannot sample " + std::to_string(count) + " of " +
                      std::to_string(total) + " parameters");
  Rng rng(seed);
  std::set<std::size_t> picked;
  std::vector<ParamCoordinate> out;
  while (out.size() < count) {
    const std::size_t flat = rng.below(total);
    if (!picked.insert(flat).second) continue;
    const auto it = std::upper_bound(offsets.begin(), offsets.end(), flat);
    const std::size_t layer = static_cast<std::size_t>(it - offsets.begin()) - 1;
    out.push_back({layer, flat - offsets[layer]});
  }
  return out;
}

template <typename T>
std::vector<double> finite_difference_grad(
    IRIMModel<T>& model, const ComplexField<T>& data, const FourierOperator<T>& op,
    const EstimateLoss<T>& loss, const std::vector<double>& weights,
    const std::vector<ParamCoordinate>& coordinates, double h) {
  if (!(h > 0.0)) throw ConfigError("finite difference step must be positive");
  std::vector<double> out;
  out.reserve(coordinates.size());
  for (const auto& c : coordinates) {
    auto params = model.layer(c.layer).params();
    if (c.index >= params.size())
      throw ConfigError("parameter index out of range for layer " +
                        std::to_string(c.layer));
    const T saved = params[c.index];
    params[c.index] = static_cast<T>(double(saved) + h);
    const double up = rollout_loss(model, data, op, loss, weights);
    params[c.index] = static_cast<T>(double(saved) - h);
    const double down = rollout_loss(model, data, op, loss, weights);
    params[c.index] = saved;
    out.push_back((up - down) / (2.0 * h));
  }
  return out;
}

template <typename T>
double relative_grad_difference(const GradReport<T>& a, const GradReport<T>& b,
                                double eps) {
  if (a.grads.size() != b.grads.size())
    throw ShapeError("gradient reports cover different layer counts");
  double diff = 0.0;
  for (std::size_t i = 0; i < a.grads.size(); ++i) {
    if (a.grads[i].size() != b.grads[i].size())
      throw ShapeError("gradient reports differ at layer " + std::to_string(i));
    for (std::size_t k = 0; k < a.grads[i].size(); ++k)
      diff = std::max(diff, std::abs(double(a.grads[i][k]) - double(b.grads[i][k])));
  }
  return diff / (b.max_abs_grad() + eps);
}

template <typename T>
std::vector<MemoryRow> memory_report(
    const ModelConfig& base,
    const std::vector<std::pair<std::size_t, std::size_t>>& grid,
    const std::vector<BackpropMode>& modes, const MemoryProblem& problem) {
  const auto mask = make_mask(problem.height, problem.width, problem.acceleration,
                              problem.center_fraction,
                              derive_seed(problem.seed, 1));
  const FourierOperator<T> op(mask);
  Rng rng(derive_seed(problem.seed, 2));
  auto image = ComplexField<T>::zeros(problem.batch, problem.height, problem.width);
  for (std::size_t i = 0; i < image.re.size(); ++i) {
    image.re[i] = static_cast<T>(rng.gaussian());
    image.im[i] = static_cast<T>(rng.gaussian());
  }
  const auto data = simulate_measurement(image, op, 0.0, derive_seed(problem.seed, 3));
  const MaskedNmseLoss<T> loss(image, 1.0, derive_seed(problem.seed, 4));

  std::vector<MemoryRow> rows;
  for (const auto& [steps, layers] : grid) {
    ModelConfig cfg = base;
    cfg.steps = steps;
    cfg.layers = layers;
    cfg.schedule = fanned_schedule(layers, base.max_factor());
    IRIMModel<T> model(cfg);
    model.initialize();
    const auto weights = last_step_weights(steps);
    for (BackpropMode mode : modes) {
      MemoryMeter testing;
      irim_rollout(model, data, op, steps, false, &testing);
      rows.push_back({steps, layers, mode, "testing", testing.peak(),
                      testing.layer_evals()});
      MemoryMeter training;
      backprop(model, data, op, loss, weights, mode, {}, &training);
      rows.push_back({steps, layers, mode, "training", training.peak(),
                      training.layer_evals()});
    }
  }
  return rows;
}

void write_memory_csv(std::ostream& out, const std::vector<MemoryRow>& rows) {
  out << "T,L,mode,phase,peak_elements,layer_evals\n";
  for (const auto& r : rows)
    out << r.steps << ',' << r.layers << ',' << to_string(r.mode) << ','
        << r.phase << ',' << r.peak_elements << ',' << r.layer_evals << '\n';
}

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw ShapeError("fit_line needs at least two paired points");
  const double n = double(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw NumericalError("fit_line: x values are all equal");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double sse = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (fit.intercept + fit.slope * x[i]);
    sse += r * r;
  }
  fit.r_squared = syy == 0.0 ? 1.0 : 1.0 - sse / syy;
  return fit;
}

#define IRIM_INSTANTIATE(T)                                                      \
  template struct GradReport<T>;                                                 \
  template double rollout_loss(const IRIMModel<T>&, const ComplexField<T>&,      \
                               const FourierOperator<T>&, const EstimateLoss<T>&, \
                               const std::vector<double>&);                      \
  template GradReport<T> backprop(const IRIMModel<T>&, const ComplexField<T>&,   \
                                  const FourierOperator<T>&,                     \
                                  const EstimateLoss<T>&,                        \
                                  const std::vector<double>&, BackpropMode,      \
                                  const BackpropOptions&, MemoryMeter*);         \
  template std::vector<ParamCoordinate> sample_coordinates(                      \
      const IRIMModel<T>&, std::size_t, std::uint64_t);                          \
  template std::vector<double> finite_difference_grad(                           \
      IRIMModel<T>&, const ComplexField<T>&, const FourierOperator<T>&,          \
      const EstimateLoss<T>&, const std::vector<double>&,                        \
      const std::vector<ParamCoordinate>&, double);                              \
  template double relative_grad_difference(const GradReport<T>&,                 \
                                           const GradReport<T>&, double);        \
  template std::vector<MemoryRow> memory_report<T>(                              \
      const ModelConfig&, const std::vector<std::pair<std::size_t, std::size_t>>&, \
      const std::vector<BackpropMode>&, const MemoryProblem&);

IRIM_INSTANTIATE(float)
IRIM_INSTANTIATE(double)
#undef IRIM_INSTANTIATE

}  // namespace irim
