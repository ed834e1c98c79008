#include "irim/irim.hpp"

#include <algorithm>

#include "irim/rng.hpp"

namespace irim {

std::string to_string(GradientFlow flow) {
  return flow == GradientFlow::kExact ? "exact" : "stop_gradient";
}

GradientFlow gradient_flow_from_string(const std::string& s) {
  if (s == "exact") return GradientFlow::kExact;
  if (s == "stop_gradient") return GradientFlow::kStopGradient;
  throw ConfigError("unknown gradient flow '" + s +
                    "' (expected exact or stop_gradient)");
}

std::vector<std::size_t> fanned_schedule(std::size_t layers,
                                         std::size_t max_factor) {
  std::vector<std::size_t> out(layers);
  for (std::size_t i = 0; i < layers; ++i) {
    const std::size_t depth = std::min(i, layers - 1 - i);
    std::size_t f = 1;
    for (std::size_t k = 0; k < depth && f < max_factor; ++k) f *= 2;
    out[i] = std::min(f, max_factor);
  }
  return out;
}

std::size_t ModelConfig::max_factor() const {
  return schedule.empty() ? 1 : *std::max_element(schedule.begin(), schedule.end());
}

void ModelConfig::validate() const {
  if (channels < 4) throw ConfigError("model needs at least 4 channels");
  if (steps < 1) throw ConfigError("model needs at least one step");
  if (schedule.size() != layers)
    throw ConfigError("downsampling schedule has " + std::to_string(schedule.size()) +
                      " entries for " + std::to_string(layers) + " layers");
  if (std::any_of(schedule.begin(), schedule.end(), [](std::size_t d) { return d == 0; }))
    throw ConfigError("downsampling factors must be >= 1");
  const std::size_t s = effective_split();
  if (s == 0 || s >= channels)
    throw ConfigError("split point must lie in (0, C)");
  if (hidden == 0) throw ConfigError("hidden width must be >= 1");
}

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::paper_scale() {
  ModelConfig cfg;
  cfg.channels = 64;
  cfg.steps = 8;
  cfg.layers = 10;
  cfg.schedule = fanned_schedule(10, 16);
  cfg.hidden = 64;
  return cfg;
}

template <typename T>
MachineState<T> MachineState<T>::zeros(std::size_t batch, std::size_t channels,
                                       std::size_t height, std::size_t width) {
  return {Tensor<T>({batch, channels, height, width}), 0};
}

template <typename T>
MachineState<T> MachineState<T>::from_parts(const ComplexField<T>& eta,
                                            const Tensor<T>& memory,
                                            std::size_t step) {
  return {concat_channels(eta.as_channels(), memory), step};
}

template <typename T>
ComplexField<T> MachineState<T>::eta() const {
  return {slice_channels(values, 0, 1), slice_channels(values, 1, 2)};
}

template <typename T>
Tensor<T> MachineState<T>::memory() const {
  return slice_channels(values, 2, values.extent(1));
}

template <typename T>
Tensor<T> StepNetwork<T>::forward(const Tensor<T>& x, MemoryMeter* meter) const {
  Tensor<T> y = x;
  for (const auto& layer : layers_) y = layer.forward(y, meter);
  return y;
}

template <typename T>
Tensor<T> StepNetwork<T>::inverse(const Tensor<T>& y, MemoryMeter* meter) const {
  Tensor<T> x = y;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
    x = it->inverse(x, meter);
  return x;
}

template <typename T>
IRIMModel<T>::IRIMModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  steps_.reserve(cfg_.steps);
  for (std::size_t t = 0; t < cfg_.steps; ++t) {
    std::vector<AdditiveCouplingLayer<T>> layers;
    layers.reserve(cfg_.layers);
    for (std::size_t l = 0; l < cfg_.layers; ++l)
      layers.emplace_back(CouplingConfig{cfg_.channels, cfg_.effective_split(),
                                         cfg_.reflections, cfg_.hidden,
                                         cfg_.schedule[l]});
    steps_.emplace_back(std::move(layers));
  }
}

template <typename T>
AdditiveCouplingLayer<T>& IRIMModel<T>::layer(std::size_t global) {
  return steps_.at(global / cfg_.layers).layer(global % cfg_.layers);
}

template <typename T>
const AdditiveCouplingLayer<T>& IRIMModel<T>::layer(std::size_t global) const {
  return steps_.at(global / cfg_.layers).layer(global % cfg_.layers);
}

template <typename T>
std::size_t IRIMModel<T>::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < layer_count(); ++i) n += layer(i).parameter_count();
  return n;
}

template <typename T>
void IRIMModel<T>::initialize() {
  for (std::size_t i = 0; i < layer_count(); ++i) {
    Rng rng(derive_seed(cfg_.seed, i));
    layer(i).initialize(rng);
  }
}

template <typename T>
void IRIMModel<T>::zero_residuals() {
  for (std::size_t i = 0; i < layer_count(); ++i) layer(i).zero_residual();
}

template <typename T>
Tensor<T> gradient_injection(const ComplexField<T>& grad, std::size_t channels) {
  if (channels < 4)
    throw ConfigError("gradient_injection: need C >= 4 channels, got " +
                      std::to_string(channels));
  Tensor<T> out({grad.batch(), channels - 2, grad.height(), grad.width()});
  assign_channels(out, 0, grad.re);
  assign_channels(out, 1, grad.im);
  return out;
}

template <typename T>
Tensor<T> inject(const MachineState<T>& state, const ComplexField<T>& data,
                 const FourierOperator<T>& op) {
  if (state.values.rank() != 4)
    throw ShapeError("machine state must be rank 4");
  const ComplexField<T> eta = state.eta();
  const auto grad = data_consistency_grad(op, data, eta);
  Tensor<T> out = state.values;
  // s'_t = s_t + g_t: only memory channels 0-1 (state channels 2-3) change.
  const std::size_t plane = grad.height() * grad.width();
  const std::size_t c = state.channels();
  for (std::size_t b = 0; b < grad.batch(); ++b)
    for (std::size_t i = 0; i < plane; ++i) {
      out[(b * c + 2) * plane + i] += grad.re[b * plane + i];
      out[(b * c + 3) * plane + i] += grad.im[b * plane + i];
    }
  return out;
}

template <typename T>
MachineState<T> remove_injection(const Tensor<T>& injected,
                                 const ComplexField<T>& data,
                                 const FourierOperator<T>& op, std::size_t step) {
  MachineState<T> state{injected, step};
  const auto grad = data_consistency_grad(op, data, state.eta());
  const std::size_t plane = grad.height() * grad.width();
  const std::size_t c = state.channels();
  for (std::size_t b = 0; b < grad.batch(); ++b)
    for (std::size_t i = 0; i < plane; ++i) {
      state.values[(b * c + 2) * plane + i] -= grad.re[b * plane + i];
      state.values[(b * c + 3) * plane + i] -= grad.im[b * plane + i];
    }
  return state;
}

template <typename T>
MachineState<T> irim_forward_step(const MachineState<T>& state,
                                  const ComplexField<T>& data,
                                  const FourierOperator<T>& op,
                                  const StepNetwork<T>& step, MemoryMeter* meter) {
  if (state.channels() < 4)
    throw ConfigError("machine state needs at least 4 channels");
  return {step.forward(inject(state, data, op), meter), state.step + 1};
}

template <typename T>
MachineState<T> irim_reverse_step(const MachineState<T>& state,
                                  const ComplexField<T>& data,
                                  const FourierOperator<T>& op,
                                  const StepNetwork<T>& step, MemoryMeter* meter) {
  if (state.channels() < 4)
    throw ConfigError("machine state needs at least 4 channels");
  const std::size_t prev = state.step ? state.step - 1 : 0;
  return remove_injection(step.inverse(state.values, meter), data, op, prev);
}

template <typename T>
Rollout<T> irim_rollout(const IRIMModel<T>& model, const ComplexField<T>& data,
                        const FourierOperator<T>& op, std::size_t steps,
                        bool keep_trajectory, MemoryMeter* meter) {
  if (steps > model.steps())
    throw ConfigError("rollout of " + std::to_string(steps) +
                      " steps exceeds the model's " + std::to_string(model.steps()));
  Rollout<T> out{MachineState<T>::zeros(data.batch(), model.config().channels,
                                        data.height(), data.width()),
                 {}};
  if (keep_trajectory) out.trajectory.push_back(out.final_state);
  for (std::size_t t = 0; t < steps; ++t) {
    out.final_state =
        irim_forward_step(out.final_state, data, op, model.step(t), meter);
    if (keep_trajectory) out.trajectory.push_back(out.final_state);
  }
  return out;
}

#define IRIM_INSTANTIATE(T)                                                      \
  template struct MachineState<T>;                                               \
  template class StepNetwork<T>;                                                 \
  template class IRIMModel<T>;                                                   \
  template Tensor<T> gradient_injection(const ComplexField<T>&, std::size_t);    \
  template Tensor<T> inject(const MachineState<T>&, const ComplexField<T>&,      \
                            const FourierOperator<T>&);                          \
  template MachineState<T> remove_injection(const Tensor<T>&,                    \
                                            const ComplexField<T>&,              \
                                            const FourierOperator<T>&,           \
                                            std::size_t);                        \
  template MachineState<T> irim_forward_step(                                    \
      const MachineState<T>&, const ComplexField<T>&, const FourierOperator<T>&, \
      const StepNetwork<T>&, MemoryMeter*);                                      \
  template MachineState<T> irim_reverse_step(                                    \
      const MachineState<T>&, const ComplexField<T>&, const FourierOperator<T>&, \
      const StepNetwork<T>&, MemoryMeter*);                                      \
  template Rollout<T> irim_rollout(const IRIMModel<T>&, const ComplexField<T>&,  \
                                   const FourierOperator<T>&, std::size_t, bool, \
                                   MemoryMeter*);

IRIM_INSTANTIATE(float)
IRIM_INSTANTIATE(double)
#undef IRIM_INSTANTIATE

}  // namespace irim
