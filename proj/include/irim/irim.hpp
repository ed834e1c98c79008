#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "irim/coupling.hpp"
#include "irim/forward_model.hpp"
#include "irim/memory_meter.hpp"
#include "irim/tensor.hpp"

namespace irim {

/// How the cotangent flows through the injected data-consistency gradient.
/// Exact differentiates through grad D (Jacobian A^H A); StopGradient treats
/// it as a constant input.
enum class GradientFlow { kExact, kStopGradient };

std::string to_string(GradientFlow flow);
GradientFlow gradient_flow_from_string(const std::string& s);

/// Downsampling factors rising by powers of two towards the middle of the
/// stack and falling again, capped at max_factor. L = 6, max 4 gives
/// [1, 2, 4, 4, 2, 1].
std::vector<std::size_t> fanned_schedule(std::size_t layers,
                                         std::size_t max_factor);

struct ModelConfig {
  std::size_t channels = 16;  // C: 2 estimate channels + C-2 memory channels
  std::size_t steps = 4;      // T
  std::size_t layers = 6;     // L per step
  std::vector<std::size_t> schedule = {1, 2, 4, 4, 2, 1};
  std::size_t split = 0;  // 0 selects C/2
  std::size_t reflections = 3;
  std::size_t hidden = 16;
  GradientFlow flow = GradientFlow::kExact;
  std::uint64_t seed = 0;

  std::size_t effective_split() const { return split ? split : channels / 2; }
  std::size_t max_factor() const;
  void validate() const;

  /// Desk preset (C=16, T=4, L=6) and the larger paper-scale preset
  /// (C=64, T=8, L=10, schedule 1..16..1).
  static ModelConfig desk();
  static ModelConfig paper_scale();
};

/// Machine state (eta, s) stored as one [N, C, H, W] tensor: channels 0-1 hold
/// the real and imaginary parts of eta, channels 2..C-1 hold s.
template <typename T>
struct MachineState {
  Tensor<T> values;
  std::size_t step = 0;

  static MachineState zeros(std::size_t batch, std::size_t channels,
                            std::size_t height, std::size_t width);
  static MachineState from_parts(const ComplexField<T>& eta,
                                 const Tensor<T>& memory, std::size_t step);

  std::size_t channels() const { return values.extent(1); }
  ComplexField<T> eta() const;
  Tensor<T> memory() const;
};

/// h_t: L coupling layers applied in order, inverted in reverse order.
template <typename T>
class StepNetwork {
 public:
  StepNetwork() = default;
  explicit StepNetwork(std::vector<AdditiveCouplingLayer<T>> layers)
      : layers_(std::move(layers)) {}

  std::size_t size() const { return layers_.size(); }
  const AdditiveCouplingLayer<T>& layer(std::size_t l) const { return layers_.at(l); }
  AdditiveCouplingLayer<T>& layer(std::size_t l) { return layers_.at(l); }
  std::vector<AdditiveCouplingLayer<T>>& layers() { return layers_; }
  const std::vector<AdditiveCouplingLayer<T>>& layers() const { return layers_; }

  Tensor<T> forward(const Tensor<T>& x, MemoryMeter* meter = nullptr) const;
  Tensor<T> inverse(const Tensor<T>& y, MemoryMeter* meter = nullptr) const;

 private:
  std::vector<AdditiveCouplingLayer<T>> layers_;
};

/// T step networks without weight sharing.
template <typename T>
class IRIMModel {
 public:
  explicit IRIMModel(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }
  std::size_t steps() const { return steps_.size(); }
  const StepNetwork<T>& step(std::size_t t) const { return steps_.at(t); }
  StepNetwork<T>& step(std::size_t t) { return steps_.at(t); }

  /// Layers in rollout order; global index = t * L + l.
  std::size_t layer_count() const { return cfg_.steps * cfg_.layers; }
  AdditiveCouplingLayer<T>& layer(std::size_t global);
  const AdditiveCouplingLayer<T>& layer(std::size_t global) const;
  std::size_t parameter_count() const;

  /// Initializes all layers from cfg.seed.
  void initialize();
  /// Sets every residual block to zero (each h_t keeps only its orthogonal
  /// embedding, which then cancels).
  void zero_residuals();

 private:
  ModelConfig cfg_;
  std::vector<StepNetwork<T>> steps_;
};

/// g_t: places grad D into the first two memory channels and zero-fills the
/// remaining C-4. Output is [N, C-2, H, W]. Requires C >= 4.
template <typename T>
Tensor<T> gradient_injection(const ComplexField<T>& grad, std::size_t channels);

/// Forward update:
///   z'_t = eta_t
///   s'_t = s_t + g_t(grad D(d, A z'_t))
///   (eta_{t+1}, s_{t+1}) = h_t(z'_t, s'_t)
template <typename T>
MachineState<T> irim_forward_step(const MachineState<T>& state,
                                  const ComplexField<T>& data,
                                  const FourierOperator<T>& op,
                                  const StepNetwork<T>& step,
                                  MemoryMeter* meter = nullptr);

/// Reverse update, the exact algebraic inverse of irim_forward_step:
///   (z'_t, s'_t) = h_t^{-1}(eta_{t+1}, s_{t+1})
///   s_t = s'_t - g_t(grad D(d, A z'_t));  eta_t = z'_t
template <typename T>
MachineState<T> irim_reverse_step(const MachineState<T>& state,
                                  const ComplexField<T>& data,
                                  const FourierOperator<T>& op,
                                  const StepNetwork<T>& step,
                                  MemoryMeter* meter = nullptr);

/// The state between injection and h_t: (z'_t, s'_t) as one tensor.
template <typename T>
Tensor<T> inject(const MachineState<T>& state, const ComplexField<T>& data,
                 const FourierOperator<T>& op);

/// Inverse of inject given (z'_t, s'_t).
template <typename T>
MachineState<T> remove_injection(const Tensor<T>& injected,
                                 const ComplexField<T>& data,
                                 const FourierOperator<T>& op, std::size_t step);

template <typename T>
struct Rollout {
  MachineState<T> final_state;
  std::vector<MachineState<T>> trajectory;  // states 0..T when requested
  ComplexField<T> estimate() const { return final_state.eta(); }
};

/// Applies `steps` forward updates from the zero state. steps <= model.steps().
template <typename T>
Rollout<T> irim_rollout(const IRIMModel<T>& model, const ComplexField<T>& data,
                        const FourierOperator<T>& op, std::size_t steps,
                        bool keep_trajectory = false,
                        MemoryMeter* meter = nullptr);

}  // namespace irim
