#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "irim/forward_model.hpp"
#include "irim/irim.hpp"
#include "irim/losses.hpp"
#include "irim/memory_meter.hpp"

namespace irim {

enum class BackpropMode { kStored, kInvertible };

std::string to_string(BackpropMode mode);
BackpropMode backprop_mode_from_string(const std::string& s);

struct BackpropOptions {
  /// Reconstruction drift bound for invertible mode, compared against a
  /// checksum recorded during the forward sweep.
  double drift_bound = 1e-4;
  /// Check every K-th layer input (K >= 1); the initial state is always checked.
  std::size_t check_every = 1;
  /// Fault injection (debugging): perturb the reconstructed input of this
  /// global layer index in invertible mode. -1 disables.
  long corrupt_inverse_layer = -1;
  /// Fault injection (debugging): scale the parameter cotangents of this
  /// global layer index by (1 + corrupt_scale). -1 disables.
  long corrupt_vjp_layer = -1;
  double corrupt_scale = 1e-2;
};

template <typename T>
struct GradReport {
  /// One cotangent vector per coupling layer, indexed t * L + l.
  std::vector<std::vector<T>> grads;
  double loss = 0.0;
  std::size_t peak_elements = 0;
  std::size_t layer_evals = 0;
  std::map<std::string, std::size_t> phase_peaks;
  /// Largest checksum drift seen while reconstructing (invertible mode).
  double max_drift = 0.0;
  /// max |x_0| of the reconstructed initial state (invertible mode).
  double initial_state_error = 0.0;

  double max_abs_grad() const;
  double grad_norm() const;
};

/// Scalar training objective: sum_t w_t * loss(eta_t) over a full rollout.
template <typename T>
double rollout_loss(const IRIMModel<T>& model, const ComplexField<T>& data,
                    const FourierOperator<T>& op, const EstimateLoss<T>& loss,
                    const std::vector<double>& weights);

/// Reverse-mode gradient of rollout_loss. Stored mode retains every layer
/// input; invertible mode retains only the final state and reconstructs each
/// layer input with the layer inverse. Throws NumericalError on a non-finite
/// loss or when reconstruction drift exceeds the bound (naming step and layer).
template <typename T>
GradReport<T> backprop(const IRIMModel<T>& model, const ComplexField<T>& data,
                       const FourierOperator<T>& op, const EstimateLoss<T>& loss,
                       const std::vector<double>& weights, BackpropMode mode,
                       const BackpropOptions& opts = {},
                       MemoryMeter* meter = nullptr);

template <typename T>
GradReport<T> backprop_stored(const IRIMModel<T>& model, const ComplexField<T>& data,
                              const FourierOperator<T>& op,
                              const EstimateLoss<T>& loss,
                              const std::vector<double>& weights,
                              const BackpropOptions& opts = {}) {
  return backprop(model, data, op, loss, weights, BackpropMode::kStored, opts);
}

template <typename T>
GradReport<T> backprop_invertible(const IRIMModel<T>& model,
                                  const ComplexField<T>& data,
                                  const FourierOperator<T>& op,
                                  const EstimateLoss<T>& loss,
                                  const std::vector<double>& weights,
                                  const BackpropOptions& opts = {}) {
  return backprop(model, data, op, loss, weights, BackpropMode::kInvertible, opts);
}

struct ParamCoordinate {
  std::size_t layer = 0;  // global layer index
  std::size_t index = 0;  // offset into that layer's parameters
};

/// Draws `count` distinct coordinates uniformly over all parameters.
template <typename T>
std::vector<ParamCoordinate> sample_coordinates(const IRIMModel<T>& model,
                                                std::size_t count,
                                                std::uint64_t seed);

/// Central differences (f(p + h e_i) - f(p - h e_i)) / 2h of rollout_loss.
template <typename T>
std::vector<double> finite_difference_grad(
    IRIMModel<T>& model, const ComplexField<T>& data, const FourierOperator<T>& op,
    const EstimateLoss<T>& loss, const std::vector<double>& weights,
    const std::vector<ParamCoordinate>& coordinates, double h = 1e-6);

/// ||a - b||_inf / (||b||_inf + eps) over all layers.
template <typename T>
double relative_grad_difference(const GradReport<T>& a, const GradReport<T>& b,
                                double eps = 1e-12);

struct MemoryRow {
  std::size_t steps = 0;
  std::size_t layers = 0;
  BackpropMode mode = BackpropMode::kStored;
  std::string phase;  // "testing" (rollout only) or "training"
  std::size_t peak_elements = 0;
  std::size_t layer_evals = 0;
};

struct MemoryProblem {
  std::size_t batch = 1;
  std::size_t height = 16;
  std::size_t width = 16;
  double acceleration = 4.0;
  double center_fraction = 0.08;
  std::uint64_t seed = 0;
};

/// Peak retained elements for every (T, L, mode) in the grid, for rollout
/// only and for a full training step. `base` supplies everything but T, L and
/// the schedule (fanned, capped at base.max_factor()).
template <typename T>
std::vector<MemoryRow> memory_report(
    const ModelConfig& base,
    const std::vector<std::pair<std::size_t, std::size_t>>& grid,
    const std::vector<BackpropMode>& modes, const MemoryProblem& problem);

void write_memory_csv(std::ostream& out, const std::vector<MemoryRow>& rows);

/// Least-squares line y = a + b x with coefficient of determination.
struct LinearFit {
  double intercept = 0.0;
  double slope = 0.0;
  double r_squared = 0.0;
};
LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace irim
