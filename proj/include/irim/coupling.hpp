#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "irim/householder.hpp"
#include "irim/memory_meter.hpp"
#include "irim/params.hpp"
#include "irim/residual_block.hpp"
#include "irim/rng.hpp"
#include "irim/tensor.hpp"

namespace irim {

struct CouplingConfig {
  std::size_t channels = 16;
  std::size_t split = 8;        // channels [0, split) condition the rest
  std::size_t reflections = 3;  // Householder vectors D
  std::size_t hidden = 16;      // hidden width k of G
  std::size_t factor = 1;       // downsampling d of G
};

/// Additive coupling layer with an orthogonal 1x1 embedding:
///
///   x' = U x;  y'_1 = x'_1;  y'_2 = x'_2 + G(x'_1);  y = U^T y'
///
/// U is parametrized by a Householder stack, so it stays orthogonal for any
/// parameter values. The layer owns one flat parameter vector: the reflection
/// vectors first, then the parameters of G.
template <typename T>
class AdditiveCouplingLayer {
 public:
  explicit AdditiveCouplingLayer(CouplingConfig cfg);

  const CouplingConfig& config() const { return cfg_; }
  const ResidualBlockG<T>& block() const { return block_; }

  std::span<T> params() { return params_; }
  std::span<const T> params() const { return params_; }
  std::size_t parameter_count() const { return params_.size(); }
  /// Segment names are prefixed "householder." and "g.".
  const std::vector<ParamSegment>& segments() const { return layout_; }

  void initialize(Rng& rng);
  /// Zero residual parameters: G == 0 and the layer is the identity.
  void zero_residual();

  HouseholderStack<T> householder() const;
  Tensor<T> orthogonal() const { return build_orthogonal(householder()); }

  Tensor<T> forward(const Tensor<T>& x, MemoryMeter* meter = nullptr) const;
  Tensor<T> inverse(const Tensor<T>& y, MemoryMeter* meter = nullptr) const;

  /// Reverse-mode rule at input x: returns the input cotangent and
  /// accumulates parameter cotangents into grad_params. Only this layer's
  /// internal activations are recomputed.
  Tensor<T> vjp(const Tensor<T>& x, const Tensor<T>& upstream,
                std::span<T> grad_params, MemoryMeter* meter = nullptr) const;

 private:
  std::span<const T> block_params() const {
    return std::span<const T>(params_).subspan(block_offset_);
  }
  void check(const Tensor<T>& x, const char* what) const;

  CouplingConfig cfg_;
  ResidualBlockG<T> block_;
  std::vector<ParamSegment> layout_;
  std::size_t block_offset_ = 0;
  std::vector<T> params_;
};

/// Affine (real-NVP style) coupling in the same orthogonal embedding as the
/// additive layer, kept for the numerical stability comparison:
///
///   x' = U x;  y'_1 = x'_1;  y'_2 = x'_2 * exp(clamp(F(x'_1))) + G(x'_1);  y = U^T y'
///
/// F and G are residual blocks of identical shape; the log-scale is clamped
/// to [-kLogScaleClamp, kLogScaleClamp]. With F == 0 the layer computes
/// exactly what AdditiveCouplingLayer computes for the same U and G; with
/// reflections = 0 (U = I) it is the plain real-NVP layer. Parameters are
/// laid out as reflection vectors, then G, then F, and initialize() draws
/// them in that order, so an affine and an additive layer initialized from
/// equal generators share U and G.
template <typename T>
class AffineCouplingLayer {
 public:
  static constexpr double kLogScaleClamp = 5.0;

  explicit AffineCouplingLayer(CouplingConfig cfg);

  const CouplingConfig& config() const { return cfg_; }
  std::span<T> params() { return params_; }
  std::span<const T> params() const { return params_; }

  void initialize(Rng& rng);
  /// Sets the scale network output to a constant log-scale (tests).
  void set_constant_log_scale(T value);
  void zero_scale();
  void zero_shift();

  Tensor<T> forward(const Tensor<T>& x) const;
  Tensor<T> inverse(const Tensor<T>& y) const;

 private:
  Tensor<T> log_scale(const Tensor<T>& x1) const;
  Tensor<T> shift(const Tensor<T>& x1) const;
  Tensor<T> orthogonal() const;

  CouplingConfig cfg_;
  ResidualBlockG<T> block_;
  std::size_t hh_size_ = 0;
  std::vector<T> params_;  // reflections, then G, then F
  bool constant_scale_ = false;
  T constant_value_ = 0;
};

}  // namespace irim
