#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "irim/memory_meter.hpp"
#include "irim/params.hpp"
#include "irim/rng.hpp"
#include "irim/tensor.hpp"

namespace irim {

/// kernel = scale[o] * direction[o] / ||direction[o]|| for every slice o along
/// axis 0, the norm taken over all remaining axes. A zero slice yields a zero
/// kernel slice.
template <typename T>
Tensor<T> weight_norm(const Tensor<T>& direction, std::span<const T> scale);

/// Backward of weight_norm. Accumulates into grad_direction / grad_scale.
template <typename T>
void weight_norm_backward(const Tensor<T>& direction, std::span<const T> scale,
                          const Tensor<T>& grad_kernel,
                          std::span<T> grad_direction, std::span<T> grad_scale);

/// Gated linear unit over channels: a * sigmoid(b) where a and b are the first
/// and second half of the channels.
template <typename T>
Tensor<T> glu(const Tensor<T>& x);

template <typename T>
Tensor<T> glu_backward(const Tensor<T>& x, const Tensor<T>& grad_out);

struct ResidualBlockConfig {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t hidden = 0;
  std::size_t factor = 1;  // spatial downsampling d
};

/// The residual function G of a coupling layer:
///
///   d x d conv, stride d (+bias) -> ReLU -> 3x3 conv (+bias) -> ReLU
///   -> d x d transposed conv, stride d, no bias -> GLU
///
/// All three kernels are weight-normalized. The transposed conv emits
/// 2 * out_channels so that the GLU returns out_channels. Parameters live in
/// a caller-owned flat span laid out by segments().
template <typename T>
class ResidualBlockG {
 public:
  explicit ResidualBlockG(ResidualBlockConfig cfg);

  const ResidualBlockConfig& config() const { return cfg_; }
  const std::vector<ParamSegment>& segments() const { return layout_; }
  std::size_t parameter_count() const { return layout_size(layout_); }

  /// Directions ~ N(0, 1/fan_in), scales 1, biases 0.
  void initialize(std::span<T> params, Rng& rng) const;

  Tensor<T> forward(std::span<const T> params, const Tensor<T>& x,
                    MemoryMeter* meter = nullptr) const;

  struct Backward {
    Tensor<T> output;      // G(x), recomputed on the way
    Tensor<T> grad_input;  // d<grad_out, G(x)>/dx
  };
  /// Recomputes the internal activations from x and back-propagates
  /// grad_out. Parameter gradients are accumulated into grad_params.
  Backward backward(std::span<const T> params, const Tensor<T>& x,
                    const Tensor<T>& grad_out, std::span<T> grad_params,
                    MemoryMeter* meter = nullptr) const;

  /// Throws ShapeError unless x matches the block's contract.
  void check_input(const Tensor<T>& x) const;

 private:
  struct Kernels {
    Tensor<T> k1, k2, k3;
  };
  Kernels kernels(std::span<const T> params) const;
  Tensor<T> segment_tensor(std::span<const T> params, std::size_t seg) const;

  ResidualBlockConfig cfg_;
  std::vector<ParamSegment> layout_;
  std::size_t dir1_, scale1_, bias1_, dir2_, scale2_, bias2_, dir3_, scale3_;
};

}  // namespace irim
