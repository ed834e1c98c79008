#pragma once

#include <cstddef>

#include "irim/tensor.hpp"

namespace irim {

/// Symmetric zero padding applied to both spatial borders.
struct Padding {
  std::size_t rows = 0;
  std::size_t cols = 0;

  static Padding none() { return {}; }
  static Padding uniform(std::size_t p) { return {p, p}; }
  /// Padding that keeps the spatial extent for odd kernels at stride 1.
  static Padding same(std::size_t kernel) {
    return {kernel / 2, kernel / 2};
  }
};

/// Cross-correlation of x [N, Ci, H, W] with kernel [Co, Ci, kh, kw].
/// Output extent is floor((in + 2 pad - k) / stride) + 1.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel,
                 std::size_t stride, Padding pad);

/// Adjoint of conv2d with the same kernel, stride and padding: maps
/// y [N, Co, Ho, Wo] to [N, Ci, H, W]. When out_h/out_w are zero the
/// output extent is (in - 1) * stride - 2 pad + k.
template <typename T>
Tensor<T> conv2d_transpose(const Tensor<T>& y, const Tensor<T>& kernel,
                           std::size_t stride, Padding pad,
                           std::size_t out_h = 0, std::size_t out_w = 0);

/// Gradient of <conv2d(x, K), upstream> with respect to K, for a kernel of
/// spatial size kh x kw. Output shape [Co, Ci, kh, kw].
template <typename T>
Tensor<T> conv2d_kernel_grad(const Tensor<T>& x, const Tensor<T>& upstream,
                             std::size_t kh, std::size_t kw,
                             std::size_t stride, Padding pad);

/// Adds bias[c] to every pixel of channel c.
template <typename T>
void add_channel_bias(Tensor<T>& x, std::span<const T> bias);

/// Sum over batch and pixels per channel (the bias gradient).
template <typename T>
std::vector<T> channel_sums(const Tensor<T>& x);

}  // namespace irim
