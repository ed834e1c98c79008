#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "irim/rng.hpp"
#include "irim/tensor.hpp"

namespace irim {

/// Norm below which a reflection vector is treated as degenerate.
inline constexpr double kHouseholderEpsilon = 1e-12;

/// D reflection vectors of length C, stored row after row. The orthogonal
/// matrix they parametrize is U = H_D ... H_1 with
/// H_k = I - 2 v_k v_k^T / ||v_k||^2.
template <typename T>
struct HouseholderStack {
  std::size_t channels = 0;
  std::vector<T> vectors;  // count() * channels values

  std::size_t count() const { return channels ? vectors.size() / channels : 0; }
  std::span<const T> vector(std::size_t k) const {
    return std::span<const T>(vectors).subspan(k * channels, channels);
  }

  /// i.i.d. standard Gaussian entries; degenerate draws are redrawn.
  static HouseholderStack random(std::size_t channels, std::size_t count,
                                 Rng& rng);
};

/// Fills `vectors` (count * channels) with standard Gaussian draws,
/// redrawing any vector whose norm falls below kHouseholderEpsilon.
template <typename T>
void init_householder_vectors(std::span<T> vectors, std::size_t channels,
                              Rng& rng);

/// C x C orthogonal matrix (row-major). Throws NumericalError naming the
/// reflection index when a vector is degenerate.
template <typename T>
Tensor<T> build_orthogonal(const HouseholderStack<T>& hs);

/// Gradient of <dU, U(v_1..v_D)> with respect to the reflection vectors.
template <typename T>
std::vector<T> householder_backward(const HouseholderStack<T>& hs,
                                    const Tensor<T>& grad_u);

/// Per-pixel channel mixing y[n, :, i, j] = U x[n, :, i, j].
template <typename T>
Tensor<T> orth_conv(const Tensor<T>& u, const Tensor<T>& x);

/// Inverse of orth_conv, applying U^T.
template <typename T>
Tensor<T> orth_conv_inverse(const Tensor<T>& u, const Tensor<T>& y);

/// Accumulates sum over batch and pixels of a[:, p] b[:, p]^T into `out`
/// (C x C). This is the gradient of <a, M b> with respect to M.
template <typename T>
void accumulate_channel_outer(const Tensor<T>& a, const Tensor<T>& b,
                              Tensor<T>& out);

/// ||U U^T - I||_F.
template <typename T>
T orthogonality_defect(const Tensor<T>& u);

}  // namespace irim
