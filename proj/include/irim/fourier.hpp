#pragma once

#include "irim/tensor.hpp"

namespace irim {

/// Unitary 2D DFT over the last two axes (1/sqrt(HW) normalization), applied
/// independently to each batch element. Direct separable evaluation, which is
/// O(HW(H+W)) and intended for images up to roughly 64x64.
template <typename T>
ComplexField<T> dft2(const ComplexField<T>& x);

/// Inverse of dft2; also its adjoint since the transform is unitary.
template <typename T>
ComplexField<T> idft2(const ComplexField<T>& y);

}  // namespace irim
