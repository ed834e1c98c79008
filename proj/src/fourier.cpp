#include "irim/fourier.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

namespace irim {
namespace {

// Twiddle table w[j * n + k] = exp(sign * 2 pi i jk / n) / sqrt(n).
std::vector<std::complex<double>> twiddles(std::size_t n, double sign) {
  std::vector<std::complex<double>> w(n * n);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t k = 0; k < n; ++k) {
      // Reduce jk mod n first so large products keep full phase precision.
      const double phase = sign * 2.0 * std::numbers::pi *
                           static_cast<double>((j * k) % n) /
                           static_cast<double>(n);
      w[j * n + k] = std::polar(scale, phase);
    }
  return w;
}

template <typename T>
ComplexField<T> transform(const ComplexField<T>& x, double sign) {
  const std::size_t n = x.batch(), h = x.height(), w = x.width();
  const auto tw_w = twiddles(w, sign);
  const auto tw_h = twiddles(h, sign);
  ComplexField<T> out = ComplexField<T>::zeros(n, h, w);
  std::vector<std::complex<double>> buf(h * w), rowpass(h * w);
  for (std::size_t b = 0; b < n; ++b) {
    const std::size_t off = b * h * w;
    for (std::size_t i = 0; i < h * w; ++i)
      buf[i] = {static_cast<double>(x.re[off + i]),
                static_cast<double>(x.im[off + i])};
    // Along rows (width axis).
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t k = 0; k < w; ++k) {
        std::complex<double> acc = 0.0;
        const auto* row = &buf[r * w];
        const auto* tw = &tw_w[k * w];
        for (std::size_t j = 0; j < w; ++j) acc += row[j] * tw[j];
        rowpass[r * w + k] = acc;
      }
    // Along columns (height axis).
    for (std::size_t k = 0; k < h; ++k)
      for (std::size_t c = 0; c < w; ++c) {
        std::complex<double> acc = 0.0;
        const auto* tw = &tw_h[k * h];
        for (std::size_t j = 0; j < h; ++j) acc += rowpass[j * w + c] * tw[j];
        out.re[off + k * w + c] = static_cast<T>(acc.real());
        out.im[off + k * w + c] = static_cast<T>(acc.imag());
      }
  }
  return out;
}

}  // namespace

template <typename T>
ComplexField<T> dft2(const ComplexField<T>& x) {
  return transform(x, -1.0);
}

template <typename T>
ComplexField<T> idft2(const ComplexField<T>& y) {
  return transform(y, +1.0);
}

template ComplexField<float> dft2(const ComplexField<float>&);
template ComplexField<double> dft2(const ComplexField<double>&);
template ComplexField<float> idft2(const ComplexField<float>&);
template ComplexField<double> idft2(const ComplexField<double>&);

}  // namespace irim
