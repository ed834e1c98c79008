#pragma once

// Test-only reference implementations. Nothing here calls into the library
// code paths that the tests check.

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <vector>

#include "irim/rng.hpp"
#include "irim/tensor.hpp"

namespace irim::testing {

inline RealTensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  RealTensor t(std::move(shape));
  for (auto& v : t.storage()) v = scale * rng.gaussian();
  return t;
}

inline ComplexField<double> random_field(std::size_t n, std::size_t h,
                                         std::size_t w, Rng& rng) {
  return {random_tensor({n, 1, h, w}, rng), random_tensor({n, 1, h, w}, rng)};
}

// Six nested loops over the definition of cross-correlation.
inline RealTensor loop_conv2d(const RealTensor& x, const RealTensor& k,
                              std::size_t stride, std::size_t pad) {
  const std::size_t n = x.extent(0), ci = x.extent(1), h = x.extent(2),
                    w = x.extent(3);
  const std::size_t co = k.extent(0), kh = k.extent(2), kw = k.extent(3);
  const std::size_t ho = (h + 2 * pad - kh) / stride + 1;
  const std::size_t wo = (w + 2 * pad - kw) / stride + 1;
  RealTensor y({n, co, ho, wo});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t p = 0; p < ho; ++p)
        for (std::size_t q = 0; q < wo; ++q) {
          double acc = 0.0;
          for (std::size_t i = 0; i < ci; ++i)
            for (std::size_t a = 0; a < kh; ++a)
              for (std::size_t c = 0; c < kw; ++c) {
                const long ih = long(p * stride + a) - long(pad);
                const long iw = long(q * stride + c) - long(pad);
                if (ih < 0 || iw < 0 || ih >= long(h) || iw >= long(w)) continue;
                acc += k.at(o, i, a, c) * x.at(b, i, ih, iw);
              }
          y.at(b, o, p, q) = acc;
        }
  return y;
}

// Scatter form of the transposed convolution.
inline RealTensor loop_conv2d_transpose(const RealTensor& y, const RealTensor& k,
                                        std::size_t stride, std::size_t pad,
                                        std::size_t h, std::size_t w) {
  const std::size_t n = y.extent(0), co = k.extent(0), ci = k.extent(1);
  const std::size_t kh = k.extent(2), kw = k.extent(3);
  RealTensor x({n, ci, h, w});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t p = 0; p < y.extent(2); ++p)
        for (std::size_t q = 0; q < y.extent(3); ++q)
          for (std::size_t i = 0; i < ci; ++i)
            for (std::size_t a = 0; a < kh; ++a)
              for (std::size_t c = 0; c < kw; ++c) {
                const long ih = long(p * stride + a) - long(pad);
                const long iw = long(q * stride + c) - long(pad);
                if (ih < 0 || iw < 0 || ih >= long(h) || iw >= long(w)) continue;
                x.at(b, i, ih, iw) += k.at(o, i, a, c) * y.at(b, o, p, q);
              }
  return x;
}

// Unnormalized-then-scaled O((HW)^2) DFT straight from the definition.
inline ComplexField<double> naive_dft2(const ComplexField<double>& x, double sign) {
  const std::size_t n = x.batch(), h = x.height(), w = x.width();
  auto out = ComplexField<double>::zeros(n, h, w);
  const double scale = 1.0 / std::sqrt(double(h * w));
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t u = 0; u < h; ++u)
      for (std::size_t v = 0; v < w; ++v) {
        std::complex<double> acc = 0.0;
        for (std::size_t r = 0; r < h; ++r)
          for (std::size_t c = 0; c < w; ++c) {
            const double ph = sign * 2.0 * std::numbers::pi *
                              (double(u * r) / double(h) + double(v * c) / double(w));
            const std::size_t i = (b * h + r) * w + c;
            acc += std::complex<double>(x.re[i], x.im[i]) *
                   std::polar(1.0, ph);
          }
        const std::size_t o = (b * h + u) * w + v;
        out.re[o] = scale * acc.real();
        out.im[o] = scale * acc.imag();
      }
  return out;
}

// Central difference of f along direction `dir` in a flat parameter vector.
inline double central_difference(const std::function<double()>& f,
                                 double& coordinate, double h) {
  const double saved = coordinate;
  coordinate = saved + h;
  const double fp = f();
  coordinate = saved - h;
  const double fm = f();
  coordinate = saved;
  return (fp - fm) / (2.0 * h);
}

inline double relative_error(double a, double b, double floor = 1e-12) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace irim::testing
