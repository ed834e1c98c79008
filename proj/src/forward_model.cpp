#include "irim/forward_model.hpp"

#include <cmath>
#include <numeric>

#include "irim/fourier.hpp"
#include "irim/rng.hpp"

namespace irim {

SamplingMask::SamplingMask(std::size_t height, std::vector<std::uint8_t> columns,
                           double acceleration, double center_fraction,
                           std::uint64_t seed)
    : height_(height),
      columns_(std::move(columns)),
      acceleration_(acceleration),
      center_fraction_(center_fraction),
      seed_(seed) {
  for (auto& c : columns_) c = c ? 1 : 0;
}

std::size_t SamplingMask::selected_count() const {
  return static_cast<std::size_t>(
      std::accumulate(columns_.begin(), columns_.end(), 0));
}

std::string SamplingMask::to_bits() const {
  std::string bits;
  bits.reserve(columns_.size());
  for (auto c : columns_) bits.push_back(c ? '1' : '0');
  return bits;
}

SamplingMask SamplingMask::from_bits(std::size_t height, const std::string& bits,
                                     double acceleration, double center_fraction,
                                     std::uint64_t seed) {
  std::vector<std::uint8_t> cols;
  cols.reserve(bits.size());
  for (char ch : bits) {
    if (ch != '0' && ch != '1')
      throw IoError("mask bit string contains '" + std::string(1, ch) + "'");
    cols.push_back(ch == '1');
  }
  return SamplingMask(height, std::move(cols), acceleration, center_fraction,
                      seed);
}

SamplingMask SamplingMask::full(std::size_t height, std::size_t width) {
  return SamplingMask(height, std::vector<std::uint8_t>(width, 1), 1.0, 1.0, 0);
}

SamplingMask SamplingMask::empty(std::size_t height, std::size_t width) {
  return SamplingMask(height, std::vector<std::uint8_t>(width, 0), 0.0, 0.0, 0);
}

SamplingMask make_mask(std::size_t height, std::size_t width,
                       double acceleration, double center_fraction,
                       std::uint64_t seed) {
  if (width == 0 || height == 0) throw ConfigError("make_mask: empty grid");
  if (!(acceleration >= 1.0))
    throw ConfigError("make_mask: acceleration must be >= 1");
  if (!(center_fraction > 0.0 && center_fraction < 1.0))
    throw ConfigError("make_mask: center_fraction must lie in (0, 1)");
  if (center_fraction * static_cast<double>(width) < 1.0)
    throw ConfigError("make_mask: center band is narrower than one column");

  const auto center = static_cast<std::size_t>(
      std::lround(center_fraction * static_cast<double>(width)));
  const auto budget = static_cast<std::size_t>(
      std::lround(static_cast<double>(width) / acceleration));
  if (center > budget) {
    throw ConfigError("make_mask: center band of " + std::to_string(center) +
                      " columns exceeds the budget of " +
                      std::to_string(budget) + " columns");
  }

  // The band is laid out as in a centered spectrum, then mapped back to
  // natural order where low frequencies sit next to column 0 and W-1.
  std::vector<std::uint8_t> cols(width, 0);
  const std::size_t band_start = (width - center + 1) / 2;
  for (std::size_t k = band_start; k < band_start + center; ++k)
    cols[(k + width - width / 2) % width] = 1;

  std::vector<std::size_t> candidates;
  for (std::size_t j = 0; j < width; ++j)
    if (!cols[j]) candidates.push_back(j);
  Rng rng(seed);
  // Partial Fisher-Yates: the first `extra` entries become the selection.
  const std::size_t extra = budget - center;
  for (std::size_t i = 0; i < extra; ++i) {
    const std::size_t j = i + rng.below(candidates.size() - i);
    std::swap(candidates[i], candidates[j]);
    cols[candidates[i]] = 1;
  }
  return SamplingMask(height, std::move(cols), acceleration, center_fraction,
                      seed);
}

template <typename T>
FourierOperator<T>::FourierOperator(SamplingMask mask)
    : masks_{std::move(mask)} {}

template <typename T>
FourierOperator<T>::FourierOperator(std::vector<SamplingMask> per_item_masks)
    : masks_(std::move(per_item_masks)) {
  if (masks_.empty()) throw ConfigError("FourierOperator needs a mask");
  for (const auto& m : masks_)
    if (m.height() != masks_.front().height() ||
        m.width() != masks_.front().width())
      throw ShapeError("FourierOperator: per-item masks differ in shape");
}

template <typename T>
void FourierOperator<T>::check(const ComplexField<T>& f, const char* what) const {
  const auto& m = masks_.front();
  if (f.height() != m.height() || f.width() != m.width()) {
    throw ShapeError(std::string(what) + ": field " + shape_string(f.shape()) +
                     " does not match mask " + std::to_string(m.height()) +
                     "x" + std::to_string(m.width()));
  }
  if (masks_.size() != 1 && masks_.size() != f.batch()) {
    throw ShapeError(std::string(what) + ": " + std::to_string(masks_.size()) +
                     " masks for batch of " + std::to_string(f.batch()));
  }
}

template <typename T>
void FourierOperator<T>::apply_mask(ComplexField<T>& k) const {
  check(k, "apply_mask");
  const std::size_t h = k.height(), w = k.width();
  for (std::size_t b = 0; b < k.batch(); ++b) {
    const auto& m = mask_for(b);
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c)
        if (!m.selected(c)) {
          const std::size_t i = (b * h + r) * w + c;
          k.re[i] = T(0);
          k.im[i] = T(0);
        }
  }
}

template <typename T>
ComplexField<T> FourierOperator<T>::apply_forward(const ComplexField<T>& x) const {
  check(x, "apply_forward");
  auto k = dft2(x);
  apply_mask(k);
  return k;
}

template <typename T>
ComplexField<T> FourierOperator<T>::apply_adjoint(const ComplexField<T>& d) const {
  check(d, "apply_adjoint");
  auto masked = d;
  apply_mask(masked);
  return idft2(masked);
}

template <typename T>
ComplexField<T> FourierOperator<T>::apply_normal(const ComplexField<T>& v) const {
  return idft2(apply_forward(v));
}

template <typename T>
ComplexField<T> simulate_measurement(const ComplexField<T>& image,
                                     const FourierOperator<T>& op,
                                     double noise_std, std::uint64_t seed) {
  auto d = op.apply_forward(image);
  if (noise_std == 0.0) return d;
  if (noise_std < 0.0) throw ConfigError("noise_std must be non-negative");
  ComplexField<T> noise = ComplexField<T>::zeros(d.batch(), d.height(), d.width());
  Rng rng(seed);
  for (std::size_t i = 0; i < noise.re.size(); ++i) {
    noise.re[i] = static_cast<T>(rng.gaussian(0.0, noise_std));
    noise.im[i] = static_cast<T>(rng.gaussian(0.0, noise_std));
  }
  op.apply_mask(noise);
  d += noise;
  return d;
}

template <typename T>
ComplexField<T> data_consistency_grad(const FourierOperator<T>& op,
                                      const ComplexField<T>& data,
                                      const ComplexField<T>& estimate) {
  if (data.shape() != estimate.shape())
    throw ShapeError("data_consistency_grad: data " +
                     shape_string(data.shape()) + " vs estimate " +
                     shape_string(estimate.shape()));
  auto residual = op.apply_forward(estimate);
  residual -= data;
  return op.apply_adjoint(residual);
}

template <typename T>
T data_consistency(const FourierOperator<T>& op, const ComplexField<T>& data,
                   const ComplexField<T>& estimate) {
  auto residual = op.apply_forward(estimate);
  residual -= data;
  return T(0.5) * squared_norm(residual);
}

template <typename T>
ComplexField<T> dc_grad_vjp(const FourierOperator<T>& op,
                            const ComplexField<T>& v) {
  return op.apply_normal(v);
}

#define IRIM_INSTANTIATE(T)                                                     \
  template class FourierOperator<T>;                                            \
  template ComplexField<T> simulate_measurement(                                \
      const ComplexField<T>&, const FourierOperator<T>&, double, std::uint64_t); \
  template ComplexField<T> data_consistency_grad(                               \
      const FourierOperator<T>&, const ComplexField<T>&, const ComplexField<T>&); \
  template T data_consistency(const FourierOperator<T>&, const ComplexField<T>&, \
                              const ComplexField<T>&);                          \
  template ComplexField<T> dc_grad_vjp(const FourierOperator<T>&,               \
                                       const ComplexField<T>&);

IRIM_INSTANTIATE(float)
IRIM_INSTANTIATE(double)
#undef IRIM_INSTANTIATE

}  // namespace irim
