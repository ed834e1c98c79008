#include "irim/losses.hpp"

#include <algorithm>
#include <numeric>

#include "irim/rng.hpp"

namespace irim {

template <typename T>
T nmse(const Tensor<T>& estimate, const Tensor<T>& reference) {
  estimate.require_same_shape(reference, "nmse");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double r = reference[i], e = double(estimate[i]) - r;
    num += e * e;
    den += r * r;
  }
  if (den == 0.0) throw NumericalError("nmse: reference has zero norm");
  return static_cast<T>(num / den);
}

template <typename T>
T nmse(const ComplexField<T>& estimate, const ComplexField<T>& reference) {
  estimate.re.require_same_shape(reference.re, "nmse");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < reference.re.size(); ++i) {
    const double rr = reference.re[i], ri = reference.im[i];
    const double er = double(estimate.re[i]) - rr, ei = double(estimate.im[i]) - ri;
    num += er * er + ei * ei;
    den += rr * rr + ri * ri;
  }
  if (den == 0.0) throw NumericalError("nmse: reference has zero norm");
  return static_cast<T>(num / den);
}

template <typename T>
MaskedNmseLoss<T>::MaskedNmseLoss(ComplexField<T> target, double keep_fraction,
                                  std::uint64_t seed)
    : target_(std::move(target)) {
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0))
    throw ConfigError("keep_fraction must lie in (0, 1]");
  const std::size_t n = target_.batch();
  const std::size_t plane = target_.height() * target_.width();
  mask_.assign(n * plane, 0);
  target_norm_.assign(n, 0.0);
  Rng rng(seed);
  for (std::size_t b = 0; b < n; ++b) {
    bool ok = false;
    for (int attempt = 0; attempt < kMaxResample && !ok; ++attempt) {
      double norm = 0.0;
      for (std::size_t i = 0; i < plane; ++i) {
        const std::size_t k = b * plane + i;
        mask_[k] = rng.uniform() < keep_fraction;
        if (mask_[k]) {
          const double r = target_.re[k], m = target_.im[k];
          norm += r * r + m * m;
        }
      }
      target_norm_[b] = norm;
      ok = norm > 0.0;
    }
    if (!ok)
      throw NumericalError("masked_nmse_loss: masked target of item " +
                           std::to_string(b) + " stayed zero after " +
                           std::to_string(kMaxResample) + " draws");
  }
}

template <typename T>
T MaskedNmseLoss<T>::value(const ComplexField<T>& estimate) const {
  estimate.re.require_same_shape(target_.re, "masked_nmse_loss");
  const std::size_t n = target_.batch();
  const std::size_t plane = target_.height() * target_.width();
  double total = 0.0;
  for (std::size_t b = 0; b < n; ++b) {
    double num = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t k = b * plane + i;
      if (!mask_[k]) continue;
      const double er = double(estimate.re[k]) - double(target_.re[k]);
      const double ei = double(estimate.im[k]) - double(target_.im[k]);
      num += er * er + ei * ei;
    }
    total += num / target_norm_[b];
  }
  return static_cast<T>(total / static_cast<double>(n));
}

template <typename T>
ComplexField<T> MaskedNmseLoss<T>::gradient(const ComplexField<T>& estimate) const {
  estimate.re.require_same_shape(target_.re, "masked_nmse_loss");
  const std::size_t n = target_.batch();
  const std::size_t plane = target_.height() * target_.width();
  auto g = ComplexField<T>::zeros(n, target_.height(), target_.width());
  for (std::size_t b = 0; b < n; ++b) {
    const double f = 2.0 / (target_norm_[b] * static_cast<double>(n));
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t k = b * plane + i;
      if (!mask_[k]) continue;
      g.re[k] = static_cast<T>(f * (double(estimate.re[k]) - double(target_.re[k])));
      g.im[k] = static_cast<T>(f * (double(estimate.im[k]) - double(target_.im[k])));
    }
  }
  return g;
}

std::vector<double> last_step_weights(std::size_t steps) {
  std::vector<double> w(steps, 0.0);
  if (steps) w.back() = 1.0;
  return w;
}

std::vector<double> uniform_weights(std::size_t steps) {
  return std::vector<double>(steps, steps ? 1.0 / double(steps) : 0.0);
}

void validate_weights(const std::vector<double>& weights) {
  if (weights.empty()) throw ConfigError("step weights are empty");
  if (std::any_of(weights.begin(), weights.end(), [](double w) { return !(w >= 0.0); }))
    throw ConfigError("step weights must be non-negative");
  if (std::accumulate(weights.begin(), weights.end(), 0.0) == 0.0)
    throw ConfigError("step weights are all zero");
}

template <typename T>
T weighted_multistep_loss(const std::vector<ComplexField<T>>& trajectory,
                          const std::vector<double>& weights,
                          const EstimateLoss<T>& loss) {
  validate_weights(weights);
  if (weights.size() != trajectory.size())
    throw ShapeError("weighted_multistep_loss: " + std::to_string(weights.size()) +
                     " weights for " + std::to_string(trajectory.size()) + " steps");
  double total = 0.0;
  for (std::size_t t = 0; t < trajectory.size(); ++t)
    if (weights[t] != 0.0) total += weights[t] * double(loss.value(trajectory[t]));
  return static_cast<T>(total);
}

#define IRIM_INSTANTIATE(T)                                                 \
  template T nmse(const Tensor<T>&, const Tensor<T>&);                      \
  template T nmse(const ComplexField<T>&, const ComplexField<T>&);          \
  template class MaskedNmseLoss<T>;                                         \
  template T weighted_multistep_loss(const std::vector<ComplexField<T>>&,   \
                                     const std::vector<double>&,            \
                                     const EstimateLoss<T>&);

IRIM_INSTANTIATE(float)
IRIM_INSTANTIATE(double)
#undef IRIM_INSTANTIATE

}  // namespace irim
