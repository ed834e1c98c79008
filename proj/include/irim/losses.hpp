#pragma once

#include <cstdint>
#include <vector>

#include "irim/tensor.hpp"

namespace irim {

/// ||estimate - reference||^2 / ||reference||^2. Throws NumericalError when
/// the reference is identically zero.
template <typename T>
T nmse(const Tensor<T>& estimate, const Tensor<T>& reference);
template <typename T>
T nmse(const ComplexField<T>& estimate, const ComplexField<T>& reference);

/// A differentiable loss on the image estimate of one rollout step.
template <typename T>
class EstimateLoss {
 public:
  virtual ~EstimateLoss() = default;
  virtual T value(const ComplexField<T>& estimate) const = 0;
  virtual ComplexField<T> gradient(const ComplexField<T>& estimate) const = 0;
};

/// NMSE between m * estimate and m * target, with m a per-pixel Bernoulli
/// mask (shared by real and imaginary parts, drawn once per instance from
/// `seed`). Averaged over batch items. keep_fraction = 1 reproduces nmse
/// exactly for each item.
template <typename T>
class MaskedNmseLoss final : public EstimateLoss<T> {
 public:
  static constexpr int kMaxResample = 100;

  MaskedNmseLoss(ComplexField<T> target, double keep_fraction,
                 std::uint64_t seed);

  T value(const ComplexField<T>& estimate) const override;
  ComplexField<T> gradient(const ComplexField<T>& estimate) const override;

  const std::vector<std::uint8_t>& mask() const { return mask_; }
  const ComplexField<T>& target() const { return target_; }

 private:
  ComplexField<T> target_;
  std::vector<std::uint8_t> mask_;   // one entry per pixel of re
  std::vector<double> target_norm_;  // masked ||target||^2 per item
};

template <typename T>
T masked_nmse_loss(const ComplexField<T>& estimate,
                   const ComplexField<T>& target, double keep_fraction,
                   std::uint64_t seed) {
  return MaskedNmseLoss<T>(target, keep_fraction, seed).value(estimate);
}

/// Step weights w_1..w_T for a rollout of `steps`: all weight on the last
/// step (i-RIM default) or uniform averaging (RIM-style).
std::vector<double> last_step_weights(std::size_t steps);
std::vector<double> uniform_weights(std::size_t steps);
void validate_weights(const std::vector<double>& weights);

/// sum_t w_t * loss(trajectory[t]); trajectory holds the estimates
/// eta_1..eta_T.
template <typename T>
T weighted_multistep_loss(const std::vector<ComplexField<T>>& trajectory,
                          const std::vector<double>& weights,
                          const EstimateLoss<T>& loss);

}  // namespace irim
