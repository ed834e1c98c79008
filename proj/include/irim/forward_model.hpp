#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "irim/tensor.hpp"

namespace irim {

/// Cartesian column-line k-space mask. Selection is stored per column in
/// natural DFT order (column 0 is the DC frequency), and every row of a
/// selected column is sampled.
class SamplingMask {
 public:
  SamplingMask() = default;
  SamplingMask(std::size_t height, std::vector<std::uint8_t> columns,
               double acceleration, double center_fraction, std::uint64_t seed);

  std::size_t height() const { return height_; }
  std::size_t width() const { return columns_.size(); }
  double acceleration() const { return acceleration_; }
  double center_fraction() const { return center_fraction_; }
  std::uint64_t seed() const { return seed_; }

  bool selected(std::size_t column) const { return columns_.at(column) != 0; }
  const std::vector<std::uint8_t>& columns() const { return columns_; }
  std::size_t selected_count() const;

  /// '0'/'1' per column in natural order.
  std::string to_bits() const;
  static SamplingMask from_bits(std::size_t height, const std::string& bits,
                                double acceleration, double center_fraction,
                                std::uint64_t seed);

  /// Fully sampled or empty masks, mainly for tests.
  static SamplingMask full(std::size_t height, std::size_t width);
  static SamplingMask empty(std::size_t height, std::size_t width);

  bool operator==(const SamplingMask&) const = default;

 private:
  std::size_t height_ = 0;
  std::vector<std::uint8_t> columns_;
  double acceleration_ = 1.0;
  double center_fraction_ = 0.0;
  std::uint64_t seed_ = 0;
};

/// Builds a mask with a fully sampled band of round(center_fraction * W)
/// low-frequency columns plus uniformly chosen extra columns until
/// round(W / acceleration) columns are selected.
SamplingMask make_mask(std::size_t height, std::size_t width,
                       double acceleration, double center_fraction,
                       std::uint64_t seed);

/// A = P F: unitary 2D DFT followed by column subsampling. Holds either one
/// mask shared by the whole batch or one mask per batch element.
template <typename T>
class FourierOperator {
 public:
  explicit FourierOperator(SamplingMask mask);
  explicit FourierOperator(std::vector<SamplingMask> per_item_masks);

  const std::vector<SamplingMask>& masks() const { return masks_; }

  ComplexField<T> apply_forward(const ComplexField<T>& image) const;
  ComplexField<T> apply_adjoint(const ComplexField<T>& data) const;
  /// A^H A v.
  ComplexField<T> apply_normal(const ComplexField<T>& v) const;

  /// Zeroes the unsampled k-space entries in place.
  void apply_mask(ComplexField<T>& kspace) const;

 private:
  void check(const ComplexField<T>& f, const char* what) const;
  const SamplingMask& mask_for(std::size_t item) const {
    return masks_.size() == 1 ? masks_.front() : masks_[item];
  }

  std::vector<SamplingMask> masks_;
};

/// d = A eta + mask * n with n complex Gaussian, std noise_std per component.
template <typename T>
ComplexField<T> simulate_measurement(const ComplexField<T>& image,
                                     const FourierOperator<T>& op,
                                     double noise_std, std::uint64_t seed);

/// Gradient of D(d, A eta) = 0.5 ||d - A eta||^2 with respect to eta:
/// A^H (A eta - d).
template <typename T>
ComplexField<T> data_consistency_grad(const FourierOperator<T>& op,
                                      const ComplexField<T>& data,
                                      const ComplexField<T>& estimate);

/// D(d, A eta) itself; used by finite-difference checks.
template <typename T>
T data_consistency(const FourierOperator<T>& op, const ComplexField<T>& data,
                   const ComplexField<T>& estimate);

/// Jacobian of data_consistency_grad applied to v, i.e. A^H A v. The
/// Jacobian is symmetric, so this is also its vector-Jacobian product.
template <typename T>
ComplexField<T> dc_grad_vjp(const FourierOperator<T>& op,
                            const ComplexField<T>& v);

}  // namespace irim
