#include "irim/coupling.hpp"

#include <algorithm>
#include <cmath>

namespace irim {
namespace {

ResidualBlockConfig block_config(const CouplingConfig& cfg) {
  if (cfg.split == 0 || cfg.split >= cfg.channels)
    throw ConfigError("coupling split " + std::to_string(cfg.split) +
                      " must lie in (0, " + std::to_string(cfg.channels) + ")");
  return {cfg.split, cfg.channels - cfg.split, cfg.hidden, cfg.factor};
}

}  // namespace

template <typename T>
AdditiveCouplingLayer<T>::AdditiveCouplingLayer(CouplingConfig cfg)
    : cfg_(cfg), block_(block_config(cfg)) {
  if (cfg.reflections > 0)
    add_segment(layout_, "householder.v", {cfg.reflections, cfg.channels});
  block_offset_ = layout_size(layout_);
  for (const auto& s : block_.segments())
    layout_.push_back({"g." + s.name, block_offset_ + s.offset, s.shape});
  params_.assign(layout_size(layout_), T(0));
}

template <typename T>
void AdditiveCouplingLayer<T>::initialize(Rng& rng) {
  init_householder_vectors(std::span<T>(params_).first(block_offset_),
                           cfg_.channels, rng);
  block_.initialize(std::span<T>(params_).subspan(block_offset_), rng);
}

template <typename T>
void AdditiveCouplingLayer<T>::zero_residual() {
  std::fill(params_.begin() + static_cast<std::ptrdiff_t>(block_offset_),
            params_.end(), T(0));
}

template <typename T>
HouseholderStack<T> AdditiveCouplingLayer<T>::householder() const {
  return {cfg_.channels,
          std::vector<T>(params_.begin(),
                         params_.begin() +
                             static_cast<std::ptrdiff_t>(block_offset_))};
}

template <typename T>
void AdditiveCouplingLayer<T>::check(const Tensor<T>& x, const char* what) const {
  if (x.rank() != 4 || x.extent(1) != cfg_.channels)
    throw ShapeError(std::string(what) + ": expected " +
                     std::to_string(cfg_.channels) + " channels, got " +
                     shape_string(x.shape()));
}

template <typename T>
Tensor<T> AdditiveCouplingLayer<T>::forward(const Tensor<T>& x,
                                            MemoryMeter* meter) const {
  check(x, "coupling_forward");
  if (meter) meter->count_layer_eval();
  const Tensor<T> u = orthogonal();
  Tensor<T> xp = orth_conv(u, x);
  MemoryMeter::Hold hold(meter, xp.size());
  const Tensor<T> x1 = slice_channels(xp, 0, cfg_.split);
  Tensor<T> y2 = slice_channels(xp, cfg_.split, cfg_.channels);
  y2 += block_.forward(block_params(), x1, meter);
  assign_channels(xp, cfg_.split, y2);
  return orth_conv_inverse(u, xp);
}

template <typename T>
Tensor<T> AdditiveCouplingLayer<T>::inverse(const Tensor<T>& y,
                                            MemoryMeter* meter) const {
  check(y, "coupling_inverse");
  if (meter) meter->count_layer_eval();
  const Tensor<T> u = orthogonal();
  Tensor<T> yp = orth_conv(u, y);
  MemoryMeter::Hold hold(meter, yp.size());
  const Tensor<T> y1 = slice_channels(yp, 0, cfg_.split);
  Tensor<T> x2 = slice_channels(yp, cfg_.split, cfg_.channels);
  x2 -= block_.forward(block_params(), y1, meter);
  assign_channels(yp, cfg_.split, x2);
  return orth_conv_inverse(u, yp);
}

template <typename T>
Tensor<T> AdditiveCouplingLayer<T>::vjp(const Tensor<T>& x,
                                        const Tensor<T>& upstream,
                                        std::span<T> grad_params,
                                        MemoryMeter* meter) const {
  check(x, "coupling_vjp");
  x.require_same_shape(upstream, "coupling_vjp");
  if (grad_params.size() != params_.size())
    throw ShapeError("coupling_vjp: gradient span has " +
                     std::to_string(grad_params.size()) + " entries, layer has " +
                     std::to_string(params_.size()));
  if (meter) meter->count_layer_eval();
  const auto hs = householder();
  const Tensor<T> u = build_orthogonal(hs);
  const std::size_t c = cfg_.channels, s = cfg_.split;

  Tensor<T> xp = orth_conv(u, x);
  Tensor<T> gyp = orth_conv(u, upstream);  // cotangent of y' = U^T-adjoint
  MemoryMeter::Hold hold(meter, xp.size() + gyp.size());

  const Tensor<T> x1 = slice_channels(xp, 0, s);
  const Tensor<T> gy2 = slice_channels(gyp, s, c);
  auto bw = block_.backward(block_params(), x1, gy2,
                            grad_params.subspan(block_offset_), meter);

  // y' = (x'_1, x'_2 + G(x'_1)); reuse xp as y'.
  Tensor<T> yp2 = slice_channels(xp, s, c);
  yp2 += bw.output;
  Tensor<T> yp = xp;
  assign_channels(yp, s, yp2);

  // Cotangent of x' = (gy'_1 + J_G^T gy'_2, gy'_2); reuse gyp.
  Tensor<T> gx1 = slice_channels(gyp, 0, s);
  gx1 += bw.grad_input;
  Tensor<T> gxp = gyp;
  assign_channels(gxp, 0, gx1);

  if (hs.count() > 0) {
    // y = U^T y' contributes y' gy^T; x' = U x contributes gx' x^T.
    Tensor<T> grad_u({c, c});
    accumulate_channel_outer(yp, upstream, grad_u);
    accumulate_channel_outer(gxp, x, grad_u);
    const auto gv = householder_backward(hs, grad_u);
    for (std::size_t i = 0; i < gv.size(); ++i) grad_params[i] += gv[i];
  }
  return orth_conv_inverse(u, gxp);
}

template <typename T>
AffineCouplingLayer<T>::AffineCouplingLayer(CouplingConfig cfg)
    : cfg_(cfg), block_(block_config(cfg)), hh_size_(cfg.reflections * cfg.channels) {
  params_.assign(hh_size_ + 2 * block_.parameter_count(), T(0));
}

template <typename T>
void AffineCouplingLayer<T>::initialize(Rng& rng) {
  const std::size_t n = block_.parameter_count();
  init_householder_vectors(std::span<T>(params_).first(hh_size_), cfg_.channels, rng);
  block_.initialize(std::span<T>(params_).subspan(hh_size_, n), rng);
  block_.initialize(std::span<T>(params_).subspan(hh_size_ + n, n), rng);
  constant_scale_ = false;
}

template <typename T>
void AffineCouplingLayer<T>::set_constant_log_scale(T value) {
  constant_scale_ = true;
  constant_value_ = value;
}

template <typename T>
void AffineCouplingLayer<T>::zero_scale() {
  const std::size_t n = block_.parameter_count();
  auto f = std::span<T>(params_).subspan(hh_size_ + n, n);
  std::fill(f.begin(), f.end(), T(0));
  constant_scale_ = false;
}

template <typename T>
void AffineCouplingLayer<T>::zero_shift() {
  const std::size_t n = block_.parameter_count();
  auto g = std::span<T>(params_).subspan(hh_size_, n);
  std::fill(g.begin(), g.end(), T(0));
}

template <typename T>
Tensor<T> AffineCouplingLayer<T>::orthogonal() const {
  return build_orthogonal(HouseholderStack<T>{
      cfg_.channels, std::vector<T>(params_.begin(),
                                    params_.begin() + static_cast<std::ptrdiff_t>(hh_size_))});
}

template <typename T>
Tensor<T> AffineCouplingLayer<T>::log_scale(const Tensor<T>& x1) const {
  if (constant_scale_) {
    return Tensor<T>({x1.extent(0), cfg_.channels - cfg_.split, x1.extent(2),
                      x1.extent(3)},
                     constant_value_);
  }
  const std::size_t n = block_.parameter_count();
  Tensor<T> f = block_.forward(std::span<const T>(params_).subspan(hh_size_ + n, n), x1);
  const T lim = static_cast<T>(kLogScaleClamp);
  for (auto& v : f.storage()) v = std::clamp(v, -lim, lim);
  return f;
}

template <typename T>
Tensor<T> AffineCouplingLayer<T>::shift(const Tensor<T>& x1) const {
  return block_.forward(
      std::span<const T>(params_).subspan(hh_size_, block_.parameter_count()), x1);
}

template <typename T>
Tensor<T> AffineCouplingLayer<T>::forward(const Tensor<T>& x) const {
  const Tensor<T> u = orthogonal();
  Tensor<T> xp = orth_conv(u, x);
  const Tensor<T> x1 = slice_channels(xp, 0, cfg_.split);
  Tensor<T> x2 = slice_channels(xp, cfg_.split, cfg_.channels);
  const Tensor<T> s = log_scale(x1);
  const Tensor<T> g = shift(x1);
  for (std::size_t i = 0; i < x2.size(); ++i) x2[i] = x2[i] * std::exp(s[i]) + g[i];
  assign_channels(xp, cfg_.split, x2);
  return orth_conv_inverse(u, xp);
}

template <typename T>
Tensor<T> AffineCouplingLayer<T>::inverse(const Tensor<T>& y) const {
  const Tensor<T> u = orthogonal();
  Tensor<T> yp = orth_conv(u, y);
  const Tensor<T> y1 = slice_channels(yp, 0, cfg_.split);
  Tensor<T> y2 = slice_channels(yp, cfg_.split, cfg_.channels);
  const Tensor<T> s = log_scale(y1);
  const Tensor<T> g = shift(y1);
  for (std::size_t i = 0; i < y2.size(); ++i) y2[i] = (y2[i] - g[i]) * std::exp(-s[i]);
  assign_channels(yp, cfg_.split, y2);
  return orth_conv_inverse(u, yp);
}

template class AdditiveCouplingLayer<float>;
template class AdditiveCouplingLayer<double>;
template class AffineCouplingLayer<float>;
template class AffineCouplingLayer<double>;

}  // namespace irim
