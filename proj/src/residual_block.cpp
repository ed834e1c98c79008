#include "irim/residual_block.hpp"

#include <cmath>

#include "irim/conv.hpp"

namespace irim {
namespace {

template <typename T>
T sigmoid(T v) {
  return T(1) / (T(1) + std::exp(-v));
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (auto& v : y.storage()) v = v > T(0) ? v : T(0);
  return y;
}

// grad *= 1[pre > 0]
template <typename T>
void relu_backward_inplace(const Tensor<T>& pre, Tensor<T>& grad) {
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!(pre[i] > T(0))) grad[i] = T(0);
}

template <typename T>
std::span<const T> seg(std::span<const T> p, const ParamSegment& s) {
  return p.subspan(s.offset, s.size());
}
template <typename T>
std::span<T> seg(std::span<T> p, const ParamSegment& s) {
  return p.subspan(s.offset, s.size());
}

}  // namespace

template <typename T>
Tensor<T> weight_norm(const Tensor<T>& direction, std::span<const T> scale) {
  const std::size_t outer = direction.extent(0);
  if (scale.size() != outer)
    throw ShapeError("weight_norm: scale length " +
                     std::to_string(scale.size()) + " vs " +
                     std::to_string(outer) + " output channels");
  const std::size_t inner = direction.size() / outer;
  Tensor<T> kernel(direction.shape());
  for (std::size_t o = 0; o < outer; ++o) {
    const T* v = direction.data().data() + o * inner;
    double n2 = 0.0;
    for (std::size_t i = 0; i < inner; ++i) n2 += double(v[i]) * double(v[i]);
    if (n2 == 0.0) continue;
    const T f = static_cast<T>(double(scale[o]) / std::sqrt(n2));
    T* k = kernel.data().data() + o * inner;
    for (std::size_t i = 0; i < inner; ++i) k[i] = f * v[i];
  }
  return kernel;
}

template <typename T>
void weight_norm_backward(const Tensor<T>& direction, std::span<const T> scale,
                          const Tensor<T>& grad_kernel,
                          std::span<T> grad_direction, std::span<T> grad_scale) {
  const std::size_t outer = direction.extent(0);
  const std::size_t inner = direction.size() / outer;
  for (std::size_t o = 0; o < outer; ++o) {
    const T* v = direction.data().data() + o * inner;
    const T* gk = grad_kernel.data().data() + o * inner;
    double n2 = 0.0, vg = 0.0;
    for (std::size_t i = 0; i < inner; ++i) {
      n2 += double(v[i]) * double(v[i]);
      vg += double(v[i]) * double(gk[i]);
    }
    if (n2 == 0.0) continue;
    const double n = std::sqrt(n2);
    // k = s v / n: dk/ds = v / n, dk/dv = (s / n)(I - v v^T / n^2).
    grad_scale[o] += static_cast<T>(vg / n);
    const double f = double(scale[o]) / n;
    const double proj = vg / n2;
    T* gd = grad_direction.data() + o * inner;
    for (std::size_t i = 0; i < inner; ++i)
      gd[i] += static_cast<T>(f * (double(gk[i]) - proj * double(v[i])));
  }
}

template <typename T>
Tensor<T> glu(const Tensor<T>& x) {
  if (x.rank() != 4 || x.extent(1) % 2 != 0)
    throw ShapeError("glu: needs an even channel count, got " +
                     shape_string(x.shape()));
  const std::size_t m = x.extent(1) / 2;
  const std::size_t plane = x.extent(2) * x.extent(3);
  Tensor<T> y({x.extent(0), m, x.extent(2), x.extent(3)});
  for (std::size_t n = 0; n < x.extent(0); ++n) {
    const T* a = x.data().data() + n * 2 * m * plane;
    const T* b = a + m * plane;
    T* out = y.data().data() + n * m * plane;
    for (std::size_t i = 0; i < m * plane; ++i) out[i] = a[i] * sigmoid(b[i]);
  }
  return y;
}

template <typename T>
Tensor<T> glu_backward(const Tensor<T>& x, const Tensor<T>& grad_out) {
  const std::size_t m = x.extent(1) / 2;
  const std::size_t plane = x.extent(2) * x.extent(3);
  Tensor<T> gx(x.shape());
  for (std::size_t n = 0; n < x.extent(0); ++n) {
    const T* a = x.data().data() + n * 2 * m * plane;
    const T* b = a + m * plane;
    const T* g = grad_out.data().data() + n * m * plane;
    T* ga = gx.data().data() + n * 2 * m * plane;
    T* gb = ga + m * plane;
    for (std::size_t i = 0; i < m * plane; ++i) {
      const T s = sigmoid(b[i]);
      ga[i] = g[i] * s;
      gb[i] = g[i] * a[i] * s * (T(1) - s);
    }
  }
  return gx;
}

template <typename T>
ResidualBlockG<T>::ResidualBlockG(ResidualBlockConfig cfg) : cfg_(cfg) {
  if (cfg.in_channels == 0 || cfg.out_channels == 0 || cfg.hidden == 0 ||
      cfg.factor == 0)
    throw ConfigError("ResidualBlockG: channel counts and factor must be >= 1");
  const std::size_t d = cfg.factor, k = cfg.hidden;
  dir1_ = add_segment(layout_, "conv1.direction", {k, cfg.in_channels, d, d});
  scale1_ = add_segment(layout_, "conv1.scale", {k});
  bias1_ = add_segment(layout_, "conv1.bias", {k});
  dir2_ = add_segment(layout_, "conv2.direction", {k, k, 3, 3});
  scale2_ = add_segment(layout_, "conv2.scale", {k});
  bias2_ = add_segment(layout_, "conv2.bias", {k});
  // Stored in forward-conv orientation [hidden, 2*out, d, d]; the block
  // applies its transpose.
  dir3_ = add_segment(layout_, "conv3.direction",
                      {k, 2 * cfg.out_channels, d, d});
  scale3_ = add_segment(layout_, "conv3.scale", {k});
}

template <typename T>
void ResidualBlockG<T>::initialize(std::span<T> params, Rng& rng) const {
  if (params.size() != parameter_count())
    throw ShapeError("ResidualBlockG::initialize: parameter span size");
  std::fill(params.begin(), params.end(), T(0));
  for (std::size_t d : {dir1_, dir2_, dir3_}) {
    const auto& s = layout_[d];
    const double fan_in = static_cast<double>(s.size() / s.shape[0]);
    for (auto& v : seg(params, s))
      v = static_cast<T>(rng.gaussian(0.0, 1.0 / std::sqrt(fan_in)));
  }
  for (std::size_t s : {scale1_, scale2_, scale3_})
    for (auto& v : seg(params, layout_[s])) v = T(1);
}

template <typename T>
Tensor<T> ResidualBlockG<T>::segment_tensor(std::span<const T> params,
                                            std::size_t s) const {
  auto v = seg(params, layout_[s]);
  return Tensor<T>(layout_[s].shape, std::vector<T>(v.begin(), v.end()));
}

template <typename T>
typename ResidualBlockG<T>::Kernels ResidualBlockG<T>::kernels(
    std::span<const T> p) const {
  if (p.size() != parameter_count())
    throw ShapeError("ResidualBlockG: expected " +
                     std::to_string(parameter_count()) + " parameters, got " +
                     std::to_string(p.size()));
  return {weight_norm(segment_tensor(p, dir1_), seg(p, layout_[scale1_])),
          weight_norm(segment_tensor(p, dir2_), seg(p, layout_[scale2_])),
          weight_norm(segment_tensor(p, dir3_), seg(p, layout_[scale3_]))};
}

template <typename T>
void ResidualBlockG<T>::check_input(const Tensor<T>& x) const {
  if (x.rank() != 4 || x.extent(1) != cfg_.in_channels)
    throw ShapeError("ResidualBlockG: expected " +
                     std::to_string(cfg_.in_channels) + " input channels, got " +
                     shape_string(x.shape()));
  if (x.extent(2) % cfg_.factor != 0 || x.extent(3) % cfg_.factor != 0)
    throw ShapeError("ResidualBlockG: spatial extent " +
                     std::to_string(x.extent(2)) + "x" +
                     std::to_string(x.extent(3)) +
                     " is not divisible by downsampling factor " +
                     std::to_string(cfg_.factor));
}

template <typename T>
Tensor<T> ResidualBlockG<T>::forward(std::span<const T> params,
                                     const Tensor<T>& x,
                                     MemoryMeter* meter) const {
  check_input(x);
  const auto k = kernels(params);
  const std::size_t d = cfg_.factor;
  Tensor<T> a1 = conv2d(x, k.k1, d, Padding::none());
  add_channel_bias(a1, seg(params, layout_[bias1_]));
  MemoryMeter::Hold hold1(meter, a1.size());
  Tensor<T> a2 = conv2d(relu(a1), k.k2, 1, Padding::same(3));
  add_channel_bias(a2, seg(params, layout_[bias2_]));
  MemoryMeter::Hold hold2(meter, a2.size());
  Tensor<T> a3 = conv2d_transpose(relu(a2), k.k3, d, Padding::none(),
                                  x.extent(2), x.extent(3));
  MemoryMeter::Hold hold3(meter, a3.size());
  return glu(a3);
}

template <typename T>
typename ResidualBlockG<T>::Backward ResidualBlockG<T>::backward(
    std::span<const T> params, const Tensor<T>& x, const Tensor<T>& grad_out,
    std::span<T> grad_params, MemoryMeter* meter) const {
  check_input(x);
  if (grad_params.size() != parameter_count())
    throw ShapeError("ResidualBlockG::backward: gradient span size");
  const auto k = kernels(params);
  const std::size_t d = cfg_.factor;
  const std::size_t h = x.extent(2), w = x.extent(3);

  // Recompute the internal activations; all of them stay alive for the
  // duration of this call.
  Tensor<T> a1 = conv2d(x, k.k1, d, Padding::none());
  add_channel_bias(a1, seg(params, layout_[bias1_]));
  const Tensor<T> r1 = relu(a1);
  Tensor<T> a2 = conv2d(r1, k.k2, 1, Padding::same(3));
  add_channel_bias(a2, seg(params, layout_[bias2_]));
  const Tensor<T> r2 = relu(a2);
  const Tensor<T> a3 = conv2d_transpose(r2, k.k3, d, Padding::none(), h, w);
  MemoryMeter::Hold hold(meter, a1.size() + r1.size() + a2.size() +
                                    r2.size() + a3.size());
  Tensor<T> out = glu(a3);
  grad_out.require_same_shape(out, "ResidualBlockG::backward");

  const Tensor<T> g_a3 = glu_backward(a3, grad_out);

  Tensor<T> dk3 = conv2d_kernel_grad(g_a3, r2, d, d, d, Padding::none());
  Tensor<T> g_a2 = conv2d(g_a3, k.k3, d, Padding::none());
  relu_backward_inplace(a2, g_a2);

  {
    auto gb = channel_sums(g_a2);
    auto dst = seg(grad_params, layout_[bias2_]);
    for (std::size_t i = 0; i < gb.size(); ++i) dst[i] += gb[i];
  }
  Tensor<T> dk2 = conv2d_kernel_grad(r1, g_a2, 3, 3, 1, Padding::same(3));
  Tensor<T> g_a1 = conv2d_transpose(g_a2, k.k2, 1, Padding::same(3),
                                    a1.extent(2), a1.extent(3));
  relu_backward_inplace(a1, g_a1);

  {
    auto gb = channel_sums(g_a1);
    auto dst = seg(grad_params, layout_[bias1_]);
    for (std::size_t i = 0; i < gb.size(); ++i) dst[i] += gb[i];
  }
  Tensor<T> dk1 = conv2d_kernel_grad(x, g_a1, d, d, d, Padding::none());
  Tensor<T> gx = conv2d_transpose(g_a1, k.k1, d, Padding::none(), h, w);

  const std::span<const T> p = params;
  weight_norm_backward(segment_tensor(p, dir1_), seg(p, layout_[scale1_]), dk1,
                       seg(grad_params, layout_[dir1_]),
                       seg(grad_params, layout_[scale1_]));
  weight_norm_backward(segment_tensor(p, dir2_), seg(p, layout_[scale2_]), dk2,
                       seg(grad_params, layout_[dir2_]),
                       seg(grad_params, layout_[scale2_]));
  weight_norm_backward(segment_tensor(p, dir3_), seg(p, layout_[scale3_]), dk3,
                       seg(grad_params, layout_[dir3_]),
                       seg(grad_params, layout_[scale3_]));
  return {std::move(out), std::move(gx)};
}

#define IRIM_INSTANTIATE(T)                                                   \
  template Tensor<T> weight_norm(const Tensor<T>&, std::span<const T>);      \
  template void weight_norm_backward(const Tensor<T>&, std::span<const T>,   \
                                     const Tensor<T>&, std::span<T>,         \
                                     std::span<T>);                          \
  template Tensor<T> glu(const Tensor<T>&);                                   \
  template Tensor<T> glu_backward(const Tensor<T>&, const Tensor<T>&);       \
  template class ResidualBlockG<T>;

IRIM_INSTANTIATE(float)
IRIM_INSTANTIATE(double)
#undef IRIM_INSTANTIATE

}  // namespace irim
