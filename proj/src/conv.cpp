#include "irim/conv.hpp"

#include <Eigen/Core>

namespace irim {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMatrix = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMapMatrix = Eigen::Map<const RowMatrix<T>>;

struct Geometry {
  std::size_t channels, in_h, in_w, kh, kw, stride, pad_r, pad_c, out_h, out_w;

  std::size_t col_rows() const { return channels * kh * kw; }
  std::size_t col_cols() const { return out_h * out_w; }
};

std::size_t conv_extent(std::size_t in, std::size_t pad, std::size_t k,
                        std::size_t stride, const char* what) {
  if (in + 2 * pad < k) {
    throw ShapeError(std::string(what) + ": kernel extent " +
                     std::to_string(k) + " exceeds padded input " +
                     std::to_string(in + 2 * pad));
  }
  return (in + 2 * pad - k) / stride + 1;
}

// Unfolds one image [C, H, W] into a [C*kh*kw, Ho*Wo] patch matrix.
template <typename T>
void im2col(const T* image, const Geometry& g, T* col) {
  const std::size_t cols = g.col_cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t a = 0; a < g.kh; ++a) {
      for (std::size_t b = 0; b < g.kw; ++b) {
        T* row = col + ((c * g.kh + a) * g.kw + b) * cols;
        for (std::size_t p = 0; p < g.out_h; ++p) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(p * g.stride + a) -
                                    static_cast<std::ptrdiff_t>(g.pad_r);
          T* dst = row + p * g.out_w;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.in_h)) {
            std::fill_n(dst, g.out_w, T(0));
            continue;
          }
          const T* src = image + (c * g.in_h + ih) * g.in_w;
          for (std::size_t q = 0; q < g.out_w; ++q) {
            const std::ptrdiff_t iw =
                static_cast<std::ptrdiff_t>(q * g.stride + b) -
                static_cast<std::ptrdiff_t>(g.pad_c);
            dst[q] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.in_w))
                         ? T(0)
                         : src[iw];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters patch columns back, accumulating overlaps.
template <typename T>
void col2im(const T* col, const Geometry& g, T* image) {
  const std::size_t cols = g.col_cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t a = 0; a < g.kh; ++a) {
      for (std::size_t b = 0; b < g.kw; ++b) {
        const T* row = col + ((c * g.kh + a) * g.kw + b) * cols;
        for (std::size_t p = 0; p < g.out_h; ++p) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(p * g.stride + a) -
                                    static_cast<std::ptrdiff_t>(g.pad_r);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
          T* dst = image + (c * g.in_h + ih) * g.in_w;
          const T* src = row + p * g.out_w;
          for (std::size_t q = 0; q < g.out_w; ++q) {
            const std::ptrdiff_t iw =
                static_cast<std::ptrdiff_t>(q * g.stride + b) -
                static_cast<std::ptrdiff_t>(g.pad_c);
            if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.in_w))
              dst[iw] += src[q];
          }
        }
      }
    }
  }
}

void require_rank4(const Shape& s, const char* what, const char* name) {
  if (s.size() != 4) {
    throw ShapeError(std::string(what) + ": " + name + " must be rank 4, got " +
                     shape_string(s));
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel,
                 std::size_t stride, Padding pad) {
  require_rank4(x.shape(), "conv2d", "input");
  require_rank4(kernel.shape(), "conv2d", "kernel");
  if (stride == 0) throw ShapeError("conv2d: stride must be >= 1");
  if (kernel.extent(1) != x.extent(1)) {
    throw ShapeError("conv2d: kernel " + shape_string(kernel.shape()) +
                     " expects " + std::to_string(kernel.extent(1)) +
                     " input channels, input " + shape_string(x.shape()) +
                     " has " + std::to_string(x.extent(1)));
  }
  const std::size_t n = x.extent(0), co = kernel.extent(0);
  Geometry g{x.extent(1), x.extent(2), x.extent(3), kernel.extent(2),
             kernel.extent(3), stride, pad.rows, pad.cols, 0, 0};
  g.out_h = conv_extent(g.in_h, g.pad_r, g.kh, stride, "conv2d");
  g.out_w = conv_extent(g.in_w, g.pad_c, g.kw, stride, "conv2d");

  Tensor<T> y({n, co, g.out_h, g.out_w});
  std::vector<T> col(g.col_rows() * g.col_cols());
  ConstMapMatrix<T> k(kernel.data().data(), co, g.col_rows());
  const std::size_t in_stride = g.channels * g.in_h * g.in_w;
  const std::size_t out_stride = co * g.col_cols();
  for (std::size_t b = 0; b < n; ++b) {
    im2col(x.data().data() + b * in_stride, g, col.data());
    ConstMapMatrix<T> c(col.data(), g.col_rows(), g.col_cols());
    MapMatrix<T> out(y.data().data() + b * out_stride, co, g.col_cols());
    out.noalias() = k * c;
  }
  return y;
}

template <typename T>
Tensor<T> conv2d_transpose(const Tensor<T>& y, const Tensor<T>& kernel,
                           std::size_t stride, Padding pad, std::size_t out_h,
                           std::size_t out_w) {
  require_rank4(y.shape(), "conv2d_transpose", "input");
  require_rank4(kernel.shape(), "conv2d_transpose", "kernel");
  if (stride == 0) throw ShapeError("conv2d_transpose: stride must be >= 1");
  if (kernel.extent(0) != y.extent(1)) {
    throw ShapeError("conv2d_transpose: kernel " +
                     shape_string(kernel.shape()) + " expects " +
                     std::to_string(kernel.extent(0)) +
                     " input channels, input " + shape_string(y.shape()) +
                     " has " + std::to_string(y.extent(1)));
  }
  const std::size_t n = y.extent(0), co = kernel.extent(0), ci = kernel.extent(1);
  const std::size_t kh = kernel.extent(2), kw = kernel.extent(3);
  auto default_extent = [&](std::size_t in, std::size_t p, std::size_t k) {
    const std::size_t full = (in - 1) * stride + k;
    if (full < 2 * p) throw ShapeError("conv2d_transpose: padding too large");
    return full - 2 * p;
  };
  if (out_h == 0) out_h = default_extent(y.extent(2), pad.rows, kh);
  if (out_w == 0) out_w = default_extent(y.extent(3), pad.cols, kw);

  Geometry g{ci, out_h, out_w, kh, kw, stride, pad.rows, pad.cols, 0, 0};
  g.out_h = conv_extent(out_h, pad.rows, kh, stride, "conv2d_transpose");
  g.out_w = conv_extent(out_w, pad.cols, kw, stride, "conv2d_transpose");
  if (g.out_h != y.extent(2) || g.out_w != y.extent(3)) {
    throw ShapeError("conv2d_transpose: requested output " +
                     std::to_string(out_h) + "x" + std::to_string(out_w) +
                     " is inconsistent with input " + shape_string(y.shape()));
  }

  Tensor<T> x({n, ci, out_h, out_w});
  std::vector<T> col(g.col_rows() * g.col_cols());
  ConstMapMatrix<T> k(kernel.data().data(), co, g.col_rows());
  const std::size_t in_stride = co * g.col_cols();
  const std::size_t out_stride = ci * out_h * out_w;
  for (std::size_t b = 0; b < n; ++b) {
    ConstMapMatrix<T> yb(y.data().data() + b * in_stride, co, g.col_cols());
    MapMatrix<T> c(col.data(), g.col_rows(), g.col_cols());
    c.noalias() = k.transpose() * yb;
    col2im(col.data(), g, x.data().data() + b * out_stride);
  }
  return x;
}

template <typename T>
Tensor<T> conv2d_kernel_grad(const Tensor<T>& x, const Tensor<T>& upstream,
                             std::size_t kh, std::size_t kw,
                             std::size_t stride, Padding pad) {
  require_rank4(x.shape(), "conv2d_kernel_grad", "input");
  require_rank4(upstream.shape(), "conv2d_kernel_grad", "upstream");
  if (x.extent(0) != upstream.extent(0))
    throw ShapeError("conv2d_kernel_grad: batch mismatch");
  const std::size_t n = x.extent(0), co = upstream.extent(1);
  Geometry g{x.extent(1), x.extent(2), x.extent(3), kh, kw, stride,
             pad.rows, pad.cols, 0, 0};
  g.out_h = conv_extent(g.in_h, g.pad_r, kh, stride, "conv2d_kernel_grad");
  g.out_w = conv_extent(g.in_w, g.pad_c, kw, stride, "conv2d_kernel_grad");
  if (g.out_h != upstream.extent(2) || g.out_w != upstream.extent(3)) {
    throw ShapeError("conv2d_kernel_grad: upstream " +
                     shape_string(upstream.shape()) +
                     " does not match conv output geometry");
  }
  Tensor<T> grad({co, g.channels, kh, kw});
  MapMatrix<T> dk(grad.data().data(), co, g.col_rows());
  std::vector<T> col(g.col_rows() * g.col_cols());
  const std::size_t in_stride = g.channels * g.in_h * g.in_w;
  const std::size_t up_stride = co * g.col_cols();
  for (std::size_t b = 0; b < n; ++b) {
    im2col(x.data().data() + b * in_stride, g, col.data());
    ConstMapMatrix<T> c(col.data(), g.col_rows(), g.col_cols());
    ConstMapMatrix<T> gy(upstream.data().data() + b * up_stride, co,
                         g.col_cols());
    dk.noalias() += gy * c.transpose();
  }
  return grad;
}

template <typename T>
void add_channel_bias(Tensor<T>& x, std::span<const T> bias) {
  if (x.rank() != 4 || bias.size() != x.extent(1))
    throw ShapeError("add_channel_bias: bias length does not match channels");
  const std::size_t plane = x.extent(2) * x.extent(3);
  auto data = x.data();
  for (std::size_t b = 0; b < x.extent(0); ++b)
    for (std::size_t c = 0; c < x.extent(1); ++c) {
      T* p = data.data() + (b * x.extent(1) + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) p[i] += bias[c];
    }
}

template <typename T>
std::vector<T> channel_sums(const Tensor<T>& x) {
  std::vector<T> sums(x.extent(1), T(0));
  const std::size_t plane = x.extent(2) * x.extent(3);
  for (std::size_t b = 0; b < x.extent(0); ++b)
    for (std::size_t c = 0; c < x.extent(1); ++c) {
      const T* p = x.data().data() + (b * x.extent(1) + c) * plane;
      T acc = 0;
      for (std::size_t i = 0; i < plane; ++i) acc += p[i];
      sums[c] += acc;
    }
  return sums;
}

#define IRIM_INSTANTIATE(T)                                                   \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, std::size_t, \
                            Padding);                                         \
  template Tensor<T> conv2d_transpose(const Tensor<T>&, const Tensor<T>&,    \
                                      std::size_t, Padding, std::size_t,     \
                                      std::size_t);                          \
  template Tensor<T> conv2d_kernel_grad(const Tensor<T>&, const Tensor<T>&,  \
                                        std::size_t, std::size_t,            \
                                        std::size_t, Padding);               \
  template void add_channel_bias(Tensor<T>&, std::span<const T>);            \
  template std::vector<T> channel_sums(const Tensor<T>&);

IRIM_INSTANTIATE(float)
IRIM_INSTANTIATE(double)
#undef IRIM_INSTANTIATE

}  // namespace irim
