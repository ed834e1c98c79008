#include "irim/householder.hpp"

#include <Eigen/Core>
#include <cmath>

namespace irim {
namespace {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T>
Vec<T> reflection_vector(const HouseholderStack<T>& hs, std::size_t k) {
  auto v = hs.vector(k);
  Vec<T> out(static_cast<Eigen::Index>(hs.channels));
  for (std::size_t i = 0; i < hs.channels; ++i) out[i] = v[i];
  if (!(static_cast<double>(out.norm()) > kHouseholderEpsilon)) {
    throw NumericalError("Householder vector " + std::to_string(k) +
                         " is degenerate (norm <= 1e-12)");
  }
  return out;
}

// M <- H M with H = I - 2 v v^T / ||v||^2.
template <typename T>
void reflect_rows(Mat<T>& m, const Vec<T>& v) {
  const T n = v.squaredNorm();
  Eigen::Matrix<T, 1, Eigen::Dynamic> vt_m = v.transpose() * m;
  m.noalias() -= (T(2) / n) * v * vt_m;
}

template <typename T>
Mat<T> to_mat(const Tensor<T>& t) {
  return Eigen::Map<const Mat<T>>(t.data().data(),
                                  static_cast<Eigen::Index>(t.extent(0)),
                                  static_cast<Eigen::Index>(t.extent(1)));
}

template <typename T>
void require_square(const Tensor<T>& u, std::size_t channels, const char* what) {
  if (u.rank() != 2 || u.extent(0) != u.extent(1) || u.extent(0) != channels) {
    throw ShapeError(std::string(what) + ": matrix " + shape_string(u.shape()) +
                     " does not match " + std::to_string(channels) +
                     " channels");
  }
}

}  // namespace

template <typename T>
HouseholderStack<T> HouseholderStack<T>::random(std::size_t channels,
                                                std::size_t count, Rng& rng) {
  HouseholderStack hs{channels, std::vector<T>(channels * count)};
  init_householder_vectors(std::span<T>(hs.vectors), channels, rng);
  return hs;
}

template <typename T>
void init_householder_vectors(std::span<T> vectors, std::size_t channels,
                              Rng& rng) {
  for (std::size_t off = 0; off < vectors.size(); off += channels) {
    double norm2 = 0.0;
    do {
      norm2 = 0.0;
      for (std::size_t i = 0; i < channels; ++i) {
        const double g = rng.gaussian();
        vectors[off + i] = static_cast<T>(g);
        norm2 += g * g;
      }
    } while (std::sqrt(norm2) <= kHouseholderEpsilon);
  }
}

template <typename T>
Tensor<T> build_orthogonal(const HouseholderStack<T>& hs) {
  const auto c = static_cast<Eigen::Index>(hs.channels);
  Mat<T> u = Mat<T>::Identity(c, c);
  for (std::size_t k = 0; k < hs.count(); ++k)
    reflect_rows(u, reflection_vector(hs, k));
  Tensor<T> out({hs.channels, hs.channels});
  Eigen::Map<Mat<T>>(out.data().data(), c, c) = u;
  return out;
}

template <typename T>
std::vector<T> householder_backward(const HouseholderStack<T>& hs,
                                    const Tensor<T>& grad_u) {
  require_square(grad_u, hs.channels, "householder_backward");
  const auto c = static_cast<Eigen::Index>(hs.channels);
  const std::size_t d = hs.count();
  std::vector<Vec<T>> v;
  for (std::size_t k = 0; k < d; ++k) v.push_back(reflection_vector(hs, k));

  // prefix[k] = H_k ... H_1 (prefix[0] = I).
  std::vector<Mat<T>> prefix(d + 1, Mat<T>::Identity(c, c));
  for (std::size_t k = 0; k < d; ++k) {
    prefix[k + 1] = prefix[k];
    reflect_rows(prefix[k + 1], v[k]);
  }

  std::vector<T> grad(hs.vectors.size(), T(0));
  // m = (H_D ... H_{k+1})^T dU, updated as k descends.
  Mat<T> m = to_mat(grad_u);
  for (std::size_t k = d; k-- > 0;) {
    const Mat<T> dh = m * prefix[k].transpose();
    const Vec<T>& vk = v[k];
    const T n = vk.squaredNorm();
    const Vec<T> sym = dh * vk + dh.transpose() * vk;
    const T quad = vk.dot(dh * vk);
    const Vec<T> g = (T(-2) / n) * sym + (T(4) * quad / (n * n)) * vk;
    for (Eigen::Index i = 0; i < c; ++i) grad[k * hs.channels + i] = g[i];
    reflect_rows(m, vk);
  }
  return grad;
}

template <typename T>
Tensor<T> orth_conv(const Tensor<T>& u, const Tensor<T>& x) {
  if (x.rank() != 4) throw ShapeError("orth_conv: input must be rank 4");
  require_square(u, x.extent(1), "orth_conv");
  const auto c = static_cast<Eigen::Index>(x.extent(1));
  const auto p = static_cast<Eigen::Index>(x.extent(2) * x.extent(3));
  Tensor<T> y(x.shape());
  Eigen::Map<const Mat<T>> um(u.data().data(), c, c);
  for (std::size_t b = 0; b < x.extent(0); ++b) {
    Eigen::Map<const Mat<T>> xb(x.data().data() + b * c * p, c, p);
    Eigen::Map<Mat<T>> yb(y.data().data() + b * c * p, c, p);
    yb.noalias() = um * xb;
  }
  return y;
}

template <typename T>
Tensor<T> orth_conv_inverse(const Tensor<T>& u, const Tensor<T>& y) {
  if (y.rank() != 4) throw ShapeError("orth_conv_inverse: input must be rank 4");
  require_square(u, y.extent(1), "orth_conv_inverse");
  const auto c = static_cast<Eigen::Index>(y.extent(1));
  const auto p = static_cast<Eigen::Index>(y.extent(2) * y.extent(3));
  Tensor<T> x(y.shape());
  Eigen::Map<const Mat<T>> um(u.data().data(), c, c);
  for (std::size_t b = 0; b < y.extent(0); ++b) {
    Eigen::Map<const Mat<T>> yb(y.data().data() + b * c * p, c, p);
    Eigen::Map<Mat<T>> xb(x.data().data() + b * c * p, c, p);
    xb.noalias() = um.transpose() * yb;
  }
  return x;
}

template <typename T>
void accumulate_channel_outer(const Tensor<T>& a, const Tensor<T>& b,
                              Tensor<T>& out) {
  a.require_same_shape(b, "accumulate_channel_outer");
  require_square(out, a.extent(1), "accumulate_channel_outer");
  const auto c = static_cast<Eigen::Index>(a.extent(1));
  const auto p = static_cast<Eigen::Index>(a.extent(2) * a.extent(3));
  Eigen::Map<Mat<T>> om(out.data().data(), c, c);
  for (std::size_t n = 0; n < a.extent(0); ++n) {
    Eigen::Map<const Mat<T>> am(a.data().data() + n * c * p, c, p);
    Eigen::Map<const Mat<T>> bm(b.data().data() + n * c * p, c, p);
    om.noalias() += am * bm.transpose();
  }
}

template <typename T>
T orthogonality_defect(const Tensor<T>& u) {
  require_square(u, u.extent(0), "orthogonality_defect");
  const Mat<T> m = to_mat(u);
  return (m * m.transpose() - Mat<T>::Identity(m.rows(), m.cols())).norm();
}

#define IRIM_INSTANTIATE(T)                                                   \
  template struct HouseholderStack<T>;                                        \
  template void init_householder_vectors(std::span<T>, std::size_t, Rng&);    \
  template Tensor<T> build_orthogonal(const HouseholderStack<T>&);            \
  template std::vector<T> householder_backward(const HouseholderStack<T>&,    \
                                               const Tensor<T>&);             \
  template Tensor<T> orth_conv(const Tensor<T>&, const Tensor<T>&);           \
  template Tensor<T> orth_conv_inverse(const Tensor<T>&, const Tensor<T>&);   \
  template void accumulate_channel_outer(const Tensor<T>&, const Tensor<T>&,  \
                                         Tensor<T>&);                         \
  template T orthogonality_defect(const Tensor<T>&);

IRIM_INSTANTIATE(float)
IRIM_INSTANTIATE(double)
#undef IRIM_INSTANTIATE

}  // namespace irim
