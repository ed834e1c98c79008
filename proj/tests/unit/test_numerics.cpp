#include <sstream>

#include "doctest.h"
#include "irim/conv.hpp"
#include "irim/fourier.hpp"
#include "irim/rng.hpp"
#include "irim/serialize.hpp"
#include "unit/oracles.hpp"

using namespace irim;
using irim::testing::random_field;
using irim::testing::random_tensor;

TEST_SUITE("numerics") {
  TEST_CASE("conv2d scalar kernel scales the input") {
    RealTensor x({1, 1, 4, 4}, 1.0);
    RealTensor k({1, 1, 1, 1}, 2.0);
    auto y = conv2d(x, k, 1, Padding::none());
    CHECK(y.shape() == Shape{1, 1, 4, 4});
    for (double v : y.data()) CHECK(v == 2.0);
  }

  TEST_CASE("conv2d with a centred delta kernel is the identity") {
    Rng rng(1);
    auto x = random_tensor({2, 1, 5, 6}, rng);
    RealTensor k({1, 1, 3, 3});
    k.at(0, 0, 1, 1) = 1.0;
    CHECK(conv2d(x, k, 1, Padding::same(3)) == x);
  }

  TEST_CASE("conv2d matches the six-loop oracle") {
    Rng rng(2);
    auto x = random_tensor({1, 2, 5, 5}, rng);
    auto k = random_tensor({3, 2, 3, 3}, rng);
    for (std::size_t stride : {1, 2})
      for (std::size_t pad : {0, 1}) {
        auto got = conv2d(x, k, stride, Padding::uniform(pad));
        auto want = irim::testing::loop_conv2d(x, k, stride, pad);
        REQUIRE(got.shape() == want.shape());
        CHECK(max_abs_diff(got, want) < 1e-13);
      }
  }

  TEST_CASE("conv2d rejects channel mismatch and zero stride") {
    RealTensor x({1, 2, 4, 4});
    CHECK_THROWS_AS(conv2d(x, RealTensor({1, 3, 1, 1}), 1, Padding::none()),
                    ShapeError);
    CHECK_THROWS_AS(conv2d(x, RealTensor({1, 2, 1, 1}), 0, Padding::none()),
                    ShapeError);
  }

  TEST_CASE("conv2d_transpose is the adjoint of conv2d (100+ random cases)") {
    Rng rng(3);
    double worst = 0.0;
    for (int trial = 0; trial < 120; ++trial) {
      const std::size_t n = 1 + rng.below(2), ci = 1 + rng.below(3),
                        co = 1 + rng.below(3);
      const std::size_t kh = 1 + rng.below(3), kw = 1 + rng.below(3);
      const std::size_t stride = 1 + rng.below(3), pad = rng.below(2);
      const std::size_t h = kh + rng.below(6), w = kw + rng.below(6);
      auto x = random_tensor({n, ci, h, w}, rng);
      auto k = random_tensor({co, ci, kh, kw}, rng);
      auto y_shape = conv2d(x, k, stride, Padding::uniform(pad)).shape();
      auto y = random_tensor(y_shape, rng);
      const double lhs = dot(conv2d(x, k, stride, Padding::uniform(pad)), y);
      const double rhs =
          dot(x, conv2d_transpose(y, k, stride, Padding::uniform(pad), h, w));
      worst = std::max(worst, std::abs(lhs - rhs) / (1.0 + std::abs(lhs)));
      auto loop = irim::testing::loop_conv2d_transpose(y, k, stride, pad, h, w);
      CHECK(max_abs_diff(conv2d_transpose(y, k, stride, Padding::uniform(pad), h, w),
                         loop) < 1e-12);
    }
    CHECK(worst < 1e-10);
  }

  TEST_CASE("stride-2 transpose with a ones kernel upsamples block-constant") {
    RealTensor y({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
    RealTensor k({1, 1, 2, 2}, 1.0);
    auto x = conv2d_transpose(y, k, 2, Padding::none());
    REQUIRE(x.shape() == Shape{1, 1, 4, 4});
    const double want[4][4] = {{1, 1, 2, 2}, {1, 1, 2, 2}, {3, 3, 4, 4}, {3, 3, 4, 4}};
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) CHECK(x.at(0, 0, i, j) == want[i][j]);
    CHECK(max_abs(conv2d_transpose(RealTensor({1, 1, 2, 2}), k, 2,
                                   Padding::none())) == 0.0);
  }

  TEST_CASE("conv2d_kernel_grad matches finite differences of <conv, g>") {
    Rng rng(4);
    auto x = random_tensor({2, 2, 6, 6}, rng);
    auto k = random_tensor({3, 2, 2, 2}, rng);
    auto g = random_tensor(conv2d(x, k, 2, Padding::none()).shape(), rng);
    auto dk = conv2d_kernel_grad(x, g, 2, 2, 2, Padding::none());
    // Objective is linear in k, so the central difference is exact.
    for (std::size_t i = 0; i < k.size(); ++i) {
      auto f = [&] { return dot(conv2d(x, k, 2, Padding::none()), g); };
      const double fd = irim::testing::central_difference(f, k[i], 1e-3);
      CHECK(std::abs(fd - dk[i]) < 1e-9);
    }
  }

  TEST_CASE("dft2 of a constant concentrates at DC") {
    const std::size_t h = 4, w = 6;
    auto x = ComplexField<double>::zeros(1, h, w);
    x.re.fill(1.5);
    x.im.fill(-0.5);
    auto k = dft2(x);
    const double s = std::sqrt(double(h * w));
    CHECK(k.re[0] == doctest::Approx(1.5 * s).epsilon(1e-14));
    CHECK(k.im[0] == doctest::Approx(-0.5 * s).epsilon(1e-14));
    for (std::size_t i = 1; i < h * w; ++i) {
      CHECK(std::abs(k.re[i]) < 1e-13);
      CHECK(std::abs(k.im[i]) < 1e-13);
    }
  }

  TEST_CASE("dft2 of an impulse is flat") {
    auto x = ComplexField<double>::zeros(1, 4, 4);
    x.re[0] = 1.0;
    auto k = dft2(x);
    for (std::size_t i = 0; i < 16; ++i) {
      CHECK(k.re[i] == doctest::Approx(0.25).epsilon(1e-14));
      CHECK(std::abs(k.im[i]) < 1e-15);
    }
  }

  TEST_CASE("dft2 round trip, Parseval and naive DFT agreement") {
    Rng rng(5);
    auto x = random_field(2, 16, 16, rng);
    auto k = dft2(x);
    CHECK(max_abs_diff(idft2(k), x) <= 1e-10);
    CHECK(std::abs(std::sqrt(squared_norm(k)) - std::sqrt(squared_norm(x))) < 1e-10);
    auto small = random_field(1, 5, 6, rng);
    CHECK(max_abs_diff(dft2(small), irim::testing::naive_dft2(small, -1.0)) < 1e-12);
    CHECK(max_abs_diff(idft2(small), irim::testing::naive_dft2(small, +1.0)) < 1e-12);
  }

  TEST_CASE("seeded rng reproduces its stream") {
    Rng a(42), b(42), c(43);
    for (int i = 0; i < 100; ++i) {
      const double ga = a.gaussian(), gb = b.gaussian();
      CHECK(ga == gb);
      CHECK(a.uniform() == b.uniform());
    }
    CHECK(a.next_u64() != c.next_u64());
    // Fixed algorithm: first engine output for seed 42 is pinned by the
    // mt19937_64 definition.
    Rng d(5489);
    CHECK(d.next_u64() == 14514284786278117030ull);
  }

  TEST_CASE("tensor container round trips and rejects corruption") {
    Rng rng(6);
    for (int trial = 0; trial < 10; ++trial) {
      Shape s;
      const std::size_t rank = 1 + rng.below(4);
      for (std::size_t i = 0; i < rank; ++i) s.push_back(1 + rng.below(4));
      auto t = random_tensor(s, rng);
      CHECK(decode_tensor<double>(encode_tensor(t)) == t);
      std::stringstream ss;
      write_tensor(ss, t);
      CHECK(read_tensor<double>(ss) == t);
    }
    auto bytes = encode_tensor(RealTensor({2, 2}, 1.0));
    CHECK(bytes.substr(0, 4) == "IRT1");
    CHECK(static_cast<int>(bytes[4]) == 2);
    CHECK_THROWS_AS(decode_tensor<double>(bytes.substr(0, bytes.size() - 1)), IoError);
    bytes[0] = 'X';
    CHECK_THROWS_AS(decode_tensor<double>(bytes), IoError);
  }

  TEST_CASE("require_finite flags NaN") {
    RealTensor t({3}, 0.0);
    CHECK_NOTHROW(require_finite(t, "t"));
    t[1] = std::nan("");
    CHECK_THROWS_AS(require_finite(t, "t"), NumericalError);
  }
}
