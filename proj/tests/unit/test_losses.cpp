#include <cmath>

#include "doctest.h"
#include "irim/error.hpp"
#include "irim/losses.hpp"
#include "unit/fixtures.hpp"

using namespace irim;
using namespace irim::testing;

TEST_SUITE("losses") {
  TEST_CASE("nmse on small examples") {
    RealTensor ref({2}), est({2});
    ref[0] = 3.0; ref[1] = 4.0;
    est[0] = 3.0; est[1] = 0.0;
    CHECK(nmse(est, ref) == doctest::Approx(16.0 / 25.0).epsilon(1e-15));
    est[0] = 0.0;
    CHECK(nmse(est, ref) == doctest::Approx(1.0).epsilon(1e-15));
    est[0] = 6.0; est[1] = 8.0;
    CHECK(nmse(est, ref) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(nmse(ref, ref) == 0.0);
    CHECK_THROWS_AS(nmse(ref, RealTensor({2})), NumericalError);
  }

  TEST_CASE("complex nmse sums both parts") {
    Rng rng(3);
    auto ref = random_field(2, 4, 4, rng);
    auto est = random_field(2, 4, 4, rng);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < ref.re.size(); ++i) {
      num += std::pow(est.re[i] - ref.re[i], 2) + std::pow(est.im[i] - ref.im[i], 2);
      den += ref.re[i] * ref.re[i] + ref.im[i] * ref.im[i];
    }
    CHECK(nmse(est, ref) == doctest::Approx(num / den).epsilon(1e-13));
  }

  TEST_CASE("keep fraction one reproduces nmse") {
    Rng rng(5);
    auto ref = random_field(1, 8, 8, rng);
    auto est = random_field(1, 8, 8, rng);
    CHECK(masked_nmse_loss(est, ref, 1.0, 11) == doctest::Approx(nmse(est, ref)).epsilon(1e-14));
  }

  TEST_CASE("masked loss is an unbiased-ish estimate of nmse") {
    Rng rng(7);
    auto ref = random_field(1, 32, 32, rng);
    auto est = random_field(1, 32, 32, rng);
    for (auto& v : est.re.storage()) v *= 0.3;
    const double full = nmse(est, ref);
    double mean = 0.0;
    for (std::uint64_t s = 0; s < 1000; ++s) mean += masked_nmse_loss(est, ref, 0.05, s);
    mean /= 1000.0;
    CHECK(std::abs(mean - full) <= 0.1 * full);
  }

  TEST_CASE("masked loss gradient matches finite differences") {
    Rng rng(9);
    auto ref = random_field(2, 6, 6, rng);
    auto est = random_field(2, 6, 6, rng);
    MaskedNmseLoss<double> loss(ref, 0.4, 21);
    const auto g = loss.gradient(est);
    const double h = 1e-6;
    for (std::size_t i : {0u, 7u, 40u, 71u}) {
      auto p = est, m = est;
      p.im[i] += h;
      m.im[i] -= h;
      const double fd = (loss.value(p) - loss.value(m)) / (2 * h);
      CHECK(g.im[i] == doctest::Approx(fd).epsilon(1e-6));
    }
  }

  TEST_CASE("mask is redrawn until it sees the reference") {
    RealTensor re({1, 1, 4, 4}), im({1, 1, 4, 4});
    re[5] = 1.0;
    MaskedNmseLoss<double> loss({re, im}, 0.3, 3);
    CHECK(loss.mask()[5] == 1);
    CHECK_THROWS_AS(MaskedNmseLoss<double>({im, im}, 0.3, 3), NumericalError);
    CHECK_THROWS_AS(MaskedNmseLoss<double>({re, im}, 0.0, 3), ConfigError);
  }

  TEST_CASE("step weights") {
    CHECK(last_step_weights(3) == std::vector<double>{0.0, 0.0, 1.0});
    CHECK(uniform_weights(4) == std::vector<double>(4, 0.25));
    CHECK_THROWS_AS(validate_weights({}), ConfigError);
    CHECK_THROWS_AS(validate_weights({-0.1, 1.1}), ConfigError);
    CHECK_THROWS_AS(validate_weights({0.0, 0.0}), ConfigError);
  }

  TEST_CASE("weighted multistep loss is the weighted sum") {
    Rng rng(13);
    auto ref = random_field(1, 4, 4, rng);
    std::vector<ComplexField<double>> traj{random_field(1, 4, 4, rng), random_field(1, 4, 4, rng),
                                           random_field(1, 4, 4, rng)};
    MaskedNmseLoss<double> loss(ref, 1.0, 1);
    const std::vector<double> w{0.2, 0.3, 0.5};
    const double expected = 0.2 * nmse(traj[0], ref) + 0.3 * nmse(traj[1], ref) +
                            0.5 * nmse(traj[2], ref);
    CHECK(weighted_multistep_loss(traj, w, loss) == doctest::Approx(expected).epsilon(1e-13));
    CHECK_THROWS_AS(weighted_multistep_loss(traj, {0.5, 0.5}, loss), ShapeError);
  }
}
