#include <cmath>
#include <sstream>

#include "doctest.h"
#include "irim/gradient_engine.hpp"
#include "unit/fixtures.hpp"

using namespace irim;
using namespace irim::testing;

namespace {

struct Setup {
  IRIMModel<double> model;
  Problem problem;
  MaskedNmseLoss<double> loss;
  std::vector<double> weights;
};

Setup make_setup(ModelConfig cfg, std::size_t n, std::size_t h, std::uint64_t seed,
                 double keep = 0.5) {
  auto model = random_model(cfg, seed);
  auto problem = random_problem(n, h, h, derive_seed(seed, 7));
  MaskedNmseLoss<double> loss(problem.image, keep, derive_seed(seed, 8));
  return {std::move(model), std::move(problem), std::move(loss),
          last_step_weights(cfg.steps)};
}

double rel(double fd, double g, double floor) {
  return std::abs(fd - g) / std::max({std::abs(fd), std::abs(g), floor});
}

}  // namespace

TEST_SUITE("gradient engine") {
  TEST_CASE("stored gradients match finite differences") {
    auto s = make_setup(small_config(2, 4), 1, 8, 31);
    const auto& p = s.problem;
    auto report = backprop_stored(s.model, p.data, p.op, s.loss, s.weights);
    CHECK(report.loss == doctest::Approx(rollout_loss(s.model, p.data, p.op, s.loss, s.weights)).epsilon(1e-14));
    auto coords = sample_coordinates(s.model, 20, 32);
    auto fd = finite_difference_grad(s.model, p.data, p.op, s.loss, s.weights, coords);
    const double floor = 1e-3 * report.max_abs_grad();
    for (std::size_t i = 0; i < coords.size(); ++i) {
      const double g = report.grads[coords[i].layer][coords[i].index];
      INFO("layer ", coords[i].layer, " index ", coords[i].index, " fd ", fd[i], " g ", g);
      CHECK(rel(fd[i], g, floor) <= 1e-5);
    }
  }

  TEST_CASE("mixed step weights: exact flow matches finite differences, stop-gradient does not") {
    auto cfg = small_config(3, 2);
    cfg.flow = GradientFlow::kStopGradient;
    auto s = make_setup(cfg, 2, 8, 33);
    s.weights = {0.2, 0.3, 0.5};
    const auto& p = s.problem;
    auto coords = sample_coordinates(s.model, 12, 34);
    auto fd_full = finite_difference_grad(s.model, p.data, p.op, s.loss, s.weights, coords);
    auto stored = backprop_stored(s.model, p.data, p.op, s.loss, s.weights);
    auto inv = backprop_invertible(s.model, p.data, p.op, s.loss, s.weights);
    CHECK(relative_grad_difference(inv, stored) <= 1e-8);
    // With the stop-gradient rule the engine differentiates a surrogate in
    // which grad D is held fixed, so it must differ from the true gradient.
    double worst = 0.0;
    for (std::size_t i = 0; i < coords.size(); ++i)
      worst = std::max(worst, rel(fd_full[i],
                                  stored.grads[coords[i].layer][coords[i].index],
                                  1e-3 * stored.max_abs_grad()));
    CHECK(worst > 1e-4);

    cfg.flow = GradientFlow::kExact;
    auto e = make_setup(cfg, 2, 8, 33);
    e.weights = s.weights;
    auto exact = backprop_stored(e.model, p.data, p.op, e.loss, e.weights);
    for (std::size_t i = 0; i < coords.size(); ++i) {
      const double g = exact.grads[coords[i].layer][coords[i].index];
      CHECK(rel(fd_full[i], g, 1e-3 * exact.max_abs_grad()) <= 1e-5);
    }
  }

  TEST_CASE("invertible mode reproduces stored gradients on a desk-size model") {
    ModelConfig cfg = ModelConfig::desk();
    cfg.hidden = 8;
    auto s = make_setup(cfg, 1, 16, 35);
    const auto& p = s.problem;
    auto stored = backprop_stored(s.model, p.data, p.op, s.loss, s.weights);
    auto inv = backprop_invertible(s.model, p.data, p.op, s.loss, s.weights);
    CHECK(inv.loss == stored.loss);
    CHECK(relative_grad_difference(inv, stored) <= 1e-8);
    CHECK(inv.initial_state_error <= 1e-6);
  }

  TEST_CASE("single identity layer: both modes agree bit for bit") {
    auto cfg = small_config(1, 1);
    IRIMModel<double> model(cfg);
    model.initialize();
    model.zero_residuals();
    auto p = random_problem(1, 8, 8, 36);
    MaskedNmseLoss<double> loss(p.image, 1.0, 1);
    auto w = last_step_weights(1);
    auto a = backprop_stored(model, p.data, p.op, loss, w);
    auto b = backprop_invertible(model, p.data, p.op, loss, w);
    CHECK(a.grads == b.grads);
  }

  TEST_CASE("identity chain: G == 0 passes the loss gradient straight through") {
    auto cfg = small_config(1, 3);
    IRIMModel<double> model(cfg);
    model.initialize();
    model.zero_residuals();
    auto p = random_problem(1, 8, 8, 37);
    MaskedNmseLoss<double> loss(p.image, 1.0, 1);
    auto report = backprop_stored(model, p.data, p.op, loss, last_step_weights(1));
    // eta_1 = 0, so the loss is NMSE(0, x) = 1.
    CHECK(report.loss == doctest::Approx(1.0).epsilon(1e-14));
    // U x is undone exactly when G == 0, so U cannot affect the loss.
    for (std::size_t l = 0; l < 3; ++l)
      for (const auto& seg : model.layer(l).segments())
        if (seg.name.rfind("householder", 0) == 0)
          for (double v : segment_view(std::span<const double>(report.grads[l]), seg))
            CHECK(std::abs(v) < 1e-12);
    Rng rng(2);
    auto x = random_tensor({1, cfg.channels, 8, 8}, rng);
    auto up = random_tensor({1, cfg.channels, 8, 8}, rng);
    std::vector<double> scratch(model.layer(0).parameter_count());
    CHECK(max_abs_diff(model.layer(0).vjp(x, up, scratch), up) < 1e-14);
  }

  TEST_CASE("central differences are exact for a loss quadratic in one scale") {
    // Zeroing the gate half of the last kernel freezes the GLU gate at 1/2,
    // so the output is linear in each conv3 scale and the loss is quadratic.
    auto s = make_setup(small_config(1, 1), 1, 8, 38, 1.0);
    auto& layer = s.model.layer(0);
    const std::size_t out = layer.config().channels - layer.config().split;
    const std::size_t d2 = layer.config().factor * layer.config().factor;
    std::size_t scale_index = 0;
    for (const auto& seg : layer.segments()) {
      if (seg.name == "g.conv3.direction") {
        auto v = segment_view(layer.params(), seg);
        for (std::size_t i = 0; i < v.size(); ++i)
          if ((i / d2) % (2 * out) >= out) v[i] = 0.0;
      }
      if (seg.name == "g.conv3.scale") scale_index = seg.offset;
    }
    REQUIRE(scale_index > 0);
    const auto& p = s.problem;
    auto report = backprop_stored(s.model, p.data, p.op, s.loss, s.weights);
    std::vector<ParamCoordinate> c{{0, scale_index}};
    const double g = report.grads[0][scale_index];
    for (double h : {1e-1, 1e-3}) {
      auto fd = finite_difference_grad(s.model, p.data, p.op, s.loss, s.weights, c, h);
      INFO("h ", h, " fd ", fd[0], " g ", g);
      CHECK(std::abs(fd[0] - g) <= 1e-10 * std::max(1.0, std::abs(g)));
    }
  }

  TEST_CASE("finite differences plateau over a range of step sizes") {
    auto s = make_setup(small_config(2, 2), 1, 8, 39);
    const auto& p = s.problem;
    auto report = backprop_stored(s.model, p.data, p.op, s.loss, s.weights);
    auto coords = sample_coordinates(s.model, 5, 40);
    for (double h : {1e-7, 1e-6, 1e-5, 1e-4}) {
      auto fd = finite_difference_grad(s.model, p.data, p.op, s.loss, s.weights, coords, h);
      for (std::size_t i = 0; i < coords.size(); ++i) {
        INFO("h ", h, " coordinate ", i);
        CHECK(rel(fd[i], report.grads[coords[i].layer][coords[i].index],
                  1e-2 * report.max_abs_grad()) <= 1e-4);
      }
    }
  }

  TEST_CASE("stored peak is affine in depth, invertible peak is flat") {
    ModelConfig base = small_config(1, 1, 8, 2);
    MemoryProblem problem{1, 8, 8, 2.0, 0.25, 41};
    auto rows = memory_report<double>(base, {{2, 2}, {2, 4}, {2, 8}, {2, 16}},
                                      {BackpropMode::kStored, BackpropMode::kInvertible},
                                      problem);
    std::vector<double> depth, stored, inv;
    for (const auto& r : rows) {
      if (r.phase != "training") continue;
      if (r.mode == BackpropMode::kStored) {
        depth.push_back(double(r.layers));
        stored.push_back(double(r.peak_elements));
      } else {
        inv.push_back(double(r.peak_elements));
      }
    }
    auto fit = fit_line(depth, stored);
    CHECK(fit.r_squared >= 0.999);
    CHECK(fit.slope > 0.0);
    CHECK(*std::max_element(inv.begin(), inv.end()) <=
          1.1 * *std::min_element(inv.begin(), inv.end()));

    std::ostringstream csv;
    write_memory_csv(csv, rows);
    CHECK(csv.str().rfind("T,L,mode,phase,peak_elements,layer_evals\n", 0) == 0);
  }

  TEST_CASE("invertible training costs at most three layer passes per layer") {
    ModelConfig base = small_config(1, 1, 8, 2);
    MemoryProblem problem{1, 8, 8, 2.0, 0.25, 42};
    auto rows = memory_report<double>(base, {{2, 4}, {1, 1}},
                                      {BackpropMode::kStored, BackpropMode::kInvertible},
                                      problem);
    std::size_t stored_evals = 0, inv_evals = 0, stored_peak = 0, inv_peak = 0,
                inv_test = 0;
    for (const auto& r : rows) {
      if (r.steps != 2 || r.phase != "training") continue;
      (r.mode == BackpropMode::kStored ? stored_evals : inv_evals) = r.layer_evals;
    }
    CHECK(inv_evals <= 3 * stored_evals);
    CHECK(inv_evals == 3 * 8);
    for (const auto& r : rows) {
      if (r.steps != 1) continue;
      if (r.phase == "training")
        (r.mode == BackpropMode::kStored ? stored_peak : inv_peak) = r.peak_elements;
      else if (r.mode == BackpropMode::kInvertible)
        inv_test = r.peak_elements;
    }
    CHECK(stored_peak <= 2 * inv_peak);
    CHECK(inv_peak <= 2 * stored_peak);
    CHECK(inv_peak >= inv_test);
  }

  TEST_CASE("corrupted inverse is caught and named") {
    auto s = make_setup(small_config(2, 3), 1, 8, 43);
    const auto& p = s.problem;
    BackpropOptions opts;
    opts.corrupt_inverse_layer = 4;
    try {
      backprop_invertible(s.model, p.data, p.op, s.loss, s.weights, opts);
      FAIL("expected a drift error");
    } catch (const NumericalError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("step 1, layer 1") != std::string::npos);
    }
    // Stored mode never reconstructs, so the flag is inert there.
    CHECK_NOTHROW(backprop_stored(s.model, p.data, p.op, s.loss, s.weights, opts));
  }

  TEST_CASE("corrupted vjp shows up in exactly one layer") {
    auto s = make_setup(small_config(2, 2), 1, 8, 44);
    const auto& p = s.problem;
    BackpropOptions opts;
    opts.corrupt_vjp_layer = 2;
    auto good = backprop_stored(s.model, p.data, p.op, s.loss, s.weights);
    auto bad = backprop_stored(s.model, p.data, p.op, s.loss, s.weights, opts);
    for (std::size_t l = 0; l < good.grads.size(); ++l)
      CHECK((good.grads[l] == bad.grads[l]) == (l != 2));
  }

  TEST_CASE("option and weight validation") {
    auto s = make_setup(small_config(2, 1), 1, 8, 45);
    const auto& p = s.problem;
    BackpropOptions opts;
    opts.check_every = 0;
    CHECK_THROWS_AS(backprop_invertible(s.model, p.data, p.op, s.loss, s.weights, opts),
                    ConfigError);
    CHECK_THROWS_AS(backprop_stored(s.model, p.data, p.op, s.loss, {1.0}), ConfigError);
    CHECK_THROWS_AS(backprop_stored(s.model, p.data, p.op, s.loss, {0.0, 0.0}),
                    ConfigError);
    CHECK(backprop_mode_from_string("invertible") == BackpropMode::kInvertible);
    CHECK_THROWS_AS(backprop_mode_from_string("x"), ConfigError);
  }

  TEST_CASE("line fit") {
    auto f = fit_line({1, 2, 3, 4}, {3, 5, 7, 9});
    CHECK(f.slope == doctest::Approx(2.0));
    CHECK(f.intercept == doctest::Approx(1.0));
    CHECK(f.r_squared == doctest::Approx(1.0));
    CHECK_THROWS_AS(fit_line({1, 1}, {2, 3}), NumericalError);
  }
}
