#include "doctest.h"
#include "irim/fourier.hpp"
#include "irim/irim.hpp"
#include "unit/fixtures.hpp"

using namespace irim;
using namespace irim::testing;

TEST_SUITE("irim core") {
  TEST_CASE("fanned schedules") {
    CHECK(fanned_schedule(6, 4) == std::vector<std::size_t>{1, 2, 4, 4, 2, 1});
    CHECK(fanned_schedule(10, 16) ==
          std::vector<std::size_t>{1, 2, 4, 8, 16, 16, 8, 4, 2, 1});
    CHECK(fanned_schedule(1, 4) == std::vector<std::size_t>{1});
    CHECK(fanned_schedule(0, 4).empty());
    CHECK(fanned_schedule(5, 2) == std::vector<std::size_t>{1, 2, 2, 2, 1});
    CHECK(ModelConfig::desk().schedule == fanned_schedule(6, 4));
  }

  TEST_CASE("model config validation") {
    ModelConfig cfg;
    cfg.channels = 3;
    CHECK_THROWS_AS(IRIMModel<double>{cfg}, ConfigError);
    cfg = ModelConfig{};
    cfg.schedule = {1, 2};
    CHECK_THROWS_AS(IRIMModel<double>{cfg}, ConfigError);
    cfg = ModelConfig{};
    cfg.steps = 0;
    CHECK_THROWS_AS(IRIMModel<double>{cfg}, ConfigError);
    CHECK(gradient_flow_from_string("stop_gradient") == GradientFlow::kStopGradient);
    CHECK_THROWS_AS(gradient_flow_from_string("sometimes"), ConfigError);
  }

  TEST_CASE("gradient injection layout") {
    auto zero = ComplexField<double>::zeros(2, 4, 4);
    auto z = gradient_injection(zero, 8);
    CHECK(z.shape() == Shape{2, 6, 4, 4});
    CHECK(max_abs(z) == 0.0);

    auto g = ComplexField<double>::zeros(1, 4, 4);
    g.re.fill(1.0);
    g.im.fill(2.0);
    auto out = gradient_injection(g, 8);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) {
        CHECK(out.at(0, 0, i, j) == 1.0);
        CHECK(out.at(0, 1, i, j) == 2.0);
        for (std::size_t c = 2; c < 6; ++c) CHECK(out.at(0, c, i, j) == 0.0);
      }

    Rng rng(3);
    auto r = random_field(2, 4, 4, rng);
    auto padded = gradient_injection(r, 16);
    double s = 0.0;
    for (std::size_t v : {0, 1})
      for (std::size_t c = 2; c < 14; ++c)
        for (std::size_t i = 0; i < 16; ++i) s += padded.at(v, c, i / 4, i % 4);
    CHECK(s == 0.0);
    CHECK_THROWS_AS(gradient_injection(r, 3), ConfigError);
  }

  TEST_CASE("identity step at a data-consistent fixed point") {
    auto cfg = small_config(1, 2);
    IRIMModel<double> model(cfg);
    model.initialize();
    model.zero_residuals();
    auto p = random_problem(1, 8, 8, 5);
    Rng rng(6);
    auto state = MachineState<double>::from_parts(
        p.image, random_tensor({1, cfg.channels - 2, 8, 8}, rng), 3);
    auto next = irim_forward_step(state, p.data, p.op, model.step(0));
    CHECK(next.step == 4);
    CHECK(max_abs_diff(next.values, state.values) < 1e-12);
  }

  TEST_CASE("one step from zero with full mask and identity h") {
    auto cfg = small_config(1, 1);
    IRIMModel<double> model(cfg);
    model.initialize();
    model.zero_residuals();
    Rng rng(8);
    auto d = random_field(1, 4, 4, rng);
    FourierOperator<double> op(SamplingMask::full(4, 4));
    auto state = MachineState<double>::zeros(1, cfg.channels, 4, 4);
    auto next = irim_forward_step(state, d, op, model.step(0));
    const auto eta = next.eta();
    // U^T U is the identity up to rounding.
    CHECK(max_abs(eta.re) < 1e-14);
    CHECK(max_abs(eta.im) < 1e-14);
    const auto adj = idft2(d);
    const auto mem = next.memory();
    for (std::size_t i = 0; i < 16; ++i) {
      CHECK(mem.at(0, 0, i / 4, i % 4) == doctest::Approx(-adj.re[i]).epsilon(1e-12));
      CHECK(mem.at(0, 1, i / 4, i % 4) == doctest::Approx(-adj.im[i]).epsilon(1e-12));
    }
  }

  TEST_CASE("forward and reverse steps are mutual inverses") {
    auto cfg = small_config(1, 4);
    auto model = random_model(cfg, 11);
    auto p = random_problem(2, 8, 8, 12);
    Rng rng(13);
    MachineState<double> state{random_tensor({2, cfg.channels, 8, 8}, rng), 0};
    auto next = irim_forward_step(state, p.data, p.op, model.step(0));
    auto back = irim_reverse_step(next, p.data, p.op, model.step(0));
    CHECK(back.step == 0);
    CHECK(max_abs_diff(back.values, state.values) < 1e-8);

    // Totality: reversing an arbitrary state is well defined.
    MachineState<double> arbitrary{random_tensor({2, cfg.channels, 8, 8}, rng), 1};
    auto rev = irim_reverse_step(arbitrary, p.data, p.op, model.step(0));
    CHECK(all_finite(rev.values));
  }

  TEST_CASE("identity h: reverse subtracts the same injected gradient") {
    auto cfg = small_config(1, 2);
    IRIMModel<double> model(cfg);
    model.initialize();
    model.zero_residuals();
    auto p = random_problem(1, 8, 8, 14);
    Rng rng(15);
    MachineState<double> state{random_tensor({1, cfg.channels, 8, 8}, rng), 0};
    auto next = irim_forward_step(state, p.data, p.op, model.step(0));
    auto back = irim_reverse_step(next, p.data, p.op, model.step(0));
    CHECK(max_abs_diff(back.values, state.values) < 1e-13);
  }

  TEST_CASE("step network composition") {
    Rng rng(16);
    auto x = random_tensor({1, 8, 8, 8}, rng);
    StepNetwork<double> empty;
    CHECK(empty.forward(x) == x);
    CHECK(empty.inverse(x) == x);

    auto model = random_model(small_config(1, 1), 17);
    const auto& single = model.step(0);
    CHECK(single.forward(x) == single.layer(0).forward(x));
    CHECK(single.inverse(x) == single.layer(0).inverse(x));

    auto deep = random_model(small_config(1, 12), 18);
    auto y = deep.step(0).forward(x);
    CHECK(max_abs_diff(deep.step(0).inverse(y), x) < 1e-10);
  }

  TEST_CASE("rollout basics") {
    auto cfg = small_config(3, 2);
    auto model = random_model(cfg, 19);
    auto p = random_problem(1, 8, 8, 20);

    auto r0 = irim_rollout(model, p.data, p.op, 0);
    CHECK(max_abs(r0.estimate().re) == 0.0);
    CHECK(max_abs(r0.estimate().im) == 0.0);
    CHECK_THROWS_AS(irim_rollout(model, p.data, p.op, 4), ConfigError);

    auto a = irim_rollout(model, p.data, p.op, 3, true);
    auto b = irim_rollout(model, p.data, p.op, 3, true);
    CHECK(a.trajectory.size() == 4);
    CHECK(a.final_state.values == b.final_state.values);
    CHECK(a.final_state.values.shape() == Shape{1, cfg.channels, 8, 8});
    CHECK(a.trajectory.back().values == a.final_state.values);
  }

  TEST_CASE("identity h never moves eta") {
    auto cfg = small_config(4, 2);
    IRIMModel<double> model(cfg);
    model.initialize();
    model.zero_residuals();
    auto p = random_problem(1, 8, 8, 21);
    auto r = irim_rollout(model, p.data, p.op, 4, true);
    for (const auto& s : r.trajectory) {
      CHECK(max_abs(s.eta().re) < 1e-13);
      CHECK(max_abs(s.eta().im) < 1e-13);
    }
  }

  TEST_CASE("memory enters the step only additively") {
    auto cfg = small_config(1, 3);
    auto model = random_model(cfg, 22);
    auto p = random_problem(1, 8, 8, 23);
    Rng rng(24);
    MachineState<double> state{random_tensor({1, cfg.channels, 8, 8}, rng), 0};
    auto delta = random_tensor({1, cfg.channels, 8, 8}, rng);
    assign_channels(delta, 0, Tensor<double>({1, 2, 8, 8}));
    MachineState<double> moved{state.values + delta, 0};
    auto diff = inject(moved, p.data, p.op) - inject(state, p.data, p.op);
    CHECK(max_abs_diff(diff, delta) < 1e-14);
  }

  TEST_CASE("full trajectory reverses to the zero state") {
    ModelConfig cfg = small_config(8, 10, 8, 4);
    auto model = random_model(cfg, 25);
    auto p = random_problem(1, 16, 16, 26);
    auto r = irim_rollout(model, p.data, p.op, 8, true);
    auto state = r.final_state;
    double worst = 0.0;
    for (std::size_t t = 8; t-- > 0;) {
      state = irim_reverse_step(state, p.data, p.op, model.step(t));
      worst = std::max(worst, max_abs_diff(state.values, r.trajectory[t].values));
    }
    CHECK(state.step == 0);
    CHECK(max_abs(state.values) <= 1e-6);
    CHECK(worst <= 1e-6);
  }
}
