#include <sstream>

#include "doctest.h"
#include "irim/diagnostics.hpp"
#include "irim/error.hpp"

using namespace irim;

TEST_SUITE("diagnostics") {
  TEST_CASE("empty stacks round trip exactly") {
    const StackProblem p{8, 8, 2, 4};
    CHECK(roundtrip_error<double>(CouplingKind::kAdditive, p, 0, 1) == 0.0);
    CHECK(roundtrip_error<float>(CouplingKind::kAffine, p, 0, 1) == 0.0);
  }

  TEST_CASE("shallow stacks invert to rounding") {
    const StackProblem p{8, 8, 2, 4};
    CHECK(roundtrip_error<double>(CouplingKind::kAdditive, p, 6, 3) <= 1e-12);
    CHECK(roundtrip_error<double>(CouplingKind::kAffine, p, 6, 3) <= 1e-10);
    CHECK(roundtrip_error<float>(CouplingKind::kAdditive, p, 6, 3) <= 1e-4);
  }

  TEST_CASE("sweep rows and summaries") {
    const StackProblem p{8, 8, 2, 4};
    const auto rows = invertibility_sweep(p, {0, 4}, {1, 2, 3}, {"f64"});
    CHECK(rows.size() == 2 * 3 * 2);
    CHECK(worst_additive_error(rows, 0, "f64") == 0.0);
    CHECK(additive_win_fraction(rows, 0, "f64") == 1.0);
    const double w = additive_win_fraction(rows, 4, "f64");
    CHECK(w >= 0.0);
    CHECK(w <= 1.0);
    CHECK_THROWS_AS(additive_win_fraction(rows, 5, "f64"), ConfigError);
    CHECK_THROWS_AS(worst_additive_error(rows, 4, "f32"), ConfigError);
    CHECK_THROWS_AS(invertibility_sweep(p, {1}, {1}, {"f16"}), ConfigError);
    std::ostringstream out;
    write_invcheck_csv(out, rows);
    CHECK(out.str().rfind("precision,coupling,layers,seed,max_abs_error\n", 0) == 0);
  }

  TEST_CASE("relative error uses the floor for tiny gradients") {
    CHECK(fd_relative_error(1.0, 1.0, 5.0) == 0.0);
    CHECK(fd_relative_error(1.0, 0.5, 5.0) == doctest::Approx(0.5));
    CHECK(fd_relative_error(1e-9, 0.0, 5.0) == doctest::Approx(1e-9 / 5e-3));
  }

  TEST_CASE("gradcheck passes on a small model and covers every layer") {
    GradcheckConfig gc;
    gc.model.channels = 8;
    gc.model.steps = 2;
    gc.model.layers = 3;
    gc.model.schedule = fanned_schedule(3, 2);
    gc.model.hidden = 4;
    gc.size = 16;
    gc.coordinates = 2;
    gc.seed = 4;
    const auto r = run_gradcheck(gc);
    CHECK(r.rows.size() >= 6);
    CHECK(r.fd_vs_stored <= 1e-5);
    CHECK(r.fd_vs_invertible <= 1e-5);
    CHECK(r.stored_vs_invertible <= 1e-8);
    std::ostringstream out;
    write_gradcheck_csv(out, r);
    CHECK(out.str().rfind("layer,index,finite_difference,stored,invertible,rel_error\n", 0) == 0);
  }

  TEST_CASE("gradcheck points at a corrupted layer") {
    GradcheckConfig gc;
    gc.model.channels = 8;
    gc.model.steps = 2;
    gc.model.layers = 2;
    gc.model.schedule = fanned_schedule(2, 2);
    gc.model.hidden = 4;
    gc.size = 16;
    gc.coordinates = 8;
    gc.corrupt_vjp_layer = 2;
    gc.seed = 6;
    const auto r = run_gradcheck(gc);
    CHECK(r.fd_vs_stored > 1e-5);
    CHECK(r.worst_layer == 2);
  }
}
