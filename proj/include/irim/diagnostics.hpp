#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "irim/gradient_engine.hpp"

namespace irim {

// ---- invertibility depth sweep ----

enum class CouplingKind { kAdditive, kAffine };
std::string to_string(CouplingKind kind);

struct StackProblem {
  std::size_t channels = 16;
  std::size_t size = 16;  // H = W
  std::size_t max_factor = 4;
  std::size_t hidden = 16;
};

/// max |inverse(forward(x)) - x| for a freshly initialized stack of `layers`
/// coupling layers on a standard normal input. Non-finite results are
/// reported as +infinity.
template <typename T>
double roundtrip_error(CouplingKind kind, const StackProblem& p, std::size_t layers,
                       std::uint64_t seed);

struct InvcheckRow {
  std::string precision;
  CouplingKind coupling = CouplingKind::kAdditive;
  std::size_t layers = 0;
  std::uint64_t seed = 0;
  double max_abs_error = 0.0;
};

std::vector<InvcheckRow> invertibility_sweep(const StackProblem& p,
                                             const std::vector<std::size_t>& depths,
                                             const std::vector<std::uint64_t>& seeds,
                                             const std::vector<std::string>& precisions);
void write_invcheck_csv(std::ostream& out, const std::vector<InvcheckRow>& rows);

/// Fraction of seeds at `layers` / `precision` where additive <= affine error.
double additive_win_fraction(const std::vector<InvcheckRow>& rows, std::size_t layers,
                             const std::string& precision);
/// Largest additive error at the given depth and precision.
double worst_additive_error(const std::vector<InvcheckRow>& rows, std::size_t layers,
                            const std::string& precision);

// ---- gradient check ----

struct GradcheckConfig {
  ModelConfig model;         // schedule should be valid for `size`
  std::size_t size = 16;
  std::size_t batch = 1;
  std::size_t coordinates = 20;
  bool cover_every_layer = true;  // add one coordinate per layer when missing
  double h = 1e-6;
  double keep_fraction = 0.5;
  double acceleration = 4.0;
  bool identity = false;  // zero every residual block
  long corrupt_vjp_layer = -1;
  std::uint64_t seed = 0;
};

struct GradcheckCoordinate {
  ParamCoordinate at;
  double fd = 0.0;
  double stored = 0.0;
  double invertible = 0.0;
  double rel_fd_stored = 0.0;
};

struct GradcheckResult {
  double fd_vs_stored = 0.0;          // max relative error over coordinates
  double fd_vs_invertible = 0.0;
  double stored_vs_invertible = 0.0;  // ||a - b||_inf / (||b||_inf + 1e-12)
  double stored_vs_invertible_abs = 0.0;
  long worst_layer = -1;              // layer holding the worst FD coordinate
  std::vector<GradcheckCoordinate> rows;
};

/// |fd - g| / max(|fd|, |g|, floor_fraction * max|grad|).
double fd_relative_error(double fd, double g, double grad_scale,
                         double floor_fraction = 1e-3);

GradcheckResult run_gradcheck(const GradcheckConfig& cfg);
void write_gradcheck_csv(std::ostream& out, const GradcheckResult& r);

}  // namespace irim
