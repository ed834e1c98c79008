#include "irim/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "irim/coupling.hpp"
#include "irim/losses.hpp"
#include "irim/rng.hpp"
#include "irim/training.hpp"

namespace irim {

std::string to_string(CouplingKind kind) {
  return kind == CouplingKind::kAdditive ? "additive" : "affine";
}

template <typename T>
double roundtrip_error(CouplingKind kind, const StackProblem& p, std::size_t layers,
                       std::uint64_t seed) {
  const auto schedule = fanned_schedule(layers, p.max_factor);
  Rng rng(derive_seed(seed, layers));
  Tensor<T> x({1, p.channels, p.size, p.size});
  for (auto& v : x.storage()) v = static_cast<T>(rng.gaussian());
  Tensor<T> y = x;
  // Layer l draws from its own stream, so both kinds share U and G per layer.
  auto run = [&](auto tag) {
    using Layer = decltype(tag);
    std::vector<Layer> stack;
    stack.reserve(layers);
    for (std::size_t l = 0; l < layers; ++l) {
      stack.emplace_back(CouplingConfig{p.channels, p.channels / 2, 3, p.hidden, schedule[l]});
      Rng layer_rng(derive_seed(seed, l));
      stack.back().initialize(layer_rng);
    }
    for (const auto& layer : stack) y = layer.forward(y);
    for (auto it = stack.rbegin(); it != stack.rend(); ++it) y = it->inverse(y);
  };
  const CouplingConfig probe{p.channels, p.channels / 2, 3, p.hidden, 1};
  if (kind == CouplingKind::kAdditive)
    run(AdditiveCouplingLayer<T>(probe));
  else
    run(AffineCouplingLayer<T>(probe));
  double err = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = std::abs(double(y[i]) - double(x[i]));
    if (!std::isfinite(d)) return std::numeric_limits<double>::infinity();
    err = std::max(err, d);
  }
  return err;
}

std::vector<InvcheckRow> invertibility_sweep(const StackProblem& p,
                                             const std::vector<std::size_t>& depths,
                                             const std::vector<std::uint64_t>& seeds,
                                             const std::vector<std::string>& precisions) {
  std::vector<InvcheckRow> rows;
  for (const auto& prec : precisions) {
    if (prec != "f32" && prec != "f64")
      throw ConfigError("unknown precision '" + prec + "' (expected f32 or f64)");
    for (std::size_t depth : depths)
      for (std::uint64_t seed : seeds)
        for (CouplingKind kind : {CouplingKind::kAdditive, CouplingKind::kAffine}) {
          // Both couplings at a given seed see the same input tensor.
          const std::uint64_t s = derive_seed(seed, depth);
          const double err = prec == "f32" ? roundtrip_error<float>(kind, p, depth, s)
                                           : roundtrip_error<double>(kind, p, depth, s);
          rows.push_back({prec, kind, depth, seed, err});
        }
  }
  return rows;
}

void write_invcheck_csv(std::ostream& out, const std::vector<InvcheckRow>& rows) {
  out << "precision,coupling,layers,seed,max_abs_error\n";
  for (const auto& r : rows)
    out << r.precision << ',' << to_string(r.coupling) << ',' << r.layers << ','
        << r.seed << ',' << format_metric(r.max_abs_error) << '\n';
}

double additive_win_fraction(const std::vector<InvcheckRow>& rows, std::size_t layers,
                             const std::string& precision) {
  std::map<std::uint64_t, std::pair<double, double>> by_seed;
  std::set<std::uint64_t> add_seen, aff_seen;
  for (const auto& r : rows) {
    if (r.layers != layers || r.precision != precision) continue;
    if (r.coupling == CouplingKind::kAdditive) {
      by_seed[r.seed].first = r.max_abs_error;
      add_seen.insert(r.seed);
    } else {
      by_seed[r.seed].second = r.max_abs_error;
      aff_seen.insert(r.seed);
    }
  }
  std::size_t total = 0, wins = 0;
  for (const auto& [seed, errs] : by_seed) {
    if (!add_seen.count(seed) || !aff_seen.count(seed)) continue;
    ++total;
    if (errs.first <= errs.second) ++wins;
  }
  if (total == 0) throw ConfigError("no paired rows at the requested depth/precision");
  return double(wins) / double(total);
}

double worst_additive_error(const std::vector<InvcheckRow>& rows, std::size_t layers,
                            const std::string& precision) {
  double worst = -1.0;
  for (const auto& r : rows)
    if (r.layers == layers && r.precision == precision &&
        r.coupling == CouplingKind::kAdditive)
      worst = std::max(worst, r.max_abs_error);
  if (worst < 0.0) throw ConfigError("no additive rows at the requested depth/precision");
  return worst;
}

double fd_relative_error(double fd, double g, double grad_scale, double floor_fraction) {
  return std::abs(fd - g) /
         std::max({std::abs(fd), std::abs(g), floor_fraction * grad_scale,
                   std::numeric_limits<double>::min()});
}

GradcheckResult run_gradcheck(const GradcheckConfig& cfg) {
  ModelConfig mc = cfg.model;
  mc.seed = cfg.seed;
  IRIMModel<double> model(mc);
  model.initialize();
  if (cfg.identity) model.zero_residuals();

  Rng rng(derive_seed(cfg.seed, 11));
  auto image = ComplexField<double>::zeros(cfg.batch, cfg.size, cfg.size);
  for (std::size_t i = 0; i < image.re.size(); ++i) {
    image.re[i] = rng.gaussian();
    image.im[i] = rng.gaussian();
  }
  const FourierOperator<double> op(make_mask(cfg.size, cfg.size, cfg.acceleration,
                                             default_center_fraction(cfg.acceleration),
                                             derive_seed(cfg.seed, 12)));
  const auto data = simulate_measurement(image, op, 0.0, derive_seed(cfg.seed, 13));
  const MaskedNmseLoss<double> loss(image, cfg.keep_fraction, derive_seed(cfg.seed, 14));
  const auto weights = last_step_weights(model.steps());

  BackpropOptions opts;
  opts.corrupt_vjp_layer = cfg.corrupt_vjp_layer;
  const auto stored = backprop(model, data, op, loss, weights, BackpropMode::kStored, opts);
  const auto inv = backprop(model, data, op, loss, weights, BackpropMode::kInvertible, opts);

  auto coords = sample_coordinates(model, std::min(cfg.coordinates, model.parameter_count()),
                                   derive_seed(cfg.seed, 15));
  if (cfg.cover_every_layer) {
    std::set<std::size_t> covered;
    for (const auto& c : coords) covered.insert(c.layer);
    Rng pick(derive_seed(cfg.seed, 16));
    for (std::size_t l = 0; l < model.layer_count(); ++l)
      if (!covered.count(l))
        coords.push_back({l, pick.below(model.layer(l).parameter_count())});
  }
  const auto fd = finite_difference_grad(model, data, op, loss, weights, coords, cfg.h);

  GradcheckResult r;
  const double scale = stored.max_abs_grad();
  double worst = -1.0;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    GradcheckCoordinate row;
    row.at = coords[i];
    row.fd = fd[i];
    row.stored = stored.grads[coords[i].layer][coords[i].index];
    row.invertible = inv.grads[coords[i].layer][coords[i].index];
    row.rel_fd_stored = fd_relative_error(row.fd, row.stored, scale);
    r.fd_vs_stored = std::max(r.fd_vs_stored, row.rel_fd_stored);
    r.fd_vs_invertible =
        std::max(r.fd_vs_invertible, fd_relative_error(row.fd, row.invertible, scale));
    if (row.rel_fd_stored > worst) {
      worst = row.rel_fd_stored;
      r.worst_layer = static_cast<long>(coords[i].layer);
    }
    r.rows.push_back(row);
  }
  r.stored_vs_invertible = relative_grad_difference(inv, stored);
  for (std::size_t l = 0; l < stored.grads.size(); ++l)
    for (std::size_t k = 0; k < stored.grads[l].size(); ++k)
      r.stored_vs_invertible_abs =
          std::max(r.stored_vs_invertible_abs, std::abs(stored.grads[l][k] - inv.grads[l][k]));
  return r;
}

void write_gradcheck_csv(std::ostream& out, const GradcheckResult& r) {
  out << "layer,index,finite_difference,stored,invertible,rel_error\n";
  for (const auto& row : r.rows)
    out << row.at.layer << ',' << row.at.index << ',' << format_metric(row.fd) << ','
        << format_metric(row.stored) << ',' << format_metric(row.invertible) << ','
        << format_metric(row.rel_fd_stored) << '\n';
}

template double roundtrip_error<float>(CouplingKind, const StackProblem&, std::size_t,
                                       std::uint64_t);
template double roundtrip_error<double>(CouplingKind, const StackProblem&, std::size_t,
                                        std::uint64_t);

}  // namespace irim
