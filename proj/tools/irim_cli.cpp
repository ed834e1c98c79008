// irim: command-line front end for the i-RIM toolkit.
//
//   irim [--config FILE] [--seed N] [--precision f32|f64] [--out-dir DIR] <command>
//
// Commands: synth, train, eval, gradcheck, invcheck, bench-memory. Settings
// come from the JSON config (if any) with command-line flags taking
// precedence; the resolved configuration is written to every output
// directory as resolved_config.json.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "irim/data_synth.hpp"
#include "irim/diagnostics.hpp"
#include "irim/error.hpp"
#include "irim/gradient_engine.hpp"
#include "irim/serialize.hpp"
#include "irim/training.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

#ifndef IRIM_VERSION
#define IRIM_VERSION "0.0.0"
#endif

enum ExitCode : int {
  kOk = 0,
  kUnexpected = 1,
  kConfigError = 2,
  kNumericalError = 3,
  kToleranceFailure = 4,
  kIoError = 5,
};

json default_config() {
  return json::parse(R"({
    "seed": 0,
    "precision": "f64",
    "out_dir": "irim_out",
    "data": {
      "dir": "irim_data",
      "height": 32, "width": 32,
      "n_train": 256, "n_val": 32,
      "min_ellipses": 3, "max_ellipses": 8,
      "min_intensity": 0.1, "max_intensity": 1.0,
      "phase_amplitude": 0.5,
      "accelerations": [4, 8]
    },
    "model": {
      "channels": 16, "steps": 4, "layers": 6,
      "max_factor": 4, "schedule": null,
      "split": 0, "reflections": 3, "hidden": 16,
      "gradient_flow": "exact"
    },
    "train": {
      "iterations": 2000, "batch": 4,
      "lr": 1e-3, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8,
      "keep_fraction": 1.0, "step_weights": null,
      "accelerations": [4], "noise_std": 0.0,
      "mode": "invertible", "log_every": 50
    },
    "eval": {
      "checkpoint": null, "accelerations": [4, 8],
      "crop_fraction": 0.5, "noise_std": 0.0, "ground_truth": false
    },
    "gradcheck": {
      "channels": 16, "steps": 4, "layers": 6, "max_factor": 4, "hidden": 16,
      "size": 16, "coordinates": 20, "h": 1e-6, "keep_fraction": 0.5,
      "identity": false, "corrupt_vjp_layer": -1,
      "fd_tolerance": 1e-5, "mode_tolerance": 1e-7
    },
    "invcheck": {
      "depths": [0, 10, 50, 100, 400], "seeds": 20,
      "channels": 16, "size": 16, "max_factor": 4, "hidden": 16,
      "precisions": ["f32", "f64"],
      "additive_tolerance": 1e-6, "win_fraction": 0.9
    },
    "bench_memory": {
      "steps": [1, 4, 8], "layers": [2, 8, 32, 128],
      "channels": 16, "size": 16, "max_factor": 4, "hidden": 16, "batch": 1,
      "flat_ratio": 1.1, "min_r2": 0.999
    }
  })");
}

// Recursively overlays `patch` onto `base`, rejecting unknown keys so that
// typos in config files fail loudly.
void merge_config(json& base, const json& patch, const std::string& where) {
  if (!patch.is_object()) throw irim::ConfigError(where + " must be a JSON object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string path = where.empty() ? it.key() : where + "." + it.key();
    if (!base.contains(it.key())) throw irim::ConfigError("unknown config key '" + path + "'");
    if (base[it.key()].is_object() && it.value().is_object())
      merge_config(base[it.key()], it.value(), path);
    else
      base[it.key()] = it.value();
  }
}

template <typename V>
V get(const json& j, const char* key) {
  try {
    return j.at(key).get<V>();
  } catch (const json::exception& e) {
    throw irim::ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

irim::PhantomConfig phantom_config(const json& c) {
  const json& d = c["data"];
  irim::PhantomConfig p;
  p.height = get<std::size_t>(d, "height");
  p.width = get<std::size_t>(d, "width");
  p.min_ellipses = get<std::size_t>(d, "min_ellipses");
  p.max_ellipses = get<std::size_t>(d, "max_ellipses");
  p.min_intensity = get<double>(d, "min_intensity");
  p.max_intensity = get<double>(d, "max_intensity");
  p.phase_amplitude = get<double>(d, "phase_amplitude");
  p.seed = get<std::uint64_t>(c, "seed");
  return p;
}

std::vector<irim::MaskSpec> mask_specs(const json& c) {
  std::vector<irim::MaskSpec> specs;
  for (double a : get<std::vector<double>>(c["data"], "accelerations"))
    specs.push_back({a, irim::default_center_fraction(a)});
  return specs;
}

irim::ModelConfig model_config(const json& m, std::uint64_t seed) {
  irim::ModelConfig cfg;
  cfg.channels = get<std::size_t>(m, "channels");
  cfg.steps = get<std::size_t>(m, "steps");
  cfg.layers = get<std::size_t>(m, "layers");
  cfg.schedule = m.contains("schedule") && !m["schedule"].is_null()
                     ? get<std::vector<std::size_t>>(m, "schedule")
                     : irim::fanned_schedule(cfg.layers, get<std::size_t>(m, "max_factor"));
  cfg.split = m.contains("split") ? get<std::size_t>(m, "split") : 0;
  cfg.reflections = m.contains("reflections") ? get<std::size_t>(m, "reflections") : 3;
  cfg.hidden = get<std::size_t>(m, "hidden");
  cfg.flow = irim::gradient_flow_from_string(
      m.contains("gradient_flow") ? get<std::string>(m, "gradient_flow") : "exact");
  cfg.seed = seed;
  cfg.validate();
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  irim::write_file_atomic(path, text);
}

void echo_config(const fs::path& dir, const std::string& command, const json& cfg) {
  fs::create_directories(dir);
  json out = cfg;
  out["command"] = command;
  out["tool_version"] = IRIM_VERSION;
  write_text(dir / "resolved_config.json", out.dump(2) + "\n");
}

irim::BuildResult ensure_dataset(const json& c) {
  const json& d = c["data"];
  return irim::build_dataset(phantom_config(c), get<std::size_t>(d, "n_train"),
                             get<std::size_t>(d, "n_val"), get<std::string>(d, "dir"),
                             mask_specs(c));
}

// ---------------------------------------------------------------- commands

int cmd_synth(const json& c) {
  const fs::path out = get<std::string>(c, "out_dir");
  echo_config(out, "synth", c);
  const auto result = ensure_dataset(c);
  const auto& m = result.manifest;
  std::cout << "dataset " << get<std::string>(c["data"], "dir") << ": " << m.n_train
            << " train + " << m.n_val << " val items, " << m.phantom.height << "x"
            << m.phantom.width << ", " << result.written << " file(s) written\n";
  return kOk;
}

template <typename T>
int run_train(const json& c) {
  const fs::path out = get<std::string>(c, "out_dir");
  echo_config(out, "train", c);
  const json& t = c["train"];
  const std::uint64_t seed = get<std::uint64_t>(c, "seed");

  ensure_dataset(c);
  const auto data = irim::Dataset::open(get<std::string>(c["data"], "dir"));
  irim::IRIMModel<T> model(model_config(c["model"], seed));
  data.manifest().phantom.validate(model.config().max_factor());
  model.initialize();

  irim::TrainConfig tc;
  tc.iterations = get<std::size_t>(t, "iterations");
  tc.batch = get<std::size_t>(t, "batch");
  tc.accelerations = get<std::vector<double>>(t, "accelerations");
  tc.noise_std = get<double>(t, "noise_std");
  tc.loss.keep_fraction = get<double>(t, "keep_fraction");
  if (!t["step_weights"].is_null())
    tc.loss.weights = get<std::vector<double>>(t, "step_weights");
  tc.loss.seed = irim::derive_seed(seed, 3);
  tc.adam = {get<double>(t, "lr"), get<double>(t, "beta1"), get<double>(t, "beta2"),
             get<double>(t, "eps")};
  tc.mode = irim::backprop_mode_from_string(get<std::string>(t, "mode"));
  tc.seed = irim::derive_seed(seed, 2);
  const std::size_t log_every = std::max<std::size_t>(1, get<std::size_t>(t, "log_every"));

  std::ofstream log(out / "train_log.csv");
  irim::write_train_log_header(log);
  irim::AdamState state;
  const auto rows = irim::train(model, data, tc, state, [&](const irim::TrainLogRow& r) {
    irim::write_train_log_row(log, r);
    if (r.iteration % log_every == 0 || r.iteration + 1 == tc.iterations)
      std::printf("iter %6zu  loss %.6f  |grad| %.4g  peak %zu  %.1fs\n", r.iteration,
                  r.loss, r.grad_norm, r.peak_retained_elements, r.wall_ms / 1000.0);
  });
  log.close();
  const std::string hash = irim::save_checkpoint(model, out);
  std::cout << "checkpoint " << (out / "checkpoint.bin").string() << " sha256 " << hash
            << "\n";
  if (!rows.empty())
    std::printf("loss first %.6f last %.6f\n", rows.front().loss, rows.back().loss);
  return kOk;
}

template <typename T>
int run_eval(const json& c) {
  const fs::path out = get<std::string>(c, "out_dir");
  echo_config(out, "eval", c);
  const json& e = c["eval"];
  const auto data = irim::Dataset::open(get<std::string>(c["data"], "dir"));
  std::optional<irim::IRIMModel<T>> model;
  if (!e["checkpoint"].is_null())
    model.emplace(irim::load_checkpoint<T>(get<std::string>(e, "checkpoint")));
  irim::EvalConfig ec;
  ec.accelerations = get<std::vector<double>>(e, "accelerations");
  ec.crop_fraction = get<double>(e, "crop_fraction");
  ec.noise_std = get<double>(e, "noise_std");
  ec.include_ground_truth = get<bool>(e, "ground_truth");
  ec.seed = get<std::uint64_t>(c, "seed");
  const auto rows = irim::evaluate(model ? &*model : nullptr, data, ec);
  {
    std::ofstream f(out / "metrics.csv");
    irim::write_metrics_csv(f, rows);
  }
  const auto summary = irim::summarize(rows);
  std::ofstream f(out / "metrics_summary.csv");
  f << "method,acceleration,count,nmse_mean,nmse_std,psnr_mean,psnr_std,ssim_mean,ssim_std\n";
  std::printf("%-13s %5s %10s %10s %9s %9s %8s %8s\n", "method", "accel", "nmse", "+-",
              "psnr", "+-", "ssim", "+-");
  for (const auto& s : summary) {
    f << s.method << ',' << irim::format_metric(s.acceleration) << ',' << s.count << ','
      << irim::format_metric(s.nmse_mean) << ',' << irim::format_metric(s.nmse_std) << ','
      << irim::format_metric(s.psnr_mean) << ',' << irim::format_metric(s.psnr_std) << ','
      << irim::format_metric(s.ssim_mean) << ',' << irim::format_metric(s.ssim_std) << '\n';
    std::printf("%-13s %5g %10.5f %10.5f %9.3f %9.3f %8.4f %8.4f\n", s.method.c_str(),
                s.acceleration, s.nmse_mean, s.nmse_std, s.psnr_mean, s.psnr_std,
                s.ssim_mean, s.ssim_std);
  }
  return kOk;
}

int cmd_gradcheck(const json& c) {
  const fs::path out = get<std::string>(c, "out_dir");
  echo_config(out, "gradcheck", c);
  const json& g = c["gradcheck"];
  irim::GradcheckConfig gc;
  gc.seed = get<std::uint64_t>(c, "seed");
  gc.model = model_config(g, gc.seed);
  gc.model.flow = irim::gradient_flow_from_string(get<std::string>(c["model"], "gradient_flow"));
  gc.size = get<std::size_t>(g, "size");
  gc.coordinates = get<std::size_t>(g, "coordinates");
  gc.h = get<double>(g, "h");
  gc.keep_fraction = get<double>(g, "keep_fraction");
  gc.identity = get<bool>(g, "identity");
  gc.corrupt_vjp_layer = get<long>(g, "corrupt_vjp_layer");
  if (get<std::string>(c, "precision") != "f64")
    std::cout << "note: gradcheck always runs in double precision\n";

  const auto r = irim::run_gradcheck(gc);
  {
    std::ofstream f(out / "gradcheck_coordinates.csv");
    irim::write_gradcheck_csv(f, r);
  }
  const double fd_tol = get<double>(g, "fd_tolerance");
  const double mode_tol = get<double>(g, "mode_tolerance");
  const bool ok_fd_s = r.fd_vs_stored <= fd_tol;
  const bool ok_fd_i = r.fd_vs_invertible <= fd_tol;
  const bool ok_mode = r.stored_vs_invertible <= mode_tol;
  std::ofstream f(out / "gradcheck.csv");
  f << "check,max_error,tolerance,pass\n"
    << "fd_vs_stored," << irim::format_metric(r.fd_vs_stored) << ','
    << irim::format_metric(fd_tol) << ',' << ok_fd_s << '\n'
    << "fd_vs_invertible," << irim::format_metric(r.fd_vs_invertible) << ','
    << irim::format_metric(fd_tol) << ',' << ok_fd_i << '\n'
    << "stored_vs_invertible," << irim::format_metric(r.stored_vs_invertible) << ','
    << irim::format_metric(mode_tol) << ',' << ok_mode << '\n'
    << "stored_vs_invertible_abs," << irim::format_metric(r.stored_vs_invertible_abs)
    << ",," << 1 << '\n';
  std::printf("finite differences vs stored     : %.3e (tol %.0e) %s\n", r.fd_vs_stored,
              fd_tol, ok_fd_s ? "ok" : "FAIL");
  std::printf("finite differences vs invertible : %.3e (tol %.0e) %s\n",
              r.fd_vs_invertible, fd_tol, ok_fd_i ? "ok" : "FAIL");
  std::printf("stored vs invertible             : %.3e (tol %.0e) %s  [abs %.3e]\n",
              r.stored_vs_invertible, mode_tol, ok_mode ? "ok" : "FAIL",
              r.stored_vs_invertible_abs);
  if (!(ok_fd_s && ok_fd_i && ok_mode)) {
    std::printf("worst finite-difference mismatch in layer %ld\n", r.worst_layer);
    return kToleranceFailure;
  }
  return kOk;
}

int cmd_invcheck(const json& c) {
  const fs::path out = get<std::string>(c, "out_dir");
  echo_config(out, "invcheck", c);
  const json& v = c["invcheck"];
  irim::StackProblem p{get<std::size_t>(v, "channels"), get<std::size_t>(v, "size"),
                       get<std::size_t>(v, "max_factor"), get<std::size_t>(v, "hidden")};
  const auto depths = get<std::vector<std::size_t>>(v, "depths");
  std::vector<std::uint64_t> seeds;
  const std::uint64_t base = get<std::uint64_t>(c, "seed");
  for (std::size_t s = 0; s < get<std::size_t>(v, "seeds"); ++s) seeds.push_back(base + s);
  const auto precisions = get<std::vector<std::string>>(v, "precisions");
  const auto rows = irim::invertibility_sweep(p, depths, seeds, precisions);
  {
    std::ofstream f(out / "invcheck.csv");
    irim::write_invcheck_csv(f, rows);
  }
  bool ok = true;
  const double tol = get<double>(v, "additive_tolerance");
  const double need = get<double>(v, "win_fraction");
  for (const auto& prec : precisions)
    for (std::size_t d : depths) {
      const double worst = irim::worst_additive_error(rows, d, prec);
      const double wins = irim::additive_win_fraction(rows, d, prec);
      std::printf("%s L=%4zu additive max err %.3e   additive<=affine on %5.1f%% of seeds\n",
                  prec.c_str(), d, worst, 100.0 * wins);
      if (prec == "f64" && d == depths.back() && worst > tol) ok = false;
      if (prec == "f32" && d == depths.back() && wins < need) ok = false;
    }
  return ok ? kOk : kToleranceFailure;
}

int cmd_bench_memory(const json& c) {
  const fs::path out = get<std::string>(c, "out_dir");
  echo_config(out, "bench-memory", c);
  const json& b = c["bench_memory"];
  irim::ModelConfig base;
  base.channels = get<std::size_t>(b, "channels");
  base.hidden = get<std::size_t>(b, "hidden");
  base.schedule = irim::fanned_schedule(base.layers, get<std::size_t>(b, "max_factor"));
  base.seed = get<std::uint64_t>(c, "seed");
  irim::MemoryProblem problem;
  problem.batch = get<std::size_t>(b, "batch");
  problem.height = problem.width = get<std::size_t>(b, "size");
  problem.seed = base.seed;
  std::vector<std::pair<std::size_t, std::size_t>> grid{{1, 1}};
  const auto steps = get<std::vector<std::size_t>>(b, "steps");
  const auto layers = get<std::vector<std::size_t>>(b, "layers");
  for (auto t : steps)
    for (auto l : layers) grid.emplace_back(t, l);
  const auto rows = irim::memory_report<double>(
      base, grid, {irim::BackpropMode::kStored, irim::BackpropMode::kInvertible}, problem);
  {
    std::ofstream f(out / "memory.csv");
    irim::write_memory_csv(f, rows);
  }
  std::printf("%4s %5s %-10s %-8s %14s %12s\n", "T", "L", "mode", "phase", "peak_elements",
              "layer_evals");
  for (const auto& r : rows)
    std::printf("%4zu %5zu %-10s %-8s %14zu %12zu\n", r.steps, r.layers,
                irim::to_string(r.mode).c_str(), r.phase.c_str(), r.peak_elements,
                r.layer_evals);

  bool ok = true;
  std::vector<double> tl, stored_peak;
  for (auto t : steps) {
    std::size_t lo = SIZE_MAX, hi = 0;
    for (const auto& r : rows) {
      if (r.steps != t || r.phase != "training" || (r.steps == 1 && r.layers == 1 &&
                                                    std::find(layers.begin(), layers.end(), 1) == layers.end()))
        continue;
      if (r.mode == irim::BackpropMode::kInvertible) {
        lo = std::min(lo, r.peak_elements);
        hi = std::max(hi, r.peak_elements);
      } else {
        tl.push_back(double(r.steps * r.layers));
        stored_peak.push_back(double(r.peak_elements));
      }
    }
    const double ratio = double(hi) / double(lo);
    std::printf("T=%zu invertible training peak max/min over L: %.4f\n", t, ratio);
    if (ratio > get<double>(b, "flat_ratio")) ok = false;
  }
  if (tl.size() >= 2) {
    const auto fit = irim::fit_line(tl, stored_peak);
    std::printf("stored training peak vs T*L: slope %.1f elements/layer, R^2 %.6f\n",
                fit.slope, fit.r_squared);
    if (fit.r_squared < get<double>(b, "min_r2") || !(fit.slope > 0)) ok = false;
  }
  return ok ? kOk : kToleranceFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"i-RIM toolkit: synthetic MRI reconstruction with invertible learning"};
  app.set_version_flag("--version", IRIM_VERSION);
  app.require_subcommand(1);

  std::string config_path, precision, out_dir;
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "base random seed");
  app.add_option("--precision", precision, "f32 or f64")
      ->check(CLI::IsMember({"f32", "f64"}));
  app.add_option("--out-dir", out_dir, "output directory");

  json flags = json::object();
  auto set_flag = [&flags](const std::string& section, const std::string& key) {
    return [&flags, section, key](const auto& v) { flags[section][key] = v; };
  };

  auto* synth = app.add_subcommand("synth", "build the phantom dataset");
  synth->add_option_function<std::string>("--data-dir", set_flag("data", "dir"), "dataset directory");
  synth->add_option_function<std::size_t>("--n-train", set_flag("data", "n_train"), "training items");
  synth->add_option_function<std::size_t>("--n-val", set_flag("data", "n_val"), "validation items");
  synth->add_option_function<std::size_t>("--size", [&flags](std::size_t s) {
    flags["data"]["height"] = s;
    flags["data"]["width"] = s;
  }, "image height and width");

  auto* train = app.add_subcommand("train", "train an i-RIM on the phantom dataset");
  train->add_option_function<std::string>("--data-dir", set_flag("data", "dir"), "dataset directory");
  train->add_option_function<std::size_t>("--iterations", set_flag("train", "iterations"), "optimizer steps");
  train->add_option_function<std::size_t>("--batch", set_flag("train", "batch"), "batch size");
  train->add_option_function<double>("--lr", set_flag("train", "lr"), "Adam learning rate");
  train->add_option_function<double>("--keep-fraction", set_flag("train", "keep_fraction"), "loss pixel keep fraction");
  train->add_option_function<std::string>("--mode", set_flag("train", "mode"), "stored or invertible")
      ->check(CLI::IsMember({"stored", "invertible"}));
  train->add_option_function<std::size_t>("--log-every", set_flag("train", "log_every"), "console log interval");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint and the zero-filled baseline");
  eval->add_option_function<std::string>("--data-dir", set_flag("data", "dir"), "dataset directory");
  eval->add_option_function<std::string>("--checkpoint", set_flag("eval", "checkpoint"), "checkpoint.bin to evaluate");
  eval->add_flag_function("--ground-truth", [&flags](std::int64_t n) { flags["eval"]["ground_truth"] = n > 0; },
                          "add prediction = truth sentinel rows");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite differences vs stored vs invertible gradients");
  gradcheck->add_option_function<std::size_t>("--steps", set_flag("gradcheck", "steps"), "T");
  gradcheck->add_option_function<std::size_t>("--layers", set_flag("gradcheck", "layers"), "L per step");
  gradcheck->add_option_function<std::size_t>("--coordinates", set_flag("gradcheck", "coordinates"), "sampled coordinates");
  gradcheck->add_option_function<long>("--corrupt-vjp-layer", set_flag("gradcheck", "corrupt_vjp_layer"),
                                       "debug: perturb this layer's parameter gradients");
  gradcheck->add_flag_function("--identity", [&flags](std::int64_t n) { flags["gradcheck"]["identity"] = n > 0; },
                               "zero every residual block");

  auto* invcheck = app.add_subcommand("invcheck", "round-trip error of deep additive vs affine stacks");
  invcheck->add_option_function<std::vector<std::size_t>>("--depths", set_flag("invcheck", "depths"), "stack depths");
  invcheck->add_option_function<std::size_t>("--seeds", set_flag("invcheck", "seeds"), "seeds per depth");

  auto* bench = app.add_subcommand("bench-memory", "retained-activation memory over (T, L)");
  bench->add_option_function<std::vector<std::size_t>>("--steps", set_flag("bench_memory", "steps"), "T values");
  bench->add_option_function<std::vector<std::size_t>>("--layers", set_flag("bench_memory", "layers"), "L values");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    json cfg = default_config();
    if (!config_path.empty()) {
      json file;
      try {
        file = json::parse(irim::read_file(config_path));
      } catch (const json::exception& e) {
        throw irim::ConfigError("cannot parse " + config_path + ": " + e.what());
      }
      merge_config(cfg, file, "");
    }
    merge_config(cfg, flags, "");
    if (seed) cfg["seed"] = *seed;
    if (!precision.empty()) cfg["precision"] = precision;
    if (!out_dir.empty()) cfg["out_dir"] = out_dir;
    const bool f32 = get<std::string>(cfg, "precision") == "f32";
    if (!f32 && get<std::string>(cfg, "precision") != "f64")
      throw irim::ConfigError("precision must be f32 or f64");

    if (synth->parsed()) return cmd_synth(cfg);
    if (train->parsed()) return f32 ? run_train<float>(cfg) : run_train<double>(cfg);
    if (eval->parsed()) return f32 ? run_eval<float>(cfg) : run_eval<double>(cfg);
    if (gradcheck->parsed()) return cmd_gradcheck(cfg);
    if (invcheck->parsed()) return cmd_invcheck(cfg);
    if (bench->parsed()) return cmd_bench_memory(cfg);
  } catch (const irim::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const irim::ShapeError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const irim::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumericalError;
  } catch (const irim::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIoError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUnexpected;
  }
  return kUnexpected;
}
