#pragma once

#include <filesystem>
#include <string>

#include <unistd.h>

#include "irim/forward_model.hpp"
#include "irim/irim.hpp"
#include "irim/params.hpp"
#include "irim/rng.hpp"
#include "unit/oracles.hpp"

namespace irim::testing {

// Initialized model with biases and weight-norm scales moved away from 0 / 1
// so that no parameter group sits at a special value.
inline IRIMModel<double> random_model(ModelConfig cfg, std::uint64_t seed) {
  cfg.seed = seed;
  IRIMModel<double> model(cfg);
  model.initialize();
  Rng rng(derive_seed(seed, 999));
  for (std::size_t i = 0; i < model.layer_count(); ++i) {
    auto& layer = model.layer(i);
    for (const auto& s : layer.segments())
      if (s.name.find("bias") != std::string::npos ||
          s.name.find("scale") != std::string::npos)
        for (auto& v : segment_view(layer.params(), s)) v += 0.2 * rng.gaussian();
  }
  return model;
}

inline ModelConfig small_config(std::size_t steps, std::size_t layers,
                                std::size_t channels = 8, std::size_t max_factor = 2) {
  ModelConfig cfg;
  cfg.channels = channels;
  cfg.steps = steps;
  cfg.layers = layers;
  cfg.schedule = fanned_schedule(layers, max_factor);
  cfg.hidden = 6;
  return cfg;
}

struct Problem {
  ComplexField<double> image;
  FourierOperator<double> op;
  ComplexField<double> data;
};

inline Problem random_problem(std::size_t n, std::size_t h, std::size_t w,
                              std::uint64_t seed, double acceleration = 2.0) {
  Rng rng(seed);
  auto image = random_field(n, h, w, rng);
  FourierOperator<double> op(make_mask(h, w, acceleration, 0.25, derive_seed(seed, 1)));
  auto data = simulate_measurement(image, op, 0.0, derive_seed(seed, 2));
  return {std::move(image), std::move(op), std::move(data)};
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("irim_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace irim::testing
