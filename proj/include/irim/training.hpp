#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "irim/data_synth.hpp"
#include "irim/gradient_engine.hpp"
#include "irim/irim.hpp"
#include "irim/tensor.hpp"

namespace irim {

// ---- metrics (real images, shape [H, W] as a rank-2 tensor) ----

/// 10 log10(max(x)^2 / MSE). Returns +infinity when the images are equal.
double psnr(const RealTensor& estimate, const RealTensor& reference);

struct SsimOptions {
  std::size_t window = 7;
  double k1 = 0.01;
  double k2 = 0.03;
};

/// Mean SSIM over all fully contained window positions (uniform window,
/// population statistics), dynamic range max(x) - min(x) of the reference.
double ssim(const RealTensor& estimate, const RealTensor& reference,
            const SsimOptions& opts = {});

/// |field| of batch item b as an [H, W] tensor.
template <typename T>
RealTensor magnitude_image(const ComplexField<T>& field, std::size_t b = 0);

/// Central crop of `fraction` of each dimension (0.5 keeps the middle half).
RealTensor center_crop(const RealTensor& image, double fraction);

/// Writes "inf" for the PSNR sentinel.
std::string format_metric(double v);

// ---- optimizer ----

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> m, v;  // one pair per parameter group
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update of every group. Moments are kept in double
/// regardless of the parameter precision.
template <typename T>
void adam_step(std::vector<std::span<T>> params,
               const std::vector<std::vector<T>>& grads, AdamState& state,
               const AdamConfig& cfg);

// ---- training ----

struct LossConfig {
  double keep_fraction = 0.01;
  std::vector<double> weights;  // empty selects last-step-only
  std::uint64_t seed = 0;
};

struct TrainConfig {
  std::size_t iterations = 2000;
  std::size_t batch = 4;
  std::vector<double> accelerations = {4.0};
  double noise_std = 0.0;
  LossConfig loss;
  AdamConfig adam;
  BackpropMode mode = BackpropMode::kInvertible;
  std::uint64_t seed = 0;
};

struct TrainLogRow {
  std::size_t iteration = 0;
  double wall_ms = 0.0;
  double loss = 0.0;
  double grad_norm = 0.0;
  std::size_t peak_retained_elements = 0;
};

void write_train_log_header(std::ostream& out);
void write_train_log_row(std::ostream& out, const TrainLogRow& row);

/// One training batch: ground truth, per-item masks and measurements.
template <typename T>
struct Batch {
  ComplexField<T> truth;
  FourierOperator<T> op;
  ComplexField<T> data;
  std::vector<std::size_t> items;
};

/// Deterministic batch for iteration `it`: items drawn with replacement
/// from the training split, one acceleration per item.
template <typename T>
Batch<T> sample_batch(const Dataset& data, const TrainConfig& cfg, std::size_t it);

/// Runs cfg.iterations optimizer steps. `on_row` receives every log row as
/// it is produced. Throws NumericalError on a non-finite loss or gradient.
template <typename T>
std::vector<TrainLogRow> train(IRIMModel<T>& model, const Dataset& data,
                               const TrainConfig& cfg, AdamState& state,
                               const std::function<void(const TrainLogRow&)>& on_row = {});

// ---- evaluation ----

struct MetricsRow {
  std::size_t item_id = 0;
  std::string method;  // "irim", "zero_filled" or "ground_truth"
  double acceleration = 0.0;
  double nmse = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct MetricSummary {
  std::string method;
  double acceleration = 0.0;
  double nmse_mean = 0.0, nmse_std = 0.0;
  double psnr_mean = 0.0, psnr_std = 0.0;
  double ssim_mean = 0.0, ssim_std = 0.0;
  std::size_t count = 0;
};

struct EvalConfig {
  std::vector<double> accelerations = {4.0, 8.0};
  double crop_fraction = 0.5;
  double noise_std = 0.0;
  bool include_ground_truth = false;  // sentinel rows (prediction = truth)
  std::uint64_t seed = 0;
};

/// Metrics on magnitude images for a prediction against a reference.
MetricsRow image_metrics(const RealTensor& estimate, const RealTensor& reference,
                         double crop_fraction);

/// Reconstructs every validation item with the model (if given) and the
/// zero-filled adjoint at each acceleration using the dataset's fixed masks.
template <typename T>
std::vector<MetricsRow> evaluate(const IRIMModel<T>* model, const Dataset& data,
                                 const EvalConfig& cfg);

std::vector<MetricSummary> summarize(const std::vector<MetricsRow>& rows);
void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows);

// ---- checkpoints ----

/// JSON description of the architecture; the checkpoint embeds it and its hash.
std::string model_manifest_json(const ModelConfig& cfg, const std::string& precision);
ModelConfig model_config_from_json(const std::string& text);

/// Checkpoint layout: magic "IRCK", u32 version, u64 manifest length,
/// manifest JSON, 64-byte hex manifest hash, u64 group count, then per group
/// a u32 name length, the name and one tensor container.
template <typename T>
std::string encode_checkpoint(const IRIMModel<T>& model);
template <typename T>
IRIMModel<T> decode_checkpoint(std::string_view bytes);

/// Writes checkpoint.bin and model_manifest.json into dir; returns the
/// checkpoint SHA-256.
template <typename T>
std::string save_checkpoint(const IRIMModel<T>& model, const std::filesystem::path& dir);
template <typename T>
IRIMModel<T> load_checkpoint(const std::filesystem::path& file);

template <typename T>
std::string precision_name();

}  // namespace irim
