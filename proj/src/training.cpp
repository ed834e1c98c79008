#include "irim/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <map>

#include "irim/losses.hpp"
#include "irim/rng.hpp"
#include "irim/serialize.hpp"
#include "json.hpp"

namespace irim {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kBatchStream = 0xba7c4ULL;
constexpr std::uint64_t kMaskStream = 0x3a5c0002ULL;
constexpr std::uint64_t kNoiseStream = 0x4015eULL;
constexpr std::uint64_t kLossStream = 0x1055ULL;
constexpr char kCheckpointMagic[4] = {'I', 'R', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

void require_2d(const RealTensor& x, const char* what) {
  if (x.rank() != 2) throw ShapeError(std::string(what) + ": expected an [H, W] image");
}

}  // namespace

double psnr(const RealTensor& estimate, const RealTensor& reference) {
  estimate.require_same_shape(reference, "psnr");
  if (reference.size() == 0) throw ShapeError("psnr: empty image");
  double mse = 0.0, peak = reference[0];
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double e = estimate[i] - reference[i];
    mse += e * e;
    peak = std::max(peak, reference[i]);
  }
  mse /= double(reference.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const RealTensor& estimate, const RealTensor& reference,
            const SsimOptions& opts) {
  require_2d(reference, "ssim");
  estimate.require_same_shape(reference, "ssim");
  const std::size_t h = reference.extent(0), w = reference.extent(1), k = opts.window;
  if (k == 0 || h < k || w < k)
    throw ShapeError("ssim: image smaller than the " + std::to_string(k) + "x" +
                     std::to_string(k) + " window");
  const auto [lo, hi] = std::minmax_element(reference.data().begin(), reference.data().end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) throw NumericalError("ssim: reference image is constant");
  const double c1 = (opts.k1 * range) * (opts.k1 * range);
  const double c2 = (opts.k2 * range) * (opts.k2 * range);

  // Summed-area tables of x, y, x^2, y^2, xy.
  const std::size_t W = w + 1;
  std::vector<double> sx((h + 1) * W), sy(sx.size()), sxx(sx.size()), syy(sx.size()),
      sxy(sx.size());
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      const double x = estimate[i * w + j], y = reference[i * w + j];
      const std::size_t a = (i + 1) * W + (j + 1), b = i * W + (j + 1),
                        c = (i + 1) * W + j, d = i * W + j;
      sx[a] = x + sx[b] + sx[c] - sx[d];
      sy[a] = y + sy[b] + sy[c] - sy[d];
      sxx[a] = x * x + sxx[b] + sxx[c] - sxx[d];
      syy[a] = y * y + syy[b] + syy[c] - syy[d];
      sxy[a] = x * y + sxy[b] + sxy[c] - sxy[d];
    }
  auto box = [&](const std::vector<double>& s, std::size_t i, std::size_t j) {
    return s[(i + k) * W + (j + k)] - s[i * W + (j + k)] - s[(i + k) * W + j] + s[i * W + j];
  };
  const double n = double(k * k);
  double total = 0.0;
  for (std::size_t i = 0; i + k <= h; ++i)
    for (std::size_t j = 0; j + k <= w; ++j) {
      const double mx = box(sx, i, j) / n, my = box(sy, i, j) / n;
      const double vx = box(sxx, i, j) / n - mx * mx;
      const double vy = box(syy, i, j) / n - my * my;
      const double cxy = box(sxy, i, j) / n - mx * my;
      total += ((2 * mx * my + c1) * (2 * cxy + c2)) /
               ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
  return total / double((h - k + 1) * (w - k + 1));
}

template <typename T>
RealTensor magnitude_image(const ComplexField<T>& field, std::size_t b) {
  const std::size_t h = field.height(), w = field.width();
  if (b >= field.batch()) throw ShapeError("magnitude_image: batch index out of range");
  RealTensor out({h, w});
  for (std::size_t i = 0; i < h * w; ++i)
    out[i] = std::hypot(double(field.re[b * h * w + i]), double(field.im[b * h * w + i]));
  return out;
}

RealTensor center_crop(const RealTensor& image, double fraction) {
  require_2d(image, "center_crop");
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw ConfigError("crop fraction must lie in (0, 1]");
  const std::size_t h = image.extent(0), w = image.extent(1);
  const std::size_t ch = std::max<std::size_t>(1, std::size_t(std::lround(h * fraction)));
  const std::size_t cw = std::max<std::size_t>(1, std::size_t(std::lround(w * fraction)));
  const std::size_t r0 = (h - ch) / 2, c0 = (w - cw) / 2;
  RealTensor out({ch, cw});
  for (std::size_t i = 0; i < ch; ++i)
    for (std::size_t j = 0; j < cw; ++j) out[i * cw + j] = image[(r0 + i) * w + c0 + j];
  return out;
}

std::string format_metric(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

template <typename T>
void adam_step(std::vector<std::span<T>> params,
               const std::vector<std::vector<T>>& grads, AdamState& state,
               const AdamConfig& cfg) {
  if (params.size() != grads.size())
    throw ShapeError("adam_step: parameter and gradient group counts differ");
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t g = 0; g < params.size(); ++g) {
      state.m[g].assign(params[g].size(), 0.0);
      state.v[g].assign(params[g].size(), 0.0);
    }
  }
  if (state.m.size() != params.size())
    throw ShapeError("adam_step: optimizer state has the wrong group count");
  ++state.step;
  const double t = double(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t g = 0; g < params.size(); ++g) {
    auto& m = state.m[g];
    auto& v = state.v[g];
    if (grads[g].size() != params[g].size() || m.size() != params[g].size())
      throw ShapeError("adam_step: group " + std::to_string(g) + " size mismatch");
    for (std::size_t i = 0; i < params[g].size(); ++i) {
      const double gi = grads[g][i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      const double mhat = m[i] / bc1, vhat = v[i] / bc2;
      params[g][i] = static_cast<T>(double(params[g][i]) -
                                    cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

void write_train_log_header(std::ostream& out) {
  out << "iteration,wall_ms,loss,grad_norm,peak_retained_elements\n";
}

void write_train_log_row(std::ostream& out, const TrainLogRow& r) {
  out << r.iteration << ',' << format_metric(r.wall_ms) << ',' << format_metric(r.loss)
      << ',' << format_metric(r.grad_norm) << ',' << r.peak_retained_elements << '\n';
}

template <typename T>
Batch<T> sample_batch(const Dataset& data, const TrainConfig& cfg, std::size_t it) {
  const auto train_items = data.manifest().indices(Split::kTrain);
  if (train_items.empty()) throw ConfigError("dataset has no training items");
  if (cfg.batch == 0) throw ConfigError("batch size must be >= 1");
  if (cfg.accelerations.empty()) throw ConfigError("no training accelerations given");
  Rng rng(derive_seed(derive_seed(cfg.seed, kBatchStream), it));
  std::vector<ComplexField<T>> images;
  std::vector<SamplingMask> masks;
  std::vector<std::size_t> items;
  for (std::size_t b = 0; b < cfg.batch; ++b) {
    const std::size_t item = train_items[rng.below(train_items.size())];
    const double acc = cfg.accelerations[rng.below(cfg.accelerations.size())];
    items.push_back(item);
    images.push_back(data.load<T>(item));
    masks.push_back(make_mask(data.height(), data.width(), acc,
                              default_center_fraction(acc),
                              derive_seed(derive_seed(cfg.seed, kMaskStream),
                                          it * 4096 + b)));
  }
  auto truth = stack_batch(images);
  FourierOperator<T> op(std::move(masks));
  auto measured = simulate_measurement(
      truth, op, cfg.noise_std, derive_seed(derive_seed(cfg.seed, kNoiseStream), it));
  return {std::move(truth), std::move(op), std::move(measured), std::move(items)};
}

template <typename T>
std::vector<TrainLogRow> train(IRIMModel<T>& model, const Dataset& data,
                               const TrainConfig& cfg, AdamState& state,
                               const std::function<void(const TrainLogRow&)>& on_row) {
  data.manifest().phantom.validate(model.config().max_factor());
  const auto weights =
      cfg.loss.weights.empty() ? last_step_weights(model.steps()) : cfg.loss.weights;
  validate_weights(weights);
  std::vector<TrainLogRow> log;
  log.reserve(cfg.iterations);
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    auto batch = sample_batch<T>(data, cfg, it);
    const MaskedNmseLoss<T> loss(batch.truth, cfg.loss.keep_fraction,
                                 derive_seed(derive_seed(cfg.loss.seed, kLossStream), it));
    MemoryMeter meter;
    auto report = backprop(model, batch.data, batch.op, loss, weights, cfg.mode, {}, &meter);
    const double gnorm = report.grad_norm();
    if (!std::isfinite(report.loss) || !std::isfinite(gnorm))
      throw NumericalError("training diverged at iteration " + std::to_string(it) +
                           " (loss " + std::to_string(report.loss) + ", grad norm " +
                           std::to_string(gnorm) + ")");
    std::vector<std::span<T>> params;
    for (std::size_t l = 0; l < model.layer_count(); ++l)
      params.push_back(model.layer(l).params());
    adam_step(params, report.grads, state, cfg.adam);

    TrainLogRow row;
    row.iteration = it;
    row.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - start)
                      .count();
    row.loss = report.loss;
    row.grad_norm = gnorm;
    row.peak_retained_elements = report.peak_elements;
    log.push_back(row);
    if (on_row) on_row(row);
  }
  return log;
}

MetricsRow image_metrics(const RealTensor& estimate, const RealTensor& reference,
                         double crop_fraction) {
  const RealTensor e = center_crop(estimate, crop_fraction);
  const RealTensor r = center_crop(reference, crop_fraction);
  MetricsRow row;
  row.nmse = nmse(e, r);
  row.psnr = psnr(e, r);
  row.ssim = ssim(e, r);
  return row;
}

template <typename T>
std::vector<MetricsRow> evaluate(const IRIMModel<T>* model, const Dataset& data,
                                 const EvalConfig& cfg) {
  const auto val = data.manifest().indices(Split::kValidation);
  if (val.empty()) throw ConfigError("dataset has no validation items");
  std::vector<MetricsRow> rows;
  for (double acc : cfg.accelerations) {
    for (std::size_t v = 0; v < val.size(); ++v) {
      const auto truth = data.load<T>(val[v]);
      const FourierOperator<T> op(data.validation_mask(v, acc));
      const auto measured = simulate_measurement(
          truth, op, cfg.noise_std, derive_seed(derive_seed(cfg.seed, kNoiseStream), v));
      const RealTensor ref = magnitude_image(truth);
      auto add = [&](const std::string& method, const RealTensor& est) {
        MetricsRow row = image_metrics(est, ref, cfg.crop_fraction);
        row.item_id = val[v];
        row.method = method;
        row.acceleration = acc;
        rows.push_back(row);
      };
      if (cfg.include_ground_truth) add("ground_truth", ref);
      add("zero_filled", magnitude_image(op.apply_adjoint(measured)));
      if (model) {
        const auto r = irim_rollout(*model, measured, op, model->steps());
        add("irim", magnitude_image(r.estimate()));
      }
    }
  }
  return rows;
}

std::vector<MetricSummary> summarize(const std::vector<MetricsRow>& rows) {
  std::map<std::pair<std::string, double>, std::vector<const MetricsRow*>> groups;
  for (const auto& r : rows) groups[{r.method, r.acceleration}].push_back(&r);
  std::vector<MetricSummary> out;
  for (const auto& [key, members] : groups) {
    MetricSummary s;
    s.method = key.first;
    s.acceleration = key.second;
    s.count = members.size();
    auto stats = [&](auto field, double& mean, double& sd) {
      mean = 0.0;
      for (const auto* m : members) mean += field(*m);
      mean /= double(members.size());
      double var = 0.0;
      for (const auto* m : members) var += (field(*m) - mean) * (field(*m) - mean);
      sd = std::sqrt(var / double(members.size()));
    };
    stats([](const MetricsRow& r) { return r.nmse; }, s.nmse_mean, s.nmse_std);
    stats([](const MetricsRow& r) { return r.psnr; }, s.psnr_mean, s.psnr_std);
    stats([](const MetricsRow& r) { return r.ssim; }, s.ssim_mean, s.ssim_std);
    out.push_back(s);
  }
  return out;
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
  out << "item_id,method,acceleration,nmse,psnr,ssim\n";
  for (const auto& r : rows)
    out << r.item_id << ',' << r.method << ',' << format_metric(r.acceleration) << ','
        << format_metric(r.nmse) << ',' << format_metric(r.psnr) << ','
        << format_metric(r.ssim) << '\n';
}

template <>
std::string precision_name<float>() { return "f32"; }
template <>
std::string precision_name<double>() { return "f64"; }

std::string model_manifest_json(const ModelConfig& cfg, const std::string& precision) {
  json j = {{"format_version", 1},
            {"channels", cfg.channels},
            {"steps", cfg.steps},
            {"layers", cfg.layers},
            {"schedule", cfg.schedule},
            {"split", cfg.effective_split()},
            {"reflections", cfg.reflections},
            {"hidden_channels", cfg.hidden},
            {"precision", precision},
            {"gradient_flow", to_string(cfg.flow)},
            {"seed", cfg.seed}};
  return j.dump(2) + "\n";
}

ModelConfig model_config_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    ModelConfig cfg;
    cfg.channels = j.at("channels").get<std::size_t>();
    cfg.steps = j.at("steps").get<std::size_t>();
    cfg.layers = j.at("layers").get<std::size_t>();
    cfg.schedule = j.at("schedule").get<std::vector<std::size_t>>();
    cfg.split = j.at("split").get<std::size_t>();
    cfg.reflections = j.at("reflections").get<std::size_t>();
    cfg.hidden = j.at("hidden_channels").get<std::size_t>();
    cfg.flow = gradient_flow_from_string(j.at("gradient_flow").get<std::string>());
    cfg.seed = j.at("seed").get<std::uint64_t>();
    return cfg;
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed model manifest: ") + e.what());
  }
}

template <typename T>
std::string encode_checkpoint(const IRIMModel<T>& model) {
  const std::string manifest = model_manifest_json(model.config(), precision_name<T>());
  std::string out(kCheckpointMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u64(out, manifest.size());
  out += manifest;
  out += sha256_hex(manifest);
  std::size_t groups = 0;
  for (std::size_t l = 0; l < model.layer_count(); ++l)
    groups += model.layer(l).segments().size();
  put_u64(out, groups);
  const std::size_t L = model.config().layers;
  for (std::size_t g = 0; g < model.layer_count(); ++g) {
    const auto& layer = model.layer(g);
    for (const auto& seg : layer.segments()) {
      const std::string name = "step" + std::to_string(g / L) + ".layer" +
                               std::to_string(g % L) + "." + seg.name;
      put_u32(out, static_cast<std::uint32_t>(name.size()));
      out += name;
      const auto view = segment_view(layer.params(), seg);
      out += encode_tensor(Tensor<T>(seg.shape, std::vector<T>(view.begin(), view.end())));
    }
  }
  return out;
}

template <typename T>
IRIMModel<T> decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
    throw IoError("not a checkpoint (bad magic)");
  std::size_t pos = 4;
  const std::uint32_t version = get_u32(bytes, pos);
  if (version != kCheckpointVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  const std::uint64_t mlen = get_u64(bytes, pos);
  if (pos + mlen + 64 > bytes.size()) throw IoError("checkpoint truncated");
  const std::string manifest(bytes.substr(pos, mlen));
  pos += mlen;
  const std::string hash(bytes.substr(pos, 64));
  pos += 64;
  if (sha256_hex(manifest) != hash) throw IoError("checkpoint manifest hash mismatch");
  std::string stored_precision;
  try {
    stored_precision = json::parse(manifest).at("precision").get<std::string>();
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed model manifest: ") + e.what());
  }
  if (stored_precision != precision_name<T>())
    throw IoError("checkpoint holds " + stored_precision + " parameters, requested " +
                  precision_name<T>());
  IRIMModel<T> model(model_config_from_json(manifest));
  const std::size_t L = model.config().layers;
  std::map<std::string, std::pair<std::size_t, const ParamSegment*>> expected;
  for (std::size_t g = 0; g < model.layer_count(); ++g)
    for (const auto& seg : model.layer(g).segments())
      expected["step" + std::to_string(g / L) + ".layer" + std::to_string(g % L) + "." +
               seg.name] = {g, &seg};
  const std::uint64_t groups = get_u64(bytes, pos);
  if (groups != expected.size())
    throw IoError("checkpoint has " + std::to_string(groups) + " groups, model needs " +
                  std::to_string(expected.size()));
  for (std::uint64_t k = 0; k < groups; ++k) {
    const std::uint32_t nlen = get_u32(bytes, pos);
    if (pos + nlen > bytes.size()) throw IoError("checkpoint truncated");
    const std::string name(bytes.substr(pos, nlen));
    pos += nlen;
    const auto it = expected.find(name);
    if (it == expected.end()) throw IoError("unexpected checkpoint group " + name);
    const auto t = decode_tensor_at<T>(bytes, pos);
    const auto& [layer, seg] = it->second;
    if (t.shape() != seg->shape) throw IoError("shape mismatch in group " + name);
    auto view = segment_view(model.layer(layer).params(), *seg);
    std::copy(t.data().begin(), t.data().end(), view.begin());
  }
  if (pos != bytes.size()) throw IoError("trailing bytes after checkpoint");
  return model;
}

template <typename T>
std::string save_checkpoint(const IRIMModel<T>& model, const fs::path& dir) {
  fs::create_directories(dir);
  const std::string bytes = encode_checkpoint(model);
  write_file_atomic(dir / "checkpoint.bin", bytes);
  write_file_atomic(dir / "model_manifest.json",
                    model_manifest_json(model.config(), precision_name<T>()));
  return sha256_hex(bytes);
}

template <typename T>
IRIMModel<T> load_checkpoint(const fs::path& file) {
  if (!fs::exists(file)) throw IoError("checkpoint not found: " + file.string());
  return decode_checkpoint<T>(read_file(file));
}

#define IRIM_INSTANTIATE(T)                                                         \
  template RealTensor magnitude_image(const ComplexField<T>&, std::size_t);         \
  template void adam_step(std::vector<std::span<T>>, const std::vector<std::vector<T>>&, \
                          AdamState&, const AdamConfig&);                           \
  template Batch<T> sample_batch(const Dataset&, const TrainConfig&, std::size_t);  \
  template std::vector<TrainLogRow> train(IRIMModel<T>&, const Dataset&,            \
                                          const TrainConfig&, AdamState&,           \
                                          const std::function<void(const TrainLogRow&)>&); \
  template std::vector<MetricsRow> evaluate(const IRIMModel<T>*, const Dataset&,    \
                                            const EvalConfig&);                     \
  template std::string encode_checkpoint(const IRIMModel<T>&);                      \
  template IRIMModel<T> decode_checkpoint(std::string_view);                        \
  template std::string save_checkpoint(const IRIMModel<T>&, const fs::path&);       \
  template IRIMModel<T> load_checkpoint(const fs::path&);

IRIM_INSTANTIATE(float)
IRIM_INSTANTIATE(double)
#undef IRIM_INSTANTIATE

}  // namespace irim
