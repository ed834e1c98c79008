#include "irim/data_synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <optional>

#include "irim/rng.hpp"
#include "irim/serialize.hpp"
#include "json.hpp"

namespace irim {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kPhantomStream = 0x9a4e7105ULL;
constexpr std::uint64_t kMaskStream = 0x3a5c0001ULL;

std::string item_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "item_%06zu.bin", i);
  return buf;
}

std::string accel_key(double acceleration) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", acceleration);
  return buf;
}

json phantom_json(const PhantomConfig& c) {
  return {{"height", c.height},
          {"width", c.width},
          {"min_ellipses", c.min_ellipses},
          {"max_ellipses", c.max_ellipses},
          {"min_intensity", c.min_intensity},
          {"max_intensity", c.max_intensity},
          {"phase_amplitude", c.phase_amplitude},
          {"seed", c.seed}};
}

PhantomConfig phantom_from_json(const json& j) {
  PhantomConfig c;
  c.height = j.at("height").get<std::size_t>();
  c.width = j.at("width").get<std::size_t>();
  c.min_ellipses = j.at("min_ellipses").get<std::size_t>();
  c.max_ellipses = j.at("max_ellipses").get<std::size_t>();
  c.min_intensity = j.at("min_intensity").get<double>();
  c.max_intensity = j.at("max_intensity").get<double>();
  c.phase_amplitude = j.at("phase_amplitude").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

SamplingMask validation_mask_for(const PhantomConfig& cfg, std::size_t val_position,
                                 const MaskSpec& spec) {
  const std::uint64_t seed =
      derive_seed(derive_seed(cfg.seed, kMaskStream),
                  val_position * 1000 + static_cast<std::uint64_t>(spec.acceleration * 10));
  return make_mask(cfg.height, cfg.width, spec.acceleration, spec.center_fraction, seed);
}

}  // namespace

void PhantomConfig::validate(std::size_t max_factor) const {
  if (height == 0 || width == 0) throw ConfigError("phantom size must be positive");
  if (max_factor == 0) max_factor = 1;
  if (height % max_factor || width % max_factor)
    throw ConfigError("phantom size " + std::to_string(height) + "x" +
                      std::to_string(width) +
                      " is not divisible by the largest downsampling factor " +
                      std::to_string(max_factor));
  if (min_ellipses > max_ellipses)
    throw ConfigError("min_ellipses exceeds max_ellipses");
  if (!(min_intensity > 0.0) || !(max_intensity >= min_intensity))
    throw ConfigError("intensity range must satisfy 0 < min <= max");
  if (!(phase_amplitude >= 0.0)) throw ConfigError("phase amplitude must be >= 0");
}

template <typename T>
ComplexField<T> generate_phantom(const PhantomConfig& cfg, std::uint64_t index) {
  cfg.validate();
  const std::size_t h = cfg.height, w = cfg.width;
  Rng rng(derive_seed(derive_seed(cfg.seed, kPhantomStream), index));
  std::vector<double> mag(h * w, 0.0);
  const std::size_t count =
      cfg.min_ellipses + rng.below(cfg.max_ellipses - cfg.min_ellipses + 1);

  // Pixel centres on [-1, 1]^2; redraw if every ellipse misses every pixel.
  for (int attempt = 0; attempt < 100; ++attempt) {
    std::fill(mag.begin(), mag.end(), 0.0);
    for (std::size_t e = 0; e < count; ++e) {
      const double cx = rng.uniform(-0.6, 0.6), cy = rng.uniform(-0.6, 0.6);
      const double a = rng.uniform(0.1, 0.6), b = rng.uniform(0.1, 0.6);
      const double theta = rng.uniform(0.0, std::numbers::pi);
      const double value = rng.uniform(cfg.min_intensity, cfg.max_intensity);
      const double c = std::cos(theta), s = std::sin(theta);
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
          const double y = (2.0 * i + 1.0) / h - 1.0 - cy;
          const double x = (2.0 * j + 1.0) / w - 1.0 - cx;
          const double u = (c * x + s * y) / a, v = (-s * x + c * y) / b;
          if (u * u + v * v <= 1.0) mag[i * w + j] += value;
        }
    }
    if (count == 0 || *std::max_element(mag.begin(), mag.end()) > 0.0) break;
  }
  const double peak = *std::max_element(mag.begin(), mag.end());
  if (count > 0 && !(peak > 0.0))
    throw NumericalError("generate_phantom: ellipses never covered a pixel");
  if (peak > 0.0)
    for (double& m : mag) m /= peak;

  // Smooth phase: three low-frequency plane waves, normalized to peak 1.
  std::vector<double> phase(h * w, 0.0);
  if (cfg.phase_amplitude > 0.0) {
    for (int k = 0; k < 3; ++k) {
      const double fx = rng.uniform(-1.0, 1.0), fy = rng.uniform(-1.0, 1.0);
      const double off = rng.uniform(0.0, 2.0 * std::numbers::pi);
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
          const double y = (2.0 * i + 1.0) / h - 1.0;
          const double x = (2.0 * j + 1.0) / w - 1.0;
          phase[i * w + j] += std::cos(std::numbers::pi * (fx * x + fy * y) + off);
        }
    }
    double pmax = 0.0;
    for (double p : phase) pmax = std::max(pmax, std::abs(p));
    if (pmax > 0.0)
      for (double& p : phase) p *= cfg.phase_amplitude / pmax;
  }

  auto out = ComplexField<T>::zeros(1, h, w);
  for (std::size_t k = 0; k < h * w; ++k) {
    out.re[k] = static_cast<T>(mag[k] * std::cos(phase[k]));
    out.im[k] = static_cast<T>(mag[k] * std::sin(phase[k]));
  }
  return out;
}

std::string to_string(Split split) {
  return split == Split::kTrain ? "train" : "val";
}

double default_center_fraction(double acceleration) {
  return acceleration >= 8.0 ? 0.04 : 0.08;
}

std::vector<MaskSpec> default_mask_specs() { return {{4.0, 0.08}, {8.0, 0.04}}; }

std::string DatasetManifest::to_json() const {
  json items_j = json::array();
  for (const auto& it : items)
    items_j.push_back({{"file", it.file}, {"split", irim::to_string(it.split)},
                       {"sha256", it.sha256}});
  json masks_j = json::array();
  for (const auto& m : mask_specs)
    masks_j.push_back({{"acceleration", m.acceleration},
                       {"center_fraction", m.center_fraction}});
  json j = {{"format_version", format_version},
            {"phantom", phantom_json(phantom)},
            {"n_train", n_train},
            {"n_val", n_val},
            {"mask_specs", masks_j},
            {"items", items_j},
            {"validation_masks", validation_masks}};
  return j.dump(2) + "\n";
}

DatasetManifest DatasetManifest::from_json(const std::string& text) {
  DatasetManifest m;
  try {
    const json j = json::parse(text);
    m.format_version = j.at("format_version").get<int>();
    if (m.format_version != kFormatVersion)
      throw IoError("unsupported dataset format version " +
                    std::to_string(m.format_version));
    m.phantom = phantom_from_json(j.at("phantom"));
    m.n_train = j.at("n_train").get<std::size_t>();
    m.n_val = j.at("n_val").get<std::size_t>();
    for (const auto& s : j.at("mask_specs"))
      m.mask_specs.push_back({s.at("acceleration").get<double>(),
                              s.at("center_fraction").get<double>()});
    for (const auto& it : j.at("items")) {
      const std::string split = it.at("split").get<std::string>();
      if (split != "train" && split != "val")
        throw IoError("unknown split '" + split + "' in manifest");
      m.items.push_back({it.at("file").get<std::string>(),
                         split == "train" ? Split::kTrain : Split::kValidation,
                         it.at("sha256").get<std::string>()});
    }
    m.validation_masks =
        j.at("validation_masks").get<std::map<std::string, std::vector<std::string>>>();
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed dataset manifest: ") + e.what());
  }
  if (m.items.size() != m.n_train + m.n_val)
    throw IoError("manifest lists " + std::to_string(m.items.size()) +
                  " items but counts say " + std::to_string(m.n_train + m.n_val));
  return m;
}

std::vector<std::size_t> DatasetManifest::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < items.size(); ++i)
    if (items[i].split == split) out.push_back(i);
  return out;
}

BuildResult build_dataset(const PhantomConfig& cfg, std::size_t n_train,
                          std::size_t n_val, const fs::path& dir,
                          const std::vector<MaskSpec>& masks) {
  cfg.validate();
  if (n_train + n_val == 0) throw ConfigError("dataset needs at least one item");
  for (const auto& m : masks)
    if (!(m.acceleration >= 1.0)) throw ConfigError("acceleration must be >= 1");

  DatasetManifest manifest;
  manifest.phantom = cfg;
  manifest.n_train = n_train;
  manifest.n_val = n_val;
  manifest.mask_specs = masks;

  const fs::path manifest_path = dir / "manifest.json";
  std::optional<DatasetManifest> existing;
  if (fs::exists(manifest_path)) {
    existing = DatasetManifest::from_json(read_file(manifest_path));
    if (!(existing->phantom == cfg) || existing->n_train != n_train ||
        existing->n_val != n_val || existing->mask_specs != masks)
      throw ConfigError("existing dataset in " + dir.string() +
                        " was built with a different configuration");
  } else if (fs::exists(dir)) {
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.path().filename().string().rfind("item_", 0) == 0)
        throw ConfigError("directory " + dir.string() +
                          " holds dataset items but no manifest");
  }
  fs::create_directories(dir);

  BuildResult result;
  for (std::size_t i = 0; i < n_train + n_val; ++i) {
    const std::string name = item_name(i);
    const std::string bytes =
        encode_tensor(generate_phantom<double>(cfg, i).as_channels());
    const std::string hash = sha256_hex(bytes);
    const fs::path path = dir / name;
    const bool current = existing && fs::exists(path) &&
                         existing->items[i].sha256 == hash &&
                         sha256_hex(read_file(path)) == hash;
    if (!current) {
      write_file_atomic(path, bytes);
      ++result.written;
    }
    manifest.items.push_back({name, i < n_train ? Split::kTrain : Split::kValidation, hash});
  }
  for (const auto& spec : masks) {
    auto& bits = manifest.validation_masks[accel_key(spec.acceleration)];
    for (std::size_t v = 0; v < n_val; ++v)
      bits.push_back(validation_mask_for(cfg, v, spec).to_bits());
  }
  const std::string text = manifest.to_json();
  if (!existing || read_file(manifest_path) != text)
    write_file_atomic(manifest_path, text);
  result.manifest = std::move(manifest);
  return result;
}

Dataset Dataset::open(const fs::path& dir) {
  const fs::path p = dir / "manifest.json";
  if (!fs::exists(p)) throw IoError("no dataset manifest at " + p.string());
  Dataset d;
  d.manifest_ = DatasetManifest::from_json(read_file(p));
  d.dir_ = dir;
  return d;
}

template <typename T>
ComplexField<T> Dataset::load(std::size_t index) const {
  const auto& item = manifest_.items.at(index);
  const fs::path path = dir_ / item.file;
  if (!fs::exists(path)) throw IoError("dataset file missing: " + item.file);
  const std::string bytes = read_file(path);
  if (sha256_hex(bytes) != item.sha256)
    throw IoError("checksum mismatch for " + item.file);
  auto field = ComplexField<T>::from_channels(decode_tensor<T>(bytes));
  if (field.height() != height() || field.width() != width())
    throw IoError("unexpected image size in " + item.file);
  return field;
}

void Dataset::verify() const {
  for (std::size_t i = 0; i < size(); ++i) load<double>(i);
}

SamplingMask Dataset::validation_mask(std::size_t val_position,
                                      double acceleration) const {
  const auto it = manifest_.validation_masks.find(accel_key(acceleration));
  if (it == manifest_.validation_masks.end() || val_position >= it->second.size())
    throw ConfigError("dataset has no validation mask for acceleration " +
                      accel_key(acceleration));
  double cf = default_center_fraction(acceleration);
  for (const auto& s : manifest_.mask_specs)
    if (s.acceleration == acceleration) cf = s.center_fraction;
  return SamplingMask::from_bits(height(), it->second[val_position], acceleration,
                                 cf, 0);
}

template <typename T>
ComplexField<T> stack_batch(const std::vector<ComplexField<T>>& items) {
  if (items.empty()) throw ShapeError("stack_batch: no items");
  const std::size_t h = items[0].height(), w = items[0].width();
  auto out = ComplexField<T>::zeros(items.size(), h, w);
  for (std::size_t b = 0; b < items.size(); ++b) {
    if (items[b].batch() != 1 || items[b].height() != h || items[b].width() != w)
      throw ShapeError("stack_batch: item " + std::to_string(b) + " has a different shape");
    std::copy(items[b].re.data().begin(), items[b].re.data().end(),
              out.re.data().begin() + b * h * w);
    std::copy(items[b].im.data().begin(), items[b].im.data().end(),
              out.im.data().begin() + b * h * w);
  }
  return out;
}

#define IRIM_INSTANTIATE(T)                                                    \
  template ComplexField<T> generate_phantom(const PhantomConfig&, std::uint64_t); \
  template ComplexField<T> Dataset::load(std::size_t) const;                   \
  template ComplexField<T> stack_batch(const std::vector<ComplexField<T>>&);

IRIM_INSTANTIATE(float)
IRIM_INSTANTIATE(double)
#undef IRIM_INSTANTIATE

}  // namespace irim
