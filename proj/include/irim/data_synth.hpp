#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "irim/forward_model.hpp"
#include "irim/tensor.hpp"

namespace irim {

struct PhantomConfig {
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t min_ellipses = 3;
  std::size_t max_ellipses = 8;
  double min_intensity = 0.1;
  double max_intensity = 1.0;
  double phase_amplitude = 0.5;  // radians, peak of the smooth phase map
  std::uint64_t seed = 0;

  void validate(std::size_t max_factor = 1) const;
  bool operator==(const PhantomConfig&) const = default;
};

/// Sum of random rotated ellipses, magnitude scaled to [0, 1], times a smooth
/// low-frequency phase map. Output is [1, 1, H, W] per part. Deterministic in
/// (cfg.seed, index).
template <typename T>
ComplexField<T> generate_phantom(const PhantomConfig& cfg, std::uint64_t index);

enum class Split { kTrain, kValidation };
std::string to_string(Split split);

/// Acceleration factors with fixed validation masks, and the low-frequency
/// band used for each (0.08 at 4x, 0.04 at 8x by default).
struct MaskSpec {
  double acceleration = 4.0;
  double center_fraction = 0.08;
  bool operator==(const MaskSpec&) const = default;
};
std::vector<MaskSpec> default_mask_specs();
double default_center_fraction(double acceleration);

struct DatasetItem {
  std::string file;
  Split split = Split::kTrain;
  std::string sha256;
};

struct DatasetManifest {
  static constexpr int kFormatVersion = 1;
  int format_version = kFormatVersion;
  PhantomConfig phantom;
  std::size_t n_train = 0;
  std::size_t n_val = 0;
  std::vector<MaskSpec> mask_specs;
  std::vector<DatasetItem> items;
  /// Validation masks per acceleration, one bit string per validation item.
  std::map<std::string, std::vector<std::string>> validation_masks;

  std::string to_json() const;
  static DatasetManifest from_json(const std::string& text);
  std::vector<std::size_t> indices(Split split) const;
};

struct BuildResult {
  DatasetManifest manifest;
  std::size_t written = 0;  // item files (re)written by this call
};

/// Writes item_%06d.bin files (train items first) plus manifest.json. A
/// rebuild with the same configuration only rewrites files whose checksum
/// no longer matches; a different configuration in an existing directory is
/// a ConfigError.
BuildResult build_dataset(const PhantomConfig& cfg, std::size_t n_train,
                          std::size_t n_val, const std::filesystem::path& dir,
                          const std::vector<MaskSpec>& masks = default_mask_specs());

class Dataset {
 public:
  /// Reads manifest.json; throws IoError when missing or malformed.
  static Dataset open(const std::filesystem::path& dir);

  const DatasetManifest& manifest() const { return manifest_; }
  const std::filesystem::path& dir() const { return dir_; }
  std::size_t size() const { return manifest_.items.size(); }
  std::size_t height() const { return manifest_.phantom.height; }
  std::size_t width() const { return manifest_.phantom.width; }

  /// Loads and checksum-verifies one item ([1, 1, H, W] per part).
  template <typename T>
  ComplexField<T> load(std::size_t index) const;
  /// Verifies every file; throws IoError naming the first bad one.
  void verify() const;
  /// Fixed validation mask for the i-th validation item.
  SamplingMask validation_mask(std::size_t val_position, double acceleration) const;

 private:
  DatasetManifest manifest_;
  std::filesystem::path dir_;
};

/// Stacks single-item fields along the batch dimension.
template <typename T>
ComplexField<T> stack_batch(const std::vector<ComplexField<T>>& items);

}  // namespace irim
