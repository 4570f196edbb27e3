#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wxadapt/core/sample.hpp"
#include "wxadapt/io/kv_config.hpp"
#include "wxadapt/priors/priors.hpp"
#include "wxadapt/weathersim/scene.hpp"
#include "wxadapt/weathersim/weather.hpp"

namespace wxa::sim {

namespace fs = std::filesystem;

/// Train-source (clean, labelled), train-target (degraded, labels eval-only)
/// and val-target (degraded, evaluation).
enum class Split { Source = 0, Target = 1, Val = 2 };
std::string split_name(Split split);
Split split_from_string(const std::string& name);

struct SynthConfig {
  PriorKind weather = PriorKind::Haze;
  int n_source = 500;
  int n_target = 500;
  int n_val = 200;
  SceneLimits scene;
  // haze
  double beta_min = 0.4, beta_max = 1.0;
  double airlight_min = 0.75, airlight_max = 0.95;
  double airlight_tint = 0.03;  // per-channel jitter around the grey level
  // rain / snow
  std::vector<double> noise_levels{0.2, 0.3, 0.4};
  double angle_min = 70, angle_max = 110;
  int streak_min = 8, streak_max = 20;
  int flake_min = 1, flake_max = 3;
  double intensity_min = 0.5, intensity_max = 0.9;
  BlendMode blend = BlendMode::Additive;
  priors::PriorParams prior_params;
  std::uint64_t seed = 0;

  void validate() const;
  /// Unknown keys are rejected.
  static SynthConfig from_kv(const io::KeyValueConfig& kv);
  [[nodiscard]] io::KeyValueConfig to_kv() const;
};

priors::PriorParams prior_params_from_kv(const io::KeyValueConfig& kv, priors::PriorParams base = {});
void prior_params_to_kv(const priors::PriorParams& p, io::KeyValueConfig& kv);

/// Per-sample record. Paths are relative to the dataset root.
struct SampleRecord {
  std::string id;
  std::string image, labels, gt_prior, est_prior, depth, mask;  // mask empty for haze / clean
  std::uint64_t seed = 0;
  int num_objects = 0;
  double beta = 0;                     // haze; 0 for clean samples
  std::array<float, 3> airlight{1, 1, 1};
  double intensity = 0;                // rain/snow; 0 for clean samples
  double noise_level = 0, angle = 0;
  int streak_length = 0, flake_radius = 0;
};

struct SplitManifest {
  Split split = Split::Source;
  std::string domain;  // "source" | "target"
  bool degraded = false;
  bool labels_eval_only = false;
  std::vector<SampleRecord> records;
};

struct DatasetManifest {
  fs::path root;
  PriorKind weather = PriorKind::Haze;
  int height = 0, width = 0;
  int num_classes = kNumClasses;
  std::uint64_t seed = 0;
  io::KeyValueConfig config;
  std::array<SplitManifest, 3> splits;

  [[nodiscard]] const SplitManifest& split(Split s) const { return splits[static_cast<int>(s)]; }
  [[nodiscard]] std::string to_json() const;
  /// Parses the manifest and checks that every referenced file exists.
  static DatasetManifest load(const fs::path& manifest_file);
};

/// Everything generated for one sample, in memory. The image is already
/// quantized to 8 bits, so it matches what a PNG round trip yields.
struct GeneratedSample {
  DetectionSample sample;
  SampleRecord record;
  Plane mask;  // rain/snow mask of degraded samples
};

GeneratedSample generate_sample(const SynthConfig& config, Split split, int index);

/// Writes <out>/manifest.json plus per-split images/, labels/, priors_gt/,
/// priors_est/, depth/ and masks/. Anything written is removed on failure.
DatasetManifest synthesize_dataset(const SynthConfig& config, const fs::path& out_dir);

/// Loads image, labels, depth and both stored priors of one record.
DetectionSample load_sample(const DatasetManifest& manifest, Split split, const SampleRecord& record);
std::vector<DetectionSample> load_split(const DatasetManifest& manifest, Split split);

/// Number of samples read per split since process start (or the last reset).
std::array<std::size_t, 3> samples_loaded();
void reset_load_counters();

}  // namespace wxa::sim
