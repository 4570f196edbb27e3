#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "wxadapt/core/rng.hpp"
#include "wxadapt/models/network.hpp"
#include "wxadapt/trainer/config.hpp"
#include "wxadapt/trainer/evaluate.hpp"
#include "wxadapt/trainer/losses.hpp"
#include "wxadapt/weathersim/dataset.hpp"

namespace wxa::trainer {

namespace fs = std::filesystem;

/// Samples of the three splits held in memory. `target` stays empty for
/// source-only training.
struct TrainingData {
  PriorKind weather = PriorKind::Haze;
  int height = 0, width = 0;
  int num_classes = 0;
  std::vector<DetectionSample> source, target, val;
};

/// Loads the source and val splits, and the target split only if the
/// configuration trains on it.
TrainingData load_training_data(const sim::DatasetManifest& manifest, const TrainConfig& config, bool with_val = true);

/// One row of the metrics CSV. Invariant:
/// total == det_obj + det_box + det_cls + adv + reg_weighted, evaluated left
/// to right in float.
struct LossRecord {
  long iteration = 0;  // 1-based count of completed steps
  double lr = 0;
  double grl = 0;  // reversal ramp factor in effect
  float total = 0;
  float det_obj = 0, det_box = 0, det_cls = 0;
  float adv = 0;
  float pal_src = 0, pal_tgt = 0;    // prior regression error per domain
  float disc_src = 0, disc_tgt = 0;  // discriminator BCE per domain
  float reg = 0, reg_weighted = 0;   // L1 residual term, and lambda times it
  double grad_extractor = 0, grad_rfrb = 0, grad_head = 0, grad_pen = 0, grad_disc = 0;
  int positives = 0;
};

/// Metrics CSV header (fixed column order) and row formatting. Floats are
/// printed with 9 significant digits so they read back exactly.
std::string metrics_csv_header();
std::string metrics_csv_row(const LossRecord& r);
std::vector<LossRecord> read_metrics_csv(const fs::path& path);

struct EvalRecord {
  long iteration = 0;
  MapResult result;
};
std::string eval_csv_header(int num_classes);
std::string eval_csv_row(const EvalRecord& r);

/// SGD with momentum and L2 weight decay (v = mu v + g + wd w; w -= lr v).
/// Tensors that received no gradient in a step are skipped.
class Sgd {
 public:
  Sgd(std::vector<models::NamedTensor<float>> params, double momentum, double weight_decay);
  void step(double lr);
  void zero_grad();
  /// Scales the gradients of each module (parameter name up to the first '.')
  /// so the module's joint L2 norm is at most `max_norm` (0: no limit).
  /// Returns the largest module norm before scaling.
  double clip_grad_norm(double max_norm);
  [[nodiscard]] const std::vector<models::NamedTensor<float>>& params() const { return params_; }

 private:
  std::vector<models::NamedTensor<float>> params_;
  std::vector<std::vector<float>> velocity_;
  double momentum_, weight_decay_;
};

/// A prepared batch: inputs at the cache level plus per-sample targets.
struct Batch {
  ag::Tensor<float> input;
  std::vector<const AnchorTargets*> anchors;
  std::array<ag::Tensor<float>, 2> priors;  // levels 4 and 5; undefined where unused
};

class Trainer {
 public:
  /// `data` must outlive the trainer.
  Trainer(const TrainConfig& config, const TrainingData& data);

  /// Draws the next batches and runs one optimization step.
  LossRecord step();
  /// One combined forward/backward/update on explicit batches. `tgt` is
  /// ignored by source-only modes.
  LossRecord train_step(const Batch& src, const Batch& tgt, double lr);

  /// Batch of the given sample indices from the source or target split.
  Batch make_batch(bool target, const std::vector<std::size_t>& indices) const;

  [[nodiscard]] models::Detector<float>& model() { return model_; }
  [[nodiscard]] const models::Detector<float>& model() const { return model_; }
  [[nodiscard]] const TrainConfig& config() const { return config_; }
  [[nodiscard]] long iteration() const { return iteration_; }
  [[nodiscard]] const Rng& rng() const { return rng_; }
  /// Target samples drawn into batches so far.
  [[nodiscard]] std::size_t target_samples_drawn() const { return target_drawn_; }
  /// Level the cached inputs sit at: 2 with frozen c1-c2, else 0 (images).
  [[nodiscard]] int cache_level() const { return cache_level_; }

 private:
  std::vector<std::size_t> next_indices(bool target);
  void check_finite(const LossRecord& r) const;

  TrainConfig config_;
  const TrainingData& data_;
  models::Detector<float> model_;
  Sgd sgd_;
  Rng rng_;
  long iteration_ = 0;
  int cache_level_ = 0;
  std::vector<int> pen_levels_;
  models::AnchorGrid grid_;
  std::array<std::vector<float>, 2> cache_;       // stem outputs, source / target
  std::vector<std::size_t> cache_shape_;          // C x H x W of one cached sample
  std::vector<AnchorTargets> anchor_targets_;     // per source sample
  std::array<std::array<std::vector<float>, 2>, 2> prior_cache_;  // [domain][level 4/5], flattened per sample
  std::array<std::size_t, 2> prior_size_{0, 0};   // values per sample at level 4 / 5
  std::array<std::vector<std::size_t>, 2> order_;
  std::array<std::size_t, 2> cursor_{0, 0};
  std::size_t target_drawn_ = 0;
};

struct TrainResult {
  std::vector<LossRecord> metrics;
  std::vector<EvalRecord> evals;
  fs::path checkpoint;
  std::size_t target_samples_drawn = 0;
};

struct TrainHooks {
  std::function<void(const LossRecord&)> on_step;
  std::function<void(const EvalRecord&)> on_eval;
};

/// Full schedule: trains, evaluates on val every eval_interval iterations and
/// after the last one, and writes metrics.csv, eval.csv and checkpoint.wxa
/// into `out_dir` (skipped when empty). Throws DivergenceError when a loss
/// turns non-finite or exceeds the divergence threshold.
TrainResult train(const TrainConfig& config, const TrainingData& data, const fs::path& out_dir,
                  const TrainHooks& hooks = {});

struct PenFitResult {
  std::vector<float> losses;  // PAL before each update, plus the final value
  [[nodiscard]] float initial() const { return losses.front(); }
  [[nodiscard]] float final() const { return losses.back(); }
};

/// Trains only the prior estimation networks on one fixed source + target
/// batch with every other parameter frozen, reporting the prior-adversarial
/// loss before each of `iterations` updates and after the last.
PenFitResult fit_pen_only(const TrainConfig& config, const TrainingData& data, int iterations = 200);

}  // namespace wxa::trainer
