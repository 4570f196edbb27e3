#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wxadapt/io/kv_config.hpp"
#include "wxadapt/models/network.hpp"
#include "wxadapt/priors/priors.hpp"

namespace wxa::trainer {

/// Ablation configurations. D = plain domain discriminator, P = prior
/// estimation network, R = residual feature recovery block; digits name the
/// blocks they attach to.
enum class Mode { Frcnn, D5, D45, D5R5, P5R5, P45, P45R45 };

std::string mode_name(Mode mode);
/// Accepts "frcnn", "d5", "d45", "d5r5", "p5r5", "p45", "p45r45" in any case,
/// with optional "frcnn+" prefix and '+' / '_' separators.
Mode mode_from_string(const std::string& name);
/// Row label in the style "FRCNN+P45+R45".
std::string mode_label(Mode mode);

struct ModeLevels {
  std::vector<int> pen, rfrb, disc;
};
ModeLevels mode_levels(Mode mode);

struct TrainConfig {
  Mode mode = Mode::P45R45;
  long iterations = 4000;
  double lr = 1e-2;
  double lr_low = 1e-3;
  double lr_drop = 5.0 / 7.0;  // fraction of iterations run at `lr`
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double clip_grad_norm = 10;   // per-module gradient L2 cap; 0: none
  int batch_source = 4;
  int batch_target = 4;
  double lambda_reg = 0.1;
  double grl_coeff = 1.0;       // prior networks
  double disc_grl_coeff = 0.1;  // discriminators
  double grl_warmup = 0.25;     // fraction of iterations run with the reversal coefficient at 0
  double grl_ramp = 10.0;       // gamma of the ramp 2 / (1 + exp(-gamma p)) - 1 after warm-up; 0: step
  std::vector<int> pal_levels;  // empty: the levels of `mode`
  std::string weather;          // empty: taken from the dataset
  std::uint64_t seed = 0;
  long eval_interval = 0;       // 0: evaluate once, after the last iteration
  priors::PriorSource source_prior = priors::PriorSource::Estimated;
  priors::PriorSource target_prior = priors::PriorSource::Estimated;
  bool pen_on_corrected = true;  // PEN reads F^_l (true) or F_l (false) on the target path
  double divergence_threshold = 1e3;
  float score_threshold = 0.05f;
  double nms_iou = 0.5;
  double eval_iou = 0.5;
  models::ModelConfig model;  // attachment levels and grl_coeff are filled from the fields above

  void validate() const;
  /// Levels the prior-adversarial loss runs at.
  [[nodiscard]] std::vector<int> pen_levels() const;
  /// `model` with levels and reversal coefficients set from the fields above.
  [[nodiscard]] models::ModelConfig model_config() const;
  [[nodiscard]] bool uses_target() const;
  /// Learning rate for 0-based iteration `it`.
  [[nodiscard]] double lr_at(long it) const;
  /// Factor in [0, 1] applied to the reversal coefficients at 0-based iteration `it`.
  [[nodiscard]] double grl_scale_at(long it) const;

  /// Unknown keys are rejected. Model keys (widths, pen_width, ...) share the
  /// same flat namespace.
  static TrainConfig from_kv(const io::KeyValueConfig& kv);
  static TrainConfig from_kv(const io::KeyValueConfig& kv, TrainConfig base);
  [[nodiscard]] io::KeyValueConfig to_kv() const;
};

std::string prior_source_name(priors::PriorSource source);
priors::PriorSource prior_source_from_string(const std::string& name);

}  // namespace wxa::trainer
