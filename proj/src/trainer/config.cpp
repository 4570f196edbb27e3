#include "wxadapt/trainer/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <set>

#include "wxadapt/core/error.hpp"

namespace wxa::trainer {

namespace {

// Shortest text that reads back to the same double.
std::string fmt_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

bool level_subset(const std::vector<int>& levels) {
  std::set<int> seen;
  for (int l : levels) {
    if ((l != 4 && l != 5) || !seen.insert(l).second) return false;
  }
  return true;
}

const std::set<std::string> kModelKeys = {"widths",    "num_classes",      "anchor_sizes", "head_width",
                                          "pen_width", "pen_out_channels", "disc_width",   "freeze_early"};

}  // namespace

std::string mode_name(Mode mode) {
  switch (mode) {
    case Mode::Frcnn: return "frcnn";
    case Mode::D5: return "d5";
    case Mode::D45: return "d45";
    case Mode::D5R5: return "d5r5";
    case Mode::P5R5: return "p5r5";
    case Mode::P45: return "p45";
    case Mode::P45R45: return "p45r45";
  }
  return "frcnn";
}

std::string mode_label(Mode mode) {
  switch (mode) {
    case Mode::Frcnn: return "FRCNN";
    case Mode::D5: return "FRCNN+D5";
    case Mode::D45: return "FRCNN+D45";
    case Mode::D5R5: return "FRCNN+D5+R5";
    case Mode::P5R5: return "FRCNN+P5+R5";
    case Mode::P45: return "FRCNN+P45";
    case Mode::P45R45: return "FRCNN+P45+R45";
  }
  return "FRCNN";
}

Mode mode_from_string(const std::string& name) {
  std::string s;
  for (char c : name) {
    if (c == '+' || c == '_' || c == '-') continue;
    s += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  if (s.size() > 5 && s.starts_with("frcnn")) s = s.substr(5);
  for (Mode m : {Mode::Frcnn, Mode::D5, Mode::D45, Mode::D5R5, Mode::P5R5, Mode::P45, Mode::P45R45}) {
    if (mode_name(m) == s) return m;
  }
  throw UsageError("unknown mode '" + name + "' (expected frcnn, d5, d45, d5r5, p5r5, p45 or p45r45)");
}

ModeLevels mode_levels(Mode mode) {
  switch (mode) {
    case Mode::Frcnn: return {};
    case Mode::D5: return {{}, {}, {5}};
    case Mode::D45: return {{}, {}, {4, 5}};
    case Mode::D5R5: return {{}, {5}, {5}};
    case Mode::P5R5: return {{5}, {5}, {}};
    case Mode::P45: return {{4, 5}, {}, {}};
    case Mode::P45R45: return {{4, 5}, {4, 5}, {}};
  }
  return {};
}

std::string prior_source_name(priors::PriorSource source) {
  switch (source) {
    case priors::PriorSource::GroundTruth: return "gt";
    case priors::PriorSource::Estimated: return "estimated";
    case priors::PriorSource::Ideal: return "ideal";
  }
  return "estimated";
}

priors::PriorSource prior_source_from_string(const std::string& name) {
  if (name == "gt" || name == "ground_truth") return priors::PriorSource::GroundTruth;
  if (name == "estimated") return priors::PriorSource::Estimated;
  if (name == "ideal") return priors::PriorSource::Ideal;
  throw UsageError("unknown prior source '" + name + "' (expected estimated, ideal or gt)");
}

std::vector<int> TrainConfig::pen_levels() const {
  const auto levels = mode_levels(mode).pen;
  if (levels.empty() || pal_levels.empty()) return levels;
  return pal_levels;
}

bool TrainConfig::uses_target() const { return mode != Mode::Frcnn; }

models::ModelConfig TrainConfig::model_config() const {
  models::ModelConfig m = model;
  const auto levels = mode_levels(mode);
  m.pen_levels = pen_levels();
  m.rfrb_levels = levels.rfrb;
  m.disc_levels = levels.disc;
  m.grl_coeff = grl_coeff;
  m.disc_grl_coeff = disc_grl_coeff;
  return m;
}

void TrainConfig::validate() const {
  if (iterations <= 0) throw UsageError("train: iterations must be > 0");
  if (!(lr >= 0) || !(lr_low >= 0)) throw UsageError("train: learning rates must be >= 0");
  if (!(lr_drop >= 0 && lr_drop <= 1)) throw UsageError("train: lr_drop must lie in [0, 1]");
  if (!(momentum >= 0 && momentum < 1)) throw UsageError("train: momentum must lie in [0, 1)");
  if (!(weight_decay >= 0)) throw UsageError("train: weight_decay must be >= 0");
  if (!(clip_grad_norm >= 0) || !std::isfinite(clip_grad_norm)) throw UsageError("train: clip_grad_norm must be finite and >= 0");
  if (batch_source < 1 || batch_target < 1) throw UsageError("train: batch sizes must be >= 1");
  if (!(lambda_reg >= 0) || !std::isfinite(lambda_reg)) throw UsageError("train: lambda must be finite and >= 0");
  if (!(grl_coeff >= 0) || !std::isfinite(grl_coeff) || !(disc_grl_coeff >= 0) || !std::isfinite(disc_grl_coeff)) {
    throw UsageError("train: reversal coefficients must be finite and >= 0");
  }
  if (!(grl_ramp >= 0) || !std::isfinite(grl_ramp)) throw UsageError("train: grl_ramp must be finite and >= 0");
  if (!(grl_warmup >= 0 && grl_warmup < 1)) throw UsageError("train: grl_warmup must lie in [0, 1)");
  if (!level_subset(pal_levels)) throw UsageError("train: pal_levels must be a subset of {4, 5}");
  if (eval_interval < 0) throw UsageError("train: eval_interval must be >= 0");
  if (!(divergence_threshold > 0)) throw UsageError("train: divergence threshold must be > 0");
  if (!(score_threshold >= 0 && score_threshold < 1)) throw UsageError("train: score_threshold must lie in [0, 1)");
  if (!(nms_iou > 0 && nms_iou <= 1) || !(eval_iou > 0 && eval_iou <= 1)) {
    throw UsageError("train: IoU thresholds must lie in (0, 1]");
  }
  if (!weather.empty()) (void)prior_kind_from_string(weather);
  model_config().validate();
}

double TrainConfig::lr_at(long it) const {
  const auto drop = static_cast<long>(std::llround(lr_drop * static_cast<double>(iterations)));
  return it < drop ? lr : lr_low;
}

double TrainConfig::grl_scale_at(long it) const {
  const auto start = static_cast<long>(std::llround(grl_warmup * static_cast<double>(iterations)));
  if (it < start) return 0.0;
  if (grl_ramp == 0) return 1.0;
  const double p = static_cast<double>(it - start) / static_cast<double>(iterations - start);
  return 2.0 / (1.0 + std::exp(-grl_ramp * p)) - 1.0;
}

TrainConfig TrainConfig::from_kv(const io::KeyValueConfig& kv) { return from_kv(kv, TrainConfig{}); }

TrainConfig TrainConfig::from_kv(const io::KeyValueConfig& kv, TrainConfig c) {
  std::set<std::string> known = {"mode", "iterations", "lr", "lr_low", "lr_drop", "momentum", "weight_decay",
                                 "clip_grad_norm", "batch_source", "batch_target", "lambda", "grl_coeff",
                                 "disc_grl_coeff", "grl_ramp", "grl_warmup", "pal_levels", "weather", "seed",
                                 "eval_interval", "source_prior", "target_prior", "pen_on_corrected",
                                 "divergence_threshold", "score_threshold", "nms_iou", "eval_iou"};
  known.insert(kModelKeys.begin(), kModelKeys.end());
  kv.require_known(known);

  if (kv.has("mode")) c.mode = mode_from_string(kv.get("mode", ""));
  c.iterations = kv.get_int("iterations", c.iterations);
  c.lr = kv.get_double("lr", c.lr);
  c.lr_low = kv.get_double("lr_low", c.lr_low);
  c.lr_drop = kv.get_double("lr_drop", c.lr_drop);
  c.momentum = kv.get_double("momentum", c.momentum);
  c.weight_decay = kv.get_double("weight_decay", c.weight_decay);
  c.clip_grad_norm = kv.get_double("clip_grad_norm", c.clip_grad_norm);
  c.batch_source = static_cast<int>(kv.get_int("batch_source", c.batch_source));
  c.batch_target = static_cast<int>(kv.get_int("batch_target", c.batch_target));
  c.lambda_reg = kv.get_double("lambda", c.lambda_reg);
  c.grl_coeff = kv.get_double("grl_coeff", c.grl_coeff);
  c.disc_grl_coeff = kv.get_double("disc_grl_coeff", c.disc_grl_coeff);
  c.grl_ramp = kv.get_double("grl_ramp", c.grl_ramp);
  c.grl_warmup = kv.get_double("grl_warmup", c.grl_warmup);
  if (kv.has("pal_levels")) {
    c.pal_levels.clear();
    for (double d : kv.get_list("pal_levels", {})) c.pal_levels.push_back(static_cast<int>(d));
  }
  c.weather = kv.get("weather", c.weather);
  if (kv.has("seed")) {
    const long s = kv.get_int("seed", 0);
    if (s < 0) throw UsageError("train: seed must be >= 0");
    c.seed = static_cast<std::uint64_t>(s);
  }
  c.eval_interval = kv.get_int("eval_interval", c.eval_interval);
  if (kv.has("source_prior")) c.source_prior = prior_source_from_string(kv.get("source_prior", ""));
  if (kv.has("target_prior")) c.target_prior = prior_source_from_string(kv.get("target_prior", ""));
  c.pen_on_corrected = kv.get_bool("pen_on_corrected", c.pen_on_corrected);
  c.divergence_threshold = kv.get_double("divergence_threshold", c.divergence_threshold);
  c.score_threshold = static_cast<float>(kv.get_double("score_threshold", c.score_threshold));
  c.nms_iou = kv.get_double("nms_iou", c.nms_iou);
  c.eval_iou = kv.get_double("eval_iou", c.eval_iou);

  io::KeyValueConfig model_kv;
  for (const auto& [k, v] : kv.entries()) {
    if (kModelKeys.count(k)) model_kv.set(k, v);
  }
  models::ModelConfig base = c.model;
  base.pen_levels.clear();
  base.rfrb_levels.clear();
  base.disc_levels.clear();
  c.model = models::ModelConfig::from_kv(model_kv, base);
  c.validate();
  return c;
}

io::KeyValueConfig TrainConfig::to_kv() const {
  io::KeyValueConfig kv;
  kv.set("mode", mode_name(mode));
  kv.set("iterations", std::to_string(iterations));
  kv.set("lr", fmt_double(lr));
  kv.set("lr_low", fmt_double(lr_low));
  kv.set("lr_drop", fmt_double(lr_drop));
  kv.set("momentum", fmt_double(momentum));
  kv.set("weight_decay", fmt_double(weight_decay));
  kv.set("clip_grad_norm", fmt_double(clip_grad_norm));
  kv.set("batch_source", std::to_string(batch_source));
  kv.set("batch_target", std::to_string(batch_target));
  kv.set("lambda", fmt_double(lambda_reg));
  kv.set("grl_coeff", fmt_double(grl_coeff));
  kv.set("disc_grl_coeff", fmt_double(disc_grl_coeff));
  kv.set("grl_ramp", fmt_double(grl_ramp));
  kv.set("grl_warmup", fmt_double(grl_warmup));
  if (!pal_levels.empty()) kv.set("pal_levels", join_ints(pal_levels));
  if (!weather.empty()) kv.set("weather", weather);
  kv.set("seed", std::to_string(seed));
  kv.set("eval_interval", std::to_string(eval_interval));
  kv.set("source_prior", prior_source_name(source_prior));
  kv.set("target_prior", prior_source_name(target_prior));
  kv.set("pen_on_corrected", pen_on_corrected ? "true" : "false");
  kv.set("divergence_threshold", fmt_double(divergence_threshold));
  kv.set("score_threshold", fmt_double(score_threshold));
  kv.set("nms_iou", fmt_double(nms_iou));
  kv.set("eval_iou", fmt_double(eval_iou));
  io::KeyValueConfig model_kv;
  model.to_kv(model_kv);
  for (const auto& [k, v] : model_kv.entries()) {
    if (kModelKeys.count(k)) kv.set(k, v);
  }
  return kv;
}

}  // namespace wxa::trainer
