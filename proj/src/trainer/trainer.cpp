#include "wxadapt/trainer/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "wxadapt/core/error.hpp"
#include "wxadapt/io/image_io.hpp"
#include "wxadapt/models/checkpoint.hpp"
#include "wxadapt/weathersim/scene.hpp"

namespace wxa::trainer {

using ag::Tensor;

TrainingData load_training_data(const sim::DatasetManifest& manifest, const TrainConfig& config, bool with_val) {
  if (!config.weather.empty() && prior_kind_from_string(config.weather) != manifest.weather) {
    throw UsageError("train: config weather '" + config.weather + "' does not match dataset weather '" +
                     to_string(manifest.weather) + "'");
  }
  TrainingData d;
  d.weather = manifest.weather;
  d.height = manifest.height;
  d.width = manifest.width;
  d.num_classes = manifest.num_classes;
  d.source = sim::load_split(manifest, sim::Split::Source);
  if (config.uses_target()) d.target = sim::load_split(manifest, sim::Split::Target);
  if (with_val) d.val = sim::load_split(manifest, sim::Split::Val);
  return d;
}

// ---- metrics CSV ----

namespace {

constexpr const char* kMetricsColumns[] = {"iteration", "lr",        "grl",       "total",     "det_obj",        "det_box",
                                           "det_cls",   "adv",       "pal_src",   "pal_tgt",        "disc_src",
                                           "disc_tgt",  "reg",       "reg_weighted", "grad_extractor", "grad_rfrb",
                                           "grad_head", "grad_pen",  "grad_disc", "positives"};

std::string fmt_float(float v) { return fmt::format("{:.9g}", v); }
std::string fmt_real(double v) { return fmt::format("{:.17g}", v); }

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream s(line);
  std::string cell;
  while (std::getline(s, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

std::string metrics_csv_header() {
  std::string s;
  for (const char* c : kMetricsColumns) s += (s.empty() ? "" : ",") + std::string(c);
  return s;
}

std::string metrics_csv_row(const LossRecord& r) {
  return fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}", r.iteration, fmt_real(r.lr),
                     fmt_real(r.grl), fmt_float(r.total), fmt_float(r.det_obj), fmt_float(r.det_box), fmt_float(r.det_cls),
                     fmt_float(r.adv), fmt_float(r.pal_src), fmt_float(r.pal_tgt), fmt_float(r.disc_src),
                     fmt_float(r.disc_tgt), fmt_float(r.reg), fmt_float(r.reg_weighted), fmt_real(r.grad_extractor),
                     fmt_real(r.grad_rfrb), fmt_real(r.grad_head), fmt_real(r.grad_pen), fmt_real(r.grad_disc),
                     r.positives);
}

std::vector<LossRecord> read_metrics_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metrics file " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != metrics_csv_header()) throw IoError("unexpected metrics header in " + path.string());
  std::vector<LossRecord> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = split_csv(line);
    if (c.size() != std::size(kMetricsColumns)) throw IoError("malformed metrics row in " + path.string());
    try {
      LossRecord r;
      r.iteration = std::stol(c[0]);
      r.lr = std::stod(c[1]);
      r.grl = std::stod(c[2]);
      float* f[] = {&r.total, &r.det_obj, &r.det_box, &r.det_cls, &r.adv, &r.pal_src,
                    &r.pal_tgt, &r.disc_src, &r.disc_tgt, &r.reg, &r.reg_weighted};
      for (std::size_t i = 0; i < std::size(f); ++i) *f[i] = std::stof(c[3 + i]);
      double* g[] = {&r.grad_extractor, &r.grad_rfrb, &r.grad_head, &r.grad_pen, &r.grad_disc};
      for (std::size_t i = 0; i < std::size(g); ++i) *g[i] = std::stod(c[14 + i]);
      r.positives = std::stoi(c[19]);
      rows.push_back(r);
    } catch (const std::logic_error&) {
      throw IoError("malformed metrics row in " + path.string());
    }
  }
  return rows;
}

std::string eval_csv_header(int num_classes) {
  std::string s = "iteration,map";
  for (int c = 0; c < num_classes; ++c) {
    s += ",ap_";
    s += c < sim::kNumClasses ? sim::class_name(c) : std::to_string(c);
  }
  return s + ",classes_present";
}

std::string eval_csv_row(const EvalRecord& r) {
  std::string s = std::to_string(r.iteration) + "," + fmt_real(r.result.map);
  for (double ap : r.result.ap) s += "," + fmt_real(ap);
  return s + "," + std::to_string(r.result.classes_present);
}

// ---- optimizer ----

Sgd::Sgd(std::vector<models::NamedTensor<float>> params, double momentum, double weight_decay)
    : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
  velocity_.reserve(params_.size());
  for (const auto& p : params_) velocity_.emplace_back(p.tensor.numel(), 0.0f);
}

void Sgd::step(double lr) {
  const auto mu = static_cast<float>(momentum_);
  const auto wd = static_cast<float>(weight_decay_);
  const auto rate = static_cast<float>(lr);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& t = params_[i].tensor;
    if (!t.has_grad()) continue;
    auto w = t.data();
    auto g = std::as_const(t).grad();
    auto& v = velocity_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      v[k] = mu * v[k] + (g[k] + wd * w[k]);
      w[k] -= rate * v[k];
    }
  }
}

double Sgd::clip_grad_norm(double max_norm) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].tensor.has_grad()) continue;
    const auto& name = params_[i].name;
    groups[name.substr(0, name.find('.'))].push_back(i);
  }
  double largest = 0;
  for (const auto& [group, members] : groups) {
    double acc = 0;
    for (std::size_t i : members)
      for (float g : std::as_const(params_[i].tensor).grad()) acc += double(g) * g;
    const double norm = std::sqrt(acc);
    largest = std::max(largest, norm);
    if (max_norm <= 0 || norm <= max_norm) continue;
    const auto scale = static_cast<float>(max_norm / norm);
    for (std::size_t i : members)
      for (float& g : params_[i].tensor.grad()) g *= scale;
  }
  return largest;
}

void Sgd::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

// ---- trainer ----

namespace {

std::vector<models::NamedTensor<float>> trainable(const models::Detector<float>& model) {
  std::vector<models::NamedTensor<float>> out;
  for (auto& p : model.parameters())
    if (p.tensor.requires_grad()) out.push_back(p);
  return out;
}

/// Runs the frozen stem over all samples and returns the flattened outputs.
std::vector<float> cache_inputs(const models::Detector<float>& model, const std::vector<DetectionSample>& samples,
                                int level, std::vector<std::size_t>& shape) {
  std::vector<float> out;
  constexpr std::size_t kChunk = 16;
  ag::Tape<float> tape;
  for (std::size_t begin = 0; begin < samples.size(); begin += kChunk) {
    const std::size_t end = std::min(samples.size(), begin + kChunk);
    std::vector<const ImageF*> images;
    for (std::size_t i = begin; i < end; ++i) images.push_back(&samples[i].image);
    auto x = models::images_to_tensor<float>(images);
    if (level > 0) {
      tape.clear();
      x = model.stem(tape, x, level);
    }
    shape.assign(x.shape().begin() + 1, x.shape().end());
    out.insert(out.end(), x.data().begin(), x.data().end());
  }
  return out;
}

std::vector<float> level_prior(const DetectionSample& s, PriorKind kind, priors::PriorSource source, int level,
                               int channels) {
  const PriorMap full = priors::prior_for_sample(s, kind, source);
  const PriorMap small = priors::downscale_prior(full, level);
  const auto v = small.values();
  const std::size_t plane = static_cast<std::size_t>(small.height()) * small.width();
  std::vector<float> out(plane * static_cast<std::size_t>(channels));
  for (int c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < plane; ++i) out[static_cast<std::size_t>(c) * plane + i] = v[i * static_cast<std::size_t>(small.channels())];
  return out;
}

double grad_norm(const std::vector<models::NamedTensor<float>>& params, const std::string& prefix) {
  double acc = 0;
  for (const auto& p : params) {
    if (!p.name.starts_with(prefix) || !p.tensor.has_grad()) continue;
    for (float g : p.tensor.grad()) acc += double(g) * g;
  }
  return std::sqrt(acc);
}

}  // namespace

Trainer::Trainer(const TrainConfig& config, const TrainingData& data)
    : config_(config),
      data_(data),
      model_((config.validate(), config.model_config()), config.seed),
      sgd_(trainable(model_), config.momentum, config.weight_decay),
      rng_(Rng::derive(config.seed, 0x5eed)) {
  if (data.source.empty()) throw UsageError("train: the source split is empty");
  if (config.uses_target() && data.target.empty()) throw UsageError("train: mode " + mode_name(config.mode) + " needs target images");
  if (data.height % 32 != 0 || data.width % 32 != 0) throw ShapeError("train: image dimensions must be divisible by 32");
  if (data.num_classes != config.model.num_classes) {
    throw UsageError("train: dataset has " + std::to_string(data.num_classes) + " classes, model expects " +
                     std::to_string(config.model.num_classes));
  }
  pen_levels_ = config.pen_levels();
  cache_level_ = config.model.freeze_early ? 2 : 0;
  grid_ = model_.anchors(data.height, data.width);

  cache_[0] = cache_inputs(model_, data.source, cache_level_, cache_shape_);
  if (config.uses_target()) cache_[1] = cache_inputs(model_, data.target, cache_level_, cache_shape_);

  anchor_targets_.reserve(data.source.size());
  for (const auto& s : data.source) anchor_targets_.push_back(make_anchor_targets(grid_, s.objects));

  const int channels = config.model.pen_out_channels;
  for (int l : pen_levels_) {
    const auto li = static_cast<std::size_t>(l - 4);
    for (int domain = 0; domain < 2; ++domain) {
      const auto& samples = domain == 0 ? data.source : data.target;
      const auto source = domain == 0 ? config.source_prior : config.target_prior;
      auto& dst = prior_cache_[static_cast<std::size_t>(domain)][li];
      for (const auto& s : samples) {
        auto v = level_prior(s, data.weather, source, l, channels);
        prior_size_[li] = v.size();
        dst.insert(dst.end(), v.begin(), v.end());
      }
    }
  }

  for (int domain = 0; domain < 2; ++domain) {
    const std::size_t n = domain == 0 ? data.source.size() : data.target.size();
    order_[static_cast<std::size_t>(domain)].resize(n);
    cursor_[static_cast<std::size_t>(domain)] = n;  // forces a shuffle on first use
  }
}

std::vector<std::size_t> Trainer::next_indices(bool target) {
  const auto d = static_cast<std::size_t>(target);
  auto& order = order_[d];
  const std::size_t batch = static_cast<std::size_t>(target ? config_.batch_target : config_.batch_source);
  std::vector<std::size_t> out;
  while (out.size() < batch) {
    if (cursor_[d] >= order.size()) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      for (std::size_t i = order.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng_.uniform_int(0, static_cast<int>(i - 1)));
        std::swap(order[i - 1], order[j]);
      }
      cursor_[d] = 0;
    }
    out.push_back(order[cursor_[d]++]);
  }
  return out;
}

Batch Trainer::make_batch(bool target, const std::vector<std::size_t>& indices) const {
  const auto d = static_cast<std::size_t>(target);
  const auto& cache = cache_[d];
  const std::size_t per = ag::numel_of(cache_shape_);
  if (indices.empty()) throw UsageError("make_batch: empty batch");
  std::vector<float> x(indices.size() * per);
  Batch b;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t i = indices[k];
    if ((i + 1) * per > cache.size()) throw UsageError("make_batch: sample index out of range");
    std::copy_n(cache.begin() + static_cast<std::ptrdiff_t>(i * per), per, x.begin() + static_cast<std::ptrdiff_t>(k * per));
    if (!target) b.anchors.push_back(&anchor_targets_[i]);
  }
  ag::Shape shape{indices.size()};
  shape.insert(shape.end(), cache_shape_.begin(), cache_shape_.end());
  b.input = Tensor<float>(shape, std::move(x));

  const int out_ch = config_.model.pen_out_channels;
  for (int l : pen_levels_) {
    const auto li = static_cast<std::size_t>(l - 4);
    const std::size_t n = prior_size_[li];
    const auto& src = prior_cache_[d][li];
    std::vector<float> v(indices.size() * n);
    for (std::size_t k = 0; k < indices.size(); ++k)
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(indices[k] * n), n, v.begin() + static_cast<std::ptrdiff_t>(k * n));
    const auto side_h = static_cast<std::size_t>((data_.height + (1 << l) - 1) >> l);
    const auto side_w = static_cast<std::size_t>((data_.width + (1 << l) - 1) >> l);
    b.priors[li] = Tensor<float>({indices.size(), static_cast<std::size_t>(out_ch), side_h, side_w}, std::move(v));
  }
  return b;
}

LossRecord Trainer::step() {
  const double lr = config_.lr_at(iteration_);
  model_.set_grl_scale(config_.grl_scale_at(iteration_));
  const auto si = next_indices(false);
  const Batch src = make_batch(false, si);
  Batch tgt;
  if (config_.uses_target()) {
    const auto ti = next_indices(true);
    target_drawn_ += ti.size();
    tgt = make_batch(true, ti);
  }
  return train_step(src, tgt, lr);
}

void Trainer::check_finite(const LossRecord& r) const {
  const std::pair<const char*, float> parts[] = {
      {"det_obj", r.det_obj}, {"det_box", r.det_box}, {"det_cls", r.det_cls}, {"pal_src", r.pal_src},
      {"pal_tgt", r.pal_tgt}, {"disc_src", r.disc_src}, {"disc_tgt", r.disc_tgt}, {"reg", r.reg},
      {"total", r.total}};
  for (const auto& [name, v] : parts) {
    if (!std::isfinite(v)) {
      throw DivergenceError(fmt::format("iteration {}: non-finite {} loss ({})", r.iteration, name, v));
    }
  }
  if (r.total > config_.divergence_threshold) {
    throw DivergenceError(fmt::format(
        "iteration {}: total loss {} exceeds {} (det_obj {}, det_box {}, det_cls {}, adv {}, reg_weighted {})",
        r.iteration, r.total, config_.divergence_threshold, r.det_obj, r.det_box, r.det_cls, r.adv, r.reg_weighted));
  }
}

LossRecord Trainer::train_step(const Batch& src, const Batch& tgt, double lr) {
  ag::Tape<float> tape;
  LossRecord r;
  r.iteration = iteration_ + 1;
  r.lr = lr;
  r.grl = model_.grl_scale();

  const auto fs = model_.source_features(tape, src.input, cache_level_);
  const auto head = model_.detect(tape, fs.f5);
  const auto det = detection_loss<float>(tape, head, model_.head_layout(), grid_, src.anchors);
  r.det_obj = det.objectness.item();
  r.det_box = det.box.item();
  r.det_cls = det.cls.item();
  r.positives = det.positives;
  Tensor<float> total = ag::add(tape, ag::add(tape, det.objectness, det.box), det.cls);

  const auto levels = mode_levels(config_.mode);
  if (config_.uses_target()) {
    if (!tgt.input.defined()) throw UsageError("train_step: mode " + mode_name(config_.mode) + " needs a target batch");
    const auto ft = model_.target_features(tape, tgt.input, cache_level_);
    auto pick = [](const models::Features<float>& f, int l, bool corrected) -> const Tensor<float>& {
      if (l == 4) return corrected ? f.f4 : f.raw4;
      return corrected ? f.f5 : f.raw5;
    };
    Tensor<float> adv;
    if (!pen_levels_.empty()) {
      std::vector<Tensor<float>> ls, lt;
      for (int l : pen_levels_) {
        const auto& a = pick(fs, l, true);
        const auto& b = pick(ft, l, config_.pen_on_corrected);
        const auto pred = model_.pen(tape, ag::concat0(tape, a, b), l, ag::NormMode::Train);
        const std::size_t ns = a.dim(0);
        ls.push_back(pal_level_loss(tape, ag::slice0(tape, pred, 0, ns), src.priors[static_cast<std::size_t>(l - 4)]));
        lt.push_back(pal_level_loss(tape, ag::slice0(tape, pred, ns, pred.dim(0)), tgt.priors[static_cast<std::size_t>(l - 4)]));
      }
      const auto ps = pal_domain_loss(tape, ls);
      const auto pt = pal_domain_loss(tape, lt);
      r.pal_src = ps.item();
      r.pal_tgt = pt.item();
      adv = adv_loss(tape, ps, pt);
    }
    if (!levels.disc.empty()) {
      std::vector<Tensor<float>> ds, dt;
      for (int l : levels.disc) {
        const auto ls = model_.discriminate(tape, pick(fs, l, true), l);
        const auto lt = model_.discriminate(tape, pick(ft, l, true), l);
        const std::vector<float> zeros(ls.numel(), 0.0f), ones(lt.numel(), 1.0f);
        ds.push_back(ag::bce_with_logits(tape, ls, std::span<const float>(zeros)));
        dt.push_back(ag::bce_with_logits(tape, lt, std::span<const float>(ones)));
      }
      const auto s = pal_domain_loss(tape, ds);
      const auto t = pal_domain_loss(tape, dt);
      r.disc_src = s.item();
      r.disc_tgt = t.item();
      const auto d = adv_loss(tape, s, t);
      adv = adv.defined() ? ag::add(tape, adv, d) : d;
    }
    if (adv.defined()) {
      r.adv = adv.item();
      total = ag::add(tape, total, adv);
    }
    if (!levels.rfrb.empty()) {
      const auto reg = reg_loss(tape, std::vector<Tensor<float>>{ft.delta4, ft.delta5});
      const auto weighted = ag::affine(tape, reg, static_cast<float>(config_.lambda_reg), 0.0f);
      r.reg = reg.item();
      r.reg_weighted = weighted.item();
      total = ag::add(tape, total, weighted);
    }
  }
  r.total = total.item();
  check_finite(r);

  tape.backward(total);
  const auto& params = sgd_.params();
  r.grad_extractor = grad_norm(params, "extractor.");
  r.grad_rfrb = grad_norm(params, "rfrb");
  r.grad_head = grad_norm(params, "head.");
  r.grad_pen = grad_norm(params, "pen");
  r.grad_disc = grad_norm(params, "disc");
  sgd_.clip_grad_norm(config_.clip_grad_norm);
  sgd_.step(lr);
  sgd_.zero_grad();
  ++iteration_;
  return r;
}

// ---- schedule ----

TrainResult train(const TrainConfig& config_in, const TrainingData& data, const fs::path& out_dir, const TrainHooks& hooks) {
  TrainConfig config = config_in;
  if (config.weather.empty()) config.weather = to_string(data.weather);
  Trainer trainer(config, data);
  TrainResult result;

  std::ofstream metrics;
  std::ofstream evals;
  if (!out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
    metrics.open(out_dir / "metrics.csv", std::ios::binary);
    evals.open(out_dir / "eval.csv", std::ios::binary);
    if (!metrics || !evals) throw IoError("cannot write metrics into " + out_dir.string());
    metrics << metrics_csv_header() << '\n';
    evals << eval_csv_header(data.num_classes) << '\n';
  }

  auto run_eval = [&](long it) {
    if (data.val.empty()) return;
    PredictOptions opt;
    opt.score_threshold = config.score_threshold;
    opt.nms_iou = config.nms_iou;
    const auto dets = predict(trainer.model(), data.val, opt);
    std::vector<std::vector<LabeledBox>> gts;
    gts.reserve(data.val.size());
    for (const auto& s : data.val) gts.push_back(s.objects);
    EvalRecord e{it, evaluate_map(dets, gts, data.num_classes, config.eval_iou)};
    if (evals.is_open()) evals << eval_csv_row(e) << '\n' << std::flush;
    if (hooks.on_eval) hooks.on_eval(e);
    result.evals.push_back(std::move(e));
  };

  for (long it = 0; it < config.iterations; ++it) {
    const LossRecord r = trainer.step();
    if (metrics.is_open()) metrics << metrics_csv_row(r) << '\n';
    if (hooks.on_step) hooks.on_step(r);
    result.metrics.push_back(r);
    if (config.eval_interval > 0 && r.iteration % config.eval_interval == 0 && r.iteration != config.iterations) {
      run_eval(r.iteration);
    }
  }
  run_eval(config.iterations);
  result.target_samples_drawn = trainer.target_samples_drawn();

  if (!out_dir.empty()) {
    metrics.close();
    evals.close();
    if (!metrics || !evals) throw IoError("failed writing metrics into " + out_dir.string());
    models::CheckpointMeta meta;
    meta.iteration = trainer.iteration();
    meta.rng_state = trainer.rng().state();
    meta.train_config = config.to_kv();
    result.checkpoint = out_dir / "checkpoint.wxa";
    models::save_checkpoint(result.checkpoint, trainer.model(), meta);
  }
  return result;
}

PenFitResult fit_pen_only(const TrainConfig& config, const TrainingData& data, int iterations) {
  if (iterations < 1) throw UsageError("fit_pen_only: iterations must be >= 1");
  if (config.pen_levels().empty()) throw UsageError("fit_pen_only: mode " + mode_name(config.mode) + " has no prior network");
  Trainer trainer(config, data);
  auto& model = trainer.model();
  std::vector<std::size_t> si(static_cast<std::size_t>(config.batch_source)), ti(static_cast<std::size_t>(config.batch_target));
  std::iota(si.begin(), si.end(), std::size_t{0});
  std::iota(ti.begin(), ti.end(), std::size_t{0});
  const Batch src = trainer.make_batch(false, si);
  const Batch tgt = trainer.make_batch(true, ti);

  ag::Tape<float> frozen;
  const auto fs = model.source_features(frozen, src.input, trainer.cache_level());
  const auto ft = model.target_features(frozen, tgt.input, trainer.cache_level());
  std::array<Tensor<float>, 2> fsrc{fs.f4.clone(), fs.f5.clone()};
  std::array<Tensor<float>, 2> ftgt{(config.pen_on_corrected ? ft.f4 : ft.raw4).clone(),
                                    (config.pen_on_corrected ? ft.f5 : ft.raw5).clone()};

  std::vector<models::NamedTensor<float>> pen_params;
  for (auto& p : model.parameters())
    if (p.name.starts_with("pen") && p.tensor.requires_grad()) pen_params.push_back(p);
  Sgd sgd(pen_params, config.momentum, config.weight_decay);

  PenFitResult out;
  for (int it = 0; it <= iterations; ++it) {
    ag::Tape<float> tape;
    std::vector<Tensor<float>> ls, lt;
    for (int l : config.pen_levels()) {
      const auto li = static_cast<std::size_t>(l - 4);
      const auto pred = model.pen(tape, ag::concat0(tape, fsrc[li], ftgt[li]), l, ag::NormMode::Train);
      const std::size_t ns = fsrc[li].dim(0);
      ls.push_back(pal_level_loss(tape, ag::slice0(tape, pred, 0, ns), src.priors[li]));
      lt.push_back(pal_level_loss(tape, ag::slice0(tape, pred, ns, pred.dim(0)), tgt.priors[li]));
    }
    auto loss = adv_loss(tape, pal_domain_loss(tape, ls), pal_domain_loss(tape, lt));
    out.losses.push_back(loss.item());
    if (!std::isfinite(out.losses.back())) throw DivergenceError(fmt::format("fit_pen_only: non-finite loss at step {}", it));
    if (it == iterations) break;
    tape.backward(loss);
    sgd.step(config.lr_at(0));
    sgd.zero_grad();
  }
  return out;
}

}  // namespace wxa::trainer
