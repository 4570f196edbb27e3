#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "wxadapt/autograd/gradcheck.hpp"
#include "wxadapt/core/error.hpp"
#include "wxadapt/io/image_io.hpp"
#include "wxadapt/io/kv_config.hpp"
#include "wxadapt/models/checkpoint.hpp"
#include "wxadapt/priors/priors.hpp"
#include "wxadapt/trainer/ablation.hpp"
#include "wxadapt/trainer/config.hpp"
#include "wxadapt/trainer/evaluate.hpp"
#include "wxadapt/trainer/trainer.hpp"
#include "wxadapt/weathersim/dataset.hpp"

#ifndef WXADAPT_VERSION
#define WXADAPT_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using namespace wxa;
using ordered_json = nlohmann::ordered_json;

namespace {

// Exit status of a gradient check that ran but found a mismatch.
constexpr int kCheckFailed = 4;

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  int verbose = 0;
  bool quiet = false;
};

std::uint64_t parse_seed(const std::string& text, const std::string& origin) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(text, &used, 10);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size() || text[0] == '-') throw UsageError(origin + ": seed must be a non-negative integer, got '" + text + "'");
  return v;
}

/// --seed, then WXADAPT_SEED, then the config file's seed, then 0.
std::uint64_t resolve_seed(const Common& c, const io::KeyValueConfig& kv) {
  if (c.seed) return *c.seed;
  if (const char* env = std::getenv("WXADAPT_SEED"); env && *env) return parse_seed(env, "WXADAPT_SEED");
  if (kv.has("seed")) return parse_seed(kv.get("seed", "0"), "config");
  return 0;
}

io::KeyValueConfig load_kv(const std::string& path) {
  if (path.empty()) return {};
  if (!fs::exists(path)) throw IoError("config file not found: " + path);
  return io::KeyValueConfig::load(path);
}

fs::path manifest_file(const std::string& data) {
  fs::path p(data);
  if (fs::is_directory(p)) p /= "manifest.json";
  if (!fs::exists(p)) throw IoError("dataset manifest not found: " + p.string());
  return p;
}

fs::path require_out(const Common& c, const std::string& sub) {
  if (c.out.empty()) throw UsageError(sub + ": --out is required");
  std::error_code ec;
  fs::create_directories(c.out, ec);
  if (ec) throw IoError("cannot create " + c.out + ": " + ec.message());
  return c.out;
}

/// Provenance record: enough to rerun the command byte-for-byte.
void write_run_json(const fs::path& out, const std::string& sub, const std::vector<std::string>& argv, std::uint64_t seed,
                    const io::KeyValueConfig& config, const std::vector<fs::path>& inputs,
                    const ordered_json& extra = ordered_json::object()) {
  ordered_json j;
  j["tool"] = "wxadapt";
  j["version"] = WXADAPT_VERSION;
  j["subcommand"] = sub;
  j["argv"] = argv;
  j["seed"] = seed;
  ordered_json cfg = ordered_json::object();
  for (const auto& [k, v] : config.entries()) cfg[k] = v;
  j["config"] = cfg;
  ordered_json in = ordered_json::object();
  for (const auto& p : inputs) in[p.string()] = io::file_digest(p);
  j["inputs"] = in;
  for (const auto& [k, v] : extra.items()) j[k] = v;
  io::write_text(out / "run.json", j.dump(2) + "\n");
}

/// Record ids look like "target/12"; output files use "target_12".
std::string file_stem(std::string id) {
  std::replace(id.begin(), id.end(), '/', '_');
  return id;
}

std::vector<fs::path> config_inputs(const Common& c) {
  if (c.config.empty()) return {};
  return {c.config};
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  std::string weather;
  int n = 0;
  std::vector<double> angle_range;
  std::string blend;
};

int cmd_synth(const Common& c, const SynthArgs& a, const std::vector<std::string>& argv) {
  auto kv = load_kv(c.config);
  if (!a.weather.empty()) kv.set("weather", a.weather);
  if (a.n > 0) {
    for (const char* k : {"n", "n_source", "n_target", "n_val"}) kv.set(k, std::to_string(a.n));
  }
  if (!a.angle_range.empty()) {
    kv.set("angle_min", fmt::format("{}", a.angle_range[0]));
    kv.set("angle_max", fmt::format("{}", a.angle_range[1]));
  }
  if (!a.blend.empty()) kv.set("blend", a.blend);
  const auto seed = resolve_seed(c, kv);
  kv.set("seed", std::to_string(seed));
  auto config = sim::SynthConfig::from_kv(kv);
  config.validate();
  const auto out = require_out(c, "synth");
  const auto m = sim::synthesize_dataset(config, out);
  const auto manifest = out / "manifest.json";
  const std::string digest = io::file_digest(manifest);
  write_run_json(out, "synth", argv, seed, config.to_kv(), config_inputs(c), {{"outputs", {{"manifest.json", digest}}}});
  if (!c.quiet) {
    fmt::print("{} samples: {} source, {} target, {} val ({})\n", to_string(m.weather), m.split(sim::Split::Source).records.size(),
               m.split(sim::Split::Target).records.size(), m.split(sim::Split::Val).records.size(), digest);
  }
  fmt::print("{}\n", manifest.string());
  return 0;
}

// ---------------------------------------------------------------- prior

struct PriorArgs {
  std::string image;
  std::string data;
  std::string split = "target";
  std::string kind;
  std::string gt;
  int limit = 0;
  bool compare_gt = false;
  std::optional<double> omega;
  std::optional<int> patch;
  std::optional<bool> refine;
};

int cmd_prior(const Common& c, const PriorArgs& a, const std::vector<std::string>& argv) {
  if (a.image.empty() == a.data.empty()) throw UsageError("prior: give exactly one of --image or --data");
  auto kv = load_kv(c.config);
  kv.require_known({"omega", "patch", "refine", "guided_radius", "guided_eps", "residue_radius", "residue_threshold", "seed"});
  auto params = sim::prior_params_from_kv(kv);
  if (a.omega) params.omega = *a.omega;
  if (a.patch) params.patch = *a.patch;
  if (a.refine) params.refine = *a.refine;
  if (!(params.omega > 0 && params.omega <= 1)) throw UsageError("prior: omega must lie in (0, 1]");
  if (params.patch < 1 || params.patch % 2 == 0) throw UsageError("prior: patch must be a positive odd number");
  const auto seed = resolve_seed(c, kv);

  struct Item {
    std::string id;
    ImageF image;
    std::optional<PriorMap> gt;
  };
  std::vector<Item> items;
  std::vector<fs::path> inputs = config_inputs(c);
  PriorKind kind = a.kind.empty() ? PriorKind::Haze : prior_kind_from_string(a.kind);
  if (!a.image.empty()) {
    if (!fs::exists(a.image)) throw IoError("image not found: " + a.image);
    inputs.emplace_back(a.image);
    Item it{fs::path(a.image).stem().string(), io::read_png(a.image), std::nullopt};
    if (!a.gt.empty()) {
      if (!fs::exists(a.gt)) throw IoError("ground-truth prior not found: " + a.gt);
      inputs.emplace_back(a.gt);
      it.gt = io::read_prior(a.gt);
    }
    items.push_back(std::move(it));
  } else {
    const auto mf = manifest_file(a.data);
    inputs.push_back(mf);
    const auto m = sim::DatasetManifest::load(mf);
    if (a.kind.empty()) kind = m.weather;
    const auto split = sim::split_from_string(a.split);
    const auto& records = m.split(split).records;
    const std::size_t n = a.limit > 0 ? std::min<std::size_t>(static_cast<std::size_t>(a.limit), records.size()) : records.size();
    for (std::size_t i = 0; i < n; ++i) {
      auto s = sim::load_sample(m, split, records[i]);
      items.push_back({file_stem(records[i].id), std::move(s.image), std::move(s.gt_prior)});
    }
  }
  if (kind == PriorKind::Generic) throw UsageError("prior: kind must be haze, rain or snow");
  if (a.compare_gt) {
    for (const auto& it : items)
      if (!it.gt) throw UsageError("prior: --compare-gt needs a ground-truth prior for " + it.id);
  }

  const auto out = require_out(c, "prior");
  std::vector<float> est_all, gt_all;
  double mean_sum = 0;
  for (const auto& it : items) {
    const auto est = priors::estimate_prior(it.image, kind, params);
    io::write_prior(out / (it.id + "_est.pri"), est);
    io::write_pgm(out / (it.id + "_est.pgm"), est);
    mean_sum += est.mean();
    if (a.compare_gt) {
      io::write_pgm(out / (it.id + "_gt.pgm"), *it.gt);
      const auto e = est.values();
      const auto g = it.gt->values();
      if (e.size() != g.size()) throw ShapeError("prior: estimate and ground truth of " + it.id + " differ in size");
      est_all.insert(est_all.end(), e.begin(), e.end());
      gt_all.insert(gt_all.end(), g.begin(), g.end());
    }
  }
  const double mean = mean_sum / static_cast<double>(items.size());
  const char* quantity = kind == PriorKind::Haze ? "transmission" : "residue";
  ordered_json extra;
  extra["kind"] = to_string(kind);
  extra["samples"] = items.size();
  extra[std::string(quantity) + "_mean"] = mean;
  fmt::print("{} mean {:.4f} over {} image(s)\n", quantity, mean, items.size());
  if (a.compare_gt) {
    const double r = priors::pearson(est_all, gt_all);
    extra["pearson_r"] = r;
    fmt::print("pearson r {:.4f}\n", r);
  }
  io::KeyValueConfig record;
  sim::prior_params_to_kv(params, record);
  record.set("kind", to_string(kind));
  write_run_json(out, "prior", argv, seed, record, inputs, extra);
  return 0;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string data;
  std::string mode;
  std::optional<double> lambda;
  std::optional<long> iterations;
  std::optional<double> lr;
  std::optional<long> eval_interval;
};

trainer::TrainConfig train_config(const Common& c, const TrainArgs& a, io::KeyValueConfig& kv, std::uint64_t& seed) {
  kv = load_kv(c.config);
  seed = resolve_seed(c, kv);
  auto config = trainer::TrainConfig::from_kv(kv);
  if (!a.mode.empty()) config.mode = trainer::mode_from_string(a.mode);
  if (a.lambda) config.lambda_reg = *a.lambda;
  if (a.iterations) config.iterations = *a.iterations;
  if (a.lr) {
    config.lr = *a.lr;
    config.lr_low = *a.lr / 10;
  }
  if (a.eval_interval) config.eval_interval = *a.eval_interval;
  config.seed = seed;
  config.validate();
  return config;
}

int cmd_train(const Common& c, const TrainArgs& a, const std::vector<std::string>& argv) {
  io::KeyValueConfig kv;
  std::uint64_t seed = 0;
  auto config = train_config(c, a, kv, seed);
  const auto mf = manifest_file(a.data);
  const auto manifest = sim::DatasetManifest::load(mf);
  const auto data = trainer::load_training_data(manifest, config);
  if (config.weather.empty()) config.weather = to_string(data.weather);
  const auto out = require_out(c, "train");
  auto inputs = config_inputs(c);
  inputs.push_back(mf);
  // Written first so a diverged run still leaves its provenance.
  write_run_json(out, "train", argv, seed, config.to_kv(), inputs);

  trainer::TrainHooks hooks;
  const long every = std::max(1L, config.iterations / 20);
  if (c.verbose > 0) {
    hooks.on_step = [&](const trainer::LossRecord& r) {
      if (r.iteration % every == 0 || c.verbose > 1) {
        fmt::print("it {:>6} lr {:.0e} total {:.4f} det {:.4f}/{:.4f}/{:.4f} adv {:.4f} reg {:.4f}\n", r.iteration, r.lr,
                   r.total, r.det_obj, r.det_box, r.det_cls, r.adv, r.reg);
      }
    };
  }
  if (!c.quiet) {
    hooks.on_eval = [](const trainer::EvalRecord& e) { fmt::print("it {:>6} val mAP@0.5 {:.4f}\n", e.iteration, e.result.map); };
  }
  const auto res = trainer::train(config, data, out, hooks);
  fmt::print("mode {} final val mAP@0.5 {:.4f}\n", trainer::mode_label(config.mode), res.evals.back().result.map);
  fmt::print("{}\n", res.checkpoint.string());
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string run;
  std::string checkpoint;
  std::string data;
  std::string split = "val";
  std::string csv = "eval_results.csv";
};

int cmd_eval(Common c, const EvalArgs& a, const std::vector<std::string>& argv) {
  if (a.run.empty() == a.checkpoint.empty()) throw UsageError("eval: give exactly one of --run or --checkpoint");
  const fs::path ckpt = a.run.empty() ? fs::path(a.checkpoint) : fs::path(a.run) / "checkpoint.wxa";
  if (!a.run.empty() && !fs::is_directory(a.run)) throw IoError("run directory not found: " + a.run);
  if (!fs::exists(ckpt)) throw IoError("checkpoint not found: " + ckpt.string());
  if (c.out.empty()) {
    if (a.run.empty()) throw UsageError("eval: --out is required with --checkpoint");
    c.out = (fs::path(a.run) / "eval").string();
  }
  auto loaded = models::load_checkpoint(ckpt);
  const auto config = trainer::TrainConfig::from_kv(loaded.meta.train_config);
  const auto mf = manifest_file(a.data);
  const auto manifest = sim::DatasetManifest::load(mf);
  const auto split = sim::split_from_string(a.split);
  const auto samples = sim::load_split(manifest, split);

  trainer::PredictOptions opt;
  opt.target_pipeline = split != sim::Split::Source;
  opt.score_threshold = config.score_threshold;
  opt.nms_iou = config.nms_iou;
  const auto dets = trainer::predict(loaded.model, samples, opt);
  std::vector<std::vector<LabeledBox>> gts;
  for (const auto& s : samples) gts.push_back(s.objects);
  const auto res = trainer::evaluate_map(dets, gts, manifest.num_classes, config.eval_iou);

  const auto out = require_out(c, "eval");
  const auto csv = out / a.csv;
  const bool fresh = !fs::exists(csv);
  std::ofstream f(csv, std::ios::app | std::ios::binary);
  if (!f) throw IoError("cannot append to " + csv.string());
  if (fresh) {
    f << "checkpoint,mode,iteration,split,samples";
    for (int k = 0; k < manifest.num_classes; ++k) f << ",ap_" << sim::class_name(k);
    f << ",map\n";
  }
  auto num = [](double v) { return std::isfinite(v) ? fmt::format("{:.6f}", v) : std::string("nan"); };
  f << fmt::format("{},{},{},{},{}", ckpt.string(), trainer::mode_name(config.mode), loaded.meta.iteration, a.split, samples.size());
  for (double ap : res.ap) f << "," << num(ap);
  f << "," << num(res.map) << "\n";
  if (!f) throw IoError("failed writing " + csv.string());

  fmt::print("{} on {} ({} images): mAP@{} {:.4f}", trainer::mode_label(config.mode), a.split, samples.size(), config.eval_iou, res.map);
  for (int k = 0; k < manifest.num_classes; ++k) fmt::print(" {} {:.4f}", sim::class_name(k), res.ap[static_cast<std::size_t>(k)]);
  fmt::print("\n");
  for (const auto& flag : res.flags) fmt::print("note: {}\n", flag);
  write_run_json(out, "eval", argv, config.seed, config.to_kv(), {ckpt, mf}, {{"map", res.map}});
  return 0;
}

// ---------------------------------------------------------------- ablate

struct AblateArgs {
  std::string data;
  int seeds = 3;
  int jobs = 1;
  std::vector<std::string> modes;
  bool extended = false;
  std::vector<double> sweep;
  std::string sweep_mode = "p45r45";
  std::optional<long> iterations;
};

int cmd_ablate(const Common& c, const AblateArgs& a, const std::vector<std::string>& argv) {
  if (a.seeds < 1) throw UsageError("ablate: --seeds must be >= 1");
  auto kv = load_kv(c.config);
  const auto base_seed = resolve_seed(c, kv);
  auto base = trainer::TrainConfig::from_kv(kv);
  if (a.iterations) base.iterations = *a.iterations;
  std::vector<std::uint64_t> seeds;
  for (int k = 0; k < a.seeds; ++k) seeds.push_back(base_seed + static_cast<std::uint64_t>(k));

  const auto mf = manifest_file(a.data);
  const auto manifest = sim::DatasetManifest::load(mf);
  // Every mode shares one in-memory copy, so load the target split too.
  auto probe = base;
  probe.mode = trainer::Mode::P45R45;
  const auto data = trainer::load_training_data(manifest, probe);
  const auto out = require_out(c, "ablate");
  auto inputs = config_inputs(c);
  inputs.push_back(mf);

  auto progress = [&](const trainer::RunOutcome& r) {
    if (c.quiet) return;
    if (r.diverged) {
      fmt::print("{} seed {}: diverged ({})\n", r.spec.label, r.spec.config.seed, r.error);
    } else {
      fmt::print("{} seed {}: mAP@0.5 {:.4f} ({:.0f} s)\n", r.spec.label, r.spec.config.seed, r.result.map, r.seconds);
    }
    std::fflush(stdout);
  };

  ordered_json extra;
  extra["seeds"] = seeds;
  if (!a.sweep.empty()) {
    base.mode = trainer::mode_from_string(a.sweep_mode);
    const auto rows = trainer::lambda_sweep(base, data, a.sweep, seeds, out, a.jobs, progress);
    const auto csv = trainer::lambda_sweep_csv(rows);
    io::write_text(out / "lambda_sweep.csv", csv);
    extra["lambdas"] = a.sweep;
    write_run_json(out, "ablate", argv, base_seed, base.to_kv(), inputs, extra);
    fmt::print("{}", csv);
    int diverged = 0;
    for (const auto& r : rows) diverged += r.diverged;
    return diverged ? DivergenceError("").exit_code() : 0;
  }

  std::vector<trainer::Mode> modes;
  for (const auto& m : a.modes) modes.push_back(trainer::mode_from_string(m));
  if (modes.empty()) modes = a.extended ? trainer::extended_ladder_modes() : trainer::ladder_modes();
  const auto table = trainer::ablation_run(base, data, modes, seeds, out, a.jobs, progress);
  const auto md = trainer::ablation_markdown(table);
  io::write_text(out / "ablation.csv", trainer::ablation_csv(table));
  io::write_text(out / "ablation.md", md);
  ordered_json modes_json = ordered_json::array();
  for (auto m : modes) modes_json.push_back(trainer::mode_name(m));
  extra["modes"] = modes_json;
  write_run_json(out, "ablate", argv, base_seed, base.to_kv(), inputs, extra);
  fmt::print("{}", md);
  return 0;
}

// ---------------------------------------------------------------- gradcheck

struct GradcheckArgs {
  int seeds = 10;
  std::string inject_bug;
};

int cmd_gradcheck(Common c, const GradcheckArgs& a, const std::vector<std::string>& argv) {
  if (a.seeds < 1) throw UsageError("gradcheck: --seeds must be >= 1");
  if (!a.inject_bug.empty()) {
    bool known = false;
    for (const auto& k : ag::gradcheck_registry()) known = known || k.op == a.inject_bug;
    if (!known) throw UsageError("gradcheck: unknown op '" + a.inject_bug + "'");
  }
  if (c.out.empty()) c.out = "gradcheck";
  const auto out = require_out(c, "gradcheck");
  const auto start = std::chrono::steady_clock::now();
  const auto reports = ag::run_gradcheck(a.seeds, a.inject_bug);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  std::string csv = "op,tolerance,worst_rel_error,worst_seed,seeds,passed\n";
  std::vector<std::string> failed;
  for (const auto& r : reports) {
    if (!r.passed()) failed.push_back(r.op);
    csv += fmt::format("{},{:.0e},{:.3e},{},{},{}\n", r.op, r.tolerance, r.worst_error, r.worst_seed, r.seeds, r.passed() ? 1 : 0);
    if (!c.quiet || !r.passed()) {
      fmt::print("{:<20} {:.3e} <= {:.0e}  {}\n", r.op, r.worst_error, r.tolerance, r.passed() ? "PASS" : "FAIL");
    }
  }
  io::write_text(out / "gradcheck.csv", csv);
  io::KeyValueConfig record;
  record.set("seeds", std::to_string(a.seeds));
  if (!a.inject_bug.empty()) record.set("inject_bug", a.inject_bug);
  ordered_json extra;
  extra["failed"] = failed;
  write_run_json(out, "gradcheck", argv, 0, record, {}, extra);
  fmt::print("{} ops, {} seeds each, {:.1f} s: {}\n", reports.size(), a.seeds, seconds,
             failed.empty() ? std::string("all passed") : fmt::format("FAILED {}", fmt::join(failed, ", ")));
  return failed.empty() ? 0 : kCheckFailed;
}

// ---------------------------------------------------------------- export

struct ExportArgs {
  std::string run;
  std::string data;
  int samples = 4;
  int level = 0;
};

int cmd_export(Common c, const ExportArgs& a, const std::vector<std::string>& argv) {
  if (!fs::is_directory(a.run)) throw IoError("run directory not found: " + a.run);
  const fs::path run(a.run);
  const auto ckpt = run / "checkpoint.wxa";
  const auto metrics_path = run / "metrics.csv";
  if (!fs::exists(ckpt)) throw IoError("checkpoint not found: " + ckpt.string());
  if (!fs::exists(metrics_path)) throw IoError("metrics not found: " + metrics_path.string());
  if (a.samples < 0) throw UsageError("export: --samples must be >= 0");
  if (c.out.empty()) c.out = (run / "export").string();
  auto loaded = models::load_checkpoint(ckpt);
  const auto config = trainer::TrainConfig::from_kv(loaded.meta.train_config);

  std::vector<fs::path> inputs{ckpt, metrics_path};
  const auto out = require_out(c, "export");
  const auto metrics = trainer::read_metrics_csv(metrics_path);
  std::string loss_csv = "iteration,lr,grl,total,det_obj,det_box,det_cls,adv,pal_src,pal_tgt,reg,reg_weighted\n";
  for (const auto& r : metrics) {
    loss_csv += fmt::format("{},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g}\n", r.iteration, r.lr,
                            r.grl, r.total, r.det_obj, r.det_box, r.det_cls, r.adv, r.pal_src, r.pal_tgt, r.reg, r.reg_weighted);
  }
  io::write_text(out / "losses.csv", loss_csv);

  int exported = 0;
  int level = a.level;
  if (!a.data.empty() && a.samples > 0) {
    const auto& pen_levels = loaded.model.config().pen_levels;
    if (level == 0) level = pen_levels.empty() ? 5 : pen_levels.back();
    if (level != 4 && level != 5) throw UsageError("export: --level must be 4 or 5");
    const bool has_pen = loaded.model.config().has_pen(level);
    const auto mf = manifest_file(a.data);
    inputs.push_back(mf);
    const auto manifest = sim::DatasetManifest::load(mf);
    const auto& records = manifest.split(sim::Split::Val).records;
    const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(a.samples), records.size());
    std::vector<DetectionSample> samples;
    for (std::size_t i = 0; i < n; ++i) samples.push_back(sim::load_sample(manifest, sim::Split::Val, records[i]));
    std::vector<Plane> pen;
    if (has_pen) pen = trainer::predict_priors(loaded.model, samples, level, config.pen_on_corrected);
    const fs::path dir = out / "heatmaps";
    fs::create_directories(dir);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& s = samples[i];
      const auto id = file_stem(records[i].id);
      if (s.gt_prior) io::write_pgm(dir / (id + "_gt.pgm"), priors::downscale_prior(*s.gt_prior, level));
      if (s.estimated_prior) io::write_pgm(dir / (id + "_est.pgm"), priors::downscale_prior(*s.estimated_prior, level));
      if (has_pen) io::write_pgm(dir / (id + "_pen.pgm"), pen[i]);
      ++exported;
    }
    if (!has_pen && !c.quiet) fmt::print("note: {} has no prior network at level {}; PEN maps skipped\n", trainer::mode_label(config.mode), level);
  }
  ordered_json extra;
  extra["loss_rows"] = metrics.size();
  extra["heatmap_samples"] = exported;
  if (exported) extra["level"] = level;
  write_run_json(out, "export", argv, config.seed, config.to_kv(), inputs, extra);
  fmt::print("{} loss rows, {} heatmap sample(s) -> {}\n", metrics.size(), exported, out.string());
  return 0;
}

void add_common(CLI::App* sub, Common& c, bool with_config = true) {
  if (with_config) sub->add_option("--config", c.config, "key = value config file");
  sub->add_option("--out", c.out, "output directory");
  sub->add_option("--seed", c.seed, "seed (falls back to WXADAPT_SEED)");
  sub->add_flag("-v,--verbose", c.verbose, "more output; repeat for more");
  sub->add_flag("-q,--quiet", c.quiet, "less output");
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  CLI::App app{"Prior-adversarial domain adaptation for weather-degraded detection"};
  app.set_version_flag("--version", WXADAPT_VERSION);
  app.require_subcommand(1);
  // One per subcommand: CLI11 resets flag targets shared between subcommands.
  std::map<std::string, Common> common;

  SynthArgs synth;
  auto* s_synth = app.add_subcommand("synth", "synthesize a weather dataset");
  add_common(s_synth, common["synth"]);
  s_synth->add_option("--weather", synth.weather, "haze, rain or snow");
  s_synth->add_option("--n", synth.n, "samples in each of the three splits")->check(CLI::PositiveNumber);
  s_synth->add_option("--angle-range", synth.angle_range, "rain angle range in degrees, within [70, 110]")->expected(2);
  s_synth->add_option("--blend", synth.blend, "additive or screen");

  PriorArgs prior;
  auto* s_prior = app.add_subcommand("prior", "estimate weather priors");
  add_common(s_prior, common["prior"]);
  s_prior->add_option("--image", prior.image, "PNG image");
  s_prior->add_option("--gt", prior.gt, "ground-truth PRI1 prior of --image");
  s_prior->add_option("--data", prior.data, "dataset directory or manifest");
  s_prior->add_option("--split", prior.split, "source, target or val");
  s_prior->add_option("--limit", prior.limit, "at most this many samples");
  s_prior->add_option("--kind", prior.kind, "haze, rain or snow (default: dataset weather, else haze)");
  s_prior->add_flag("--compare-gt", prior.compare_gt, "print Pearson r against the ground-truth prior");
  s_prior->add_option("--omega", prior.omega, "dark-channel haze retention");
  s_prior->add_option("--patch", prior.patch, "dark-channel patch size");
  s_prior->add_option("--refine", prior.refine, "guided-filter refinement (true/false)");

  TrainArgs train;
  auto* s_train = app.add_subcommand("train", "train one configuration");
  add_common(s_train, common["train"]);
  s_train->add_option("--data", train.data, "dataset directory or manifest")->required();
  s_train->add_option("--mode", train.mode, "frcnn, d5, d45, d5r5, p5r5, p45, p45r45");
  s_train->add_option("--lambda", train.lambda, "weight of the residual regularizer");
  s_train->add_option("--iterations", train.iterations, "training iterations");
  s_train->add_option("--lr", train.lr, "base learning rate (the late rate is a tenth)");
  s_train->add_option("--eval-interval", train.eval_interval, "evaluate every this many iterations");

  EvalArgs eval;
  auto* s_eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(s_eval, common["eval"], false);
  s_eval->add_option("--run", eval.run, "training run directory");
  s_eval->add_option("--checkpoint", eval.checkpoint, "checkpoint file");
  s_eval->add_option("--data", eval.data, "dataset directory or manifest")->required();
  s_eval->add_option("--split", eval.split, "source, target or val");
  s_eval->add_option("--csv", eval.csv, "results file inside --out, appended to");

  AblateArgs ablate;
  auto* s_ablate = app.add_subcommand("ablate", "ablation ladder or lambda sweep");
  add_common(s_ablate, common["ablate"]);
  s_ablate->add_option("--data", ablate.data, "dataset directory or manifest")->required();
  s_ablate->add_option("--seeds", ablate.seeds, "number of seeds, counted up from --seed");
  s_ablate->add_option("--jobs", ablate.jobs, "runs in parallel");
  s_ablate->add_option("--modes", ablate.modes, "modes to run (default: the five-row ladder)");
  s_ablate->add_flag("--extended", ablate.extended, "add the d45 and p45 rows");
  s_ablate->add_option("--sweep", ablate.sweep, "lambda values; runs a sweep instead of the ladder");
  s_ablate->add_option("--sweep-mode", ablate.sweep_mode, "mode of the lambda sweep");
  s_ablate->add_option("--iterations", ablate.iterations, "training iterations per run");

  GradcheckArgs grad;
  auto* s_grad = app.add_subcommand("gradcheck", "finite-difference check of every op");
  add_common(s_grad, common["gradcheck"], false);
  s_grad->add_option("--seeds", grad.seeds, "random cases per op");
  s_grad->add_option("--inject-bug", grad.inject_bug, "scale one op's analytic gradient by 1.01");

  ExportArgs exp;
  auto* s_export = app.add_subcommand("export", "heatmaps and loss curve of a run");
  add_common(s_export, common["export"], false);
  s_export->add_option("--run", exp.run, "training run directory")->required();
  s_export->add_option("--data", exp.data, "dataset for prior heatmaps");
  s_export->add_option("--samples", exp.samples, "val samples to export");
  s_export->add_option("--level", exp.level, "feature level of the maps (4 or 5)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*s_synth) return cmd_synth(common["synth"], synth, args);
    if (*s_prior) return cmd_prior(common["prior"], prior, args);
    if (*s_train) return cmd_train(common["train"], train, args);
    if (*s_eval) return cmd_eval(common["eval"], eval, args);
    if (*s_ablate) return cmd_ablate(common["ablate"], ablate, args);
    if (*s_grad) return cmd_gradcheck(common["gradcheck"], grad, args);
    if (*s_export) return cmd_export(common["export"], exp, args);
  } catch (const Error& e) {
    std::cerr << "wxadapt: " << e.what() << "\n";
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    std::cerr << "wxadapt: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "wxadapt: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
