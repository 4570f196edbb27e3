#include "wxadapt/weathersim/dataset.hpp"

#include <atomic>
#include <charconv>
#include <exception>
#include <json.hpp>

#include "wxadapt/core/rng.hpp"
#include "wxadapt/io/image_io.hpp"
#include "wxadapt/io/labels.hpp"

namespace wxa::sim {

using nlohmann::ordered_json;

namespace {

std::array<std::atomic<std::size_t>, 3> g_loaded{};

constexpr std::array<Split, 3> kSplits{Split::Source, Split::Target, Split::Val};

// Shortest text that reads back to the same double.
std::string fmt_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt_double(v[i]);
  return s;
}

std::string blend_name(BlendMode b) { return b == BlendMode::Additive ? "additive" : "screen"; }

BlendMode blend_from_string(const std::string& s) {
  if (s == "additive") return BlendMode::Additive;
  if (s == "screen") return BlendMode::Screen;
  throw UsageError("unknown blend mode '" + s + "' (expected additive or screen)");
}

}  // namespace

std::string split_name(Split split) {
  switch (split) {
    case Split::Source: return "source";
    case Split::Target: return "target";
    case Split::Val: return "val";
  }
  return "?";
}

Split split_from_string(const std::string& name) {
  for (Split s : kSplits)
    if (split_name(s) == name) return s;
  throw UsageError("unknown split '" + name + "' (expected source, target or val)");
}

void SynthConfig::validate() const {
  if (n_source < 1 || n_target < 1 || n_val < 1) throw UsageError("synth: every split needs at least one sample");
  if (scene.height % 32 != 0 || scene.width % 32 != 0 || scene.height <= 0 || scene.width <= 0) {
    throw UsageError("synth: image dims must be positive multiples of 32");
  }
  if (!(beta_min >= 0 && beta_max >= beta_min)) throw UsageError("synth: need 0 <= beta_min <= beta_max");
  if (!(airlight_min > 0 && airlight_max >= airlight_min && airlight_max <= 1)) {
    throw UsageError("synth: airlight range must lie in (0, 1]");
  }
  if (!(angle_min >= 70 && angle_max <= 110 && angle_min <= angle_max)) {
    throw UsageError("synth: rain angle range must lie within [70, 110] degrees");
  }
  if (noise_levels.empty()) throw UsageError("synth: noise_levels must not be empty");
  for (double n : noise_levels)
    if (!(n > 0 && n <= 1)) throw UsageError("synth: noise levels must lie in (0, 1]");
  if (streak_min < 1 || streak_max < streak_min) throw UsageError("synth: bad streak length range");
  if (flake_min < 0 || flake_max < flake_min) throw UsageError("synth: bad flake radius range");
  if (!(intensity_min > 0 && intensity_max <= 1 && intensity_min <= intensity_max)) {
    throw UsageError("synth: intensity range must lie in (0, 1]");
  }
}

priors::PriorParams prior_params_from_kv(const io::KeyValueConfig& kv, priors::PriorParams p) {
  p.omega = kv.get_double("omega", p.omega);
  p.patch = int(kv.get_int("patch", p.patch));
  p.refine = kv.get_bool("refine", p.refine);
  p.guided_radius = int(kv.get_int("guided_radius", p.guided_radius));
  p.guided_eps = kv.get_double("guided_eps", p.guided_eps);
  p.residue_blur_radius = int(kv.get_int("residue_radius", p.residue_blur_radius));
  p.residue_threshold = float(kv.get_double("residue_threshold", p.residue_threshold));
  return p;
}

void prior_params_to_kv(const priors::PriorParams& p, io::KeyValueConfig& kv) {
  kv.set("omega", fmt_double(p.omega));
  kv.set("patch", std::to_string(p.patch));
  kv.set("refine", p.refine ? "true" : "false");
  kv.set("guided_radius", std::to_string(p.guided_radius));
  kv.set("guided_eps", fmt_double(p.guided_eps));
  kv.set("residue_radius", std::to_string(p.residue_blur_radius));
  kv.set("residue_threshold", fmt_double(p.residue_threshold));
}

SynthConfig SynthConfig::from_kv(const io::KeyValueConfig& kv) {
  kv.require_known({"weather", "n", "n_source", "n_target", "n_val", "height", "width", "min_objects", "max_objects",
                    "min_size", "max_size", "depth_near_min", "depth_near_max", "depth_far_min", "depth_far_max",
                    "depth_jitter", "beta_min", "beta_max", "airlight_min", "airlight_max", "airlight_tint",
                    "noise_levels", "angle_min", "angle_max", "streak_min", "streak_max", "flake_min", "flake_max",
                    "intensity_min", "intensity_max", "blend", "seed", "omega", "patch", "refine", "guided_radius",
                    "guided_eps", "residue_radius", "residue_threshold"});
  SynthConfig c;
  c.weather = prior_kind_from_string(kv.get("weather", to_string(c.weather)));
  const int n = int(kv.get_int("n", 0));
  if (n > 0) c.n_source = c.n_target = c.n_val = n;
  c.n_source = int(kv.get_int("n_source", c.n_source));
  c.n_target = int(kv.get_int("n_target", c.n_target));
  c.n_val = int(kv.get_int("n_val", c.n_val));
  auto& s = c.scene;
  s.height = int(kv.get_int("height", s.height));
  s.width = int(kv.get_int("width", s.width));
  s.min_objects = int(kv.get_int("min_objects", s.min_objects));
  s.max_objects = int(kv.get_int("max_objects", s.max_objects));
  s.min_size = float(kv.get_double("min_size", s.min_size));
  s.max_size = float(kv.get_double("max_size", s.max_size));
  s.depth_near_min = float(kv.get_double("depth_near_min", s.depth_near_min));
  s.depth_near_max = float(kv.get_double("depth_near_max", s.depth_near_max));
  s.depth_far_min = float(kv.get_double("depth_far_min", s.depth_far_min));
  s.depth_far_max = float(kv.get_double("depth_far_max", s.depth_far_max));
  s.depth_jitter = float(kv.get_double("depth_jitter", s.depth_jitter));
  c.beta_min = kv.get_double("beta_min", c.beta_min);
  c.beta_max = kv.get_double("beta_max", c.beta_max);
  c.airlight_min = kv.get_double("airlight_min", c.airlight_min);
  c.airlight_max = kv.get_double("airlight_max", c.airlight_max);
  c.airlight_tint = kv.get_double("airlight_tint", c.airlight_tint);
  c.noise_levels = kv.get_list("noise_levels", c.noise_levels);
  c.angle_min = kv.get_double("angle_min", c.angle_min);
  c.angle_max = kv.get_double("angle_max", c.angle_max);
  c.streak_min = int(kv.get_int("streak_min", c.streak_min));
  c.streak_max = int(kv.get_int("streak_max", c.streak_max));
  c.flake_min = int(kv.get_int("flake_min", c.flake_min));
  c.flake_max = int(kv.get_int("flake_max", c.flake_max));
  c.intensity_min = kv.get_double("intensity_min", c.intensity_min);
  c.intensity_max = kv.get_double("intensity_max", c.intensity_max);
  c.blend = blend_from_string(kv.get("blend", blend_name(c.blend)));
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long>(c.seed)));
  c.prior_params = prior_params_from_kv(kv, c.prior_params);
  c.validate();
  return c;
}

io::KeyValueConfig SynthConfig::to_kv() const {
  io::KeyValueConfig kv;
  kv.set("weather", to_string(weather));
  kv.set("n_source", std::to_string(n_source));
  kv.set("n_target", std::to_string(n_target));
  kv.set("n_val", std::to_string(n_val));
  kv.set("height", std::to_string(scene.height));
  kv.set("width", std::to_string(scene.width));
  kv.set("min_objects", std::to_string(scene.min_objects));
  kv.set("max_objects", std::to_string(scene.max_objects));
  kv.set("min_size", fmt_double(scene.min_size));
  kv.set("max_size", fmt_double(scene.max_size));
  kv.set("depth_near_min", fmt_double(scene.depth_near_min));
  kv.set("depth_near_max", fmt_double(scene.depth_near_max));
  kv.set("depth_far_min", fmt_double(scene.depth_far_min));
  kv.set("depth_far_max", fmt_double(scene.depth_far_max));
  kv.set("depth_jitter", fmt_double(scene.depth_jitter));
  kv.set("beta_min", fmt_double(beta_min));
  kv.set("beta_max", fmt_double(beta_max));
  kv.set("airlight_min", fmt_double(airlight_min));
  kv.set("airlight_max", fmt_double(airlight_max));
  kv.set("airlight_tint", fmt_double(airlight_tint));
  kv.set("noise_levels", join(noise_levels));
  kv.set("angle_min", fmt_double(angle_min));
  kv.set("angle_max", fmt_double(angle_max));
  kv.set("streak_min", std::to_string(streak_min));
  kv.set("streak_max", std::to_string(streak_max));
  kv.set("flake_min", std::to_string(flake_min));
  kv.set("flake_max", std::to_string(flake_max));
  kv.set("intensity_min", fmt_double(intensity_min));
  kv.set("intensity_max", fmt_double(intensity_max));
  kv.set("blend", blend_name(blend));
  kv.set("seed", std::to_string(seed));
  prior_params_to_kv(prior_params, kv);
  return kv;
}

GeneratedSample generate_sample(const SynthConfig& config, Split split, int index) {
  const std::uint64_t stream = static_cast<std::uint64_t>(split) * 1000003ULL + static_cast<std::uint64_t>(index);
  const std::uint64_t sample_seed = Rng::derive(config.seed, stream).next();
  Rng rng = Rng::derive(sample_seed, 1);

  GeneratedSample g;
  auto& rec = g.record;
  rec.id = split_name(split) + "/" + std::to_string(index);
  rec.seed = sample_seed;

  const SceneSpec spec = random_scene(config.scene, Rng::derive(sample_seed, 0).next());
  RenderedScene scene = render_scene(spec);
  rec.num_objects = static_cast<int>(scene.objects.size());

  auto& s = g.sample;
  s.objects = std::move(scene.objects);
  s.synthetic = true;
  s.clean = split == Split::Source;
  const int h = scene.image.height, w = scene.image.width;

  if (s.clean) {
    s.image = io::quantize_8bit(scene.image);
    const float ideal = config.weather == PriorKind::Haze ? 1.0f : 0.0f;
    s.gt_prior = PriorMap::constant(h, w, ideal, config.weather);
  } else if (config.weather == PriorKind::Haze) {
    rec.beta = rng.uniform(config.beta_min, config.beta_max);
    const double grey = rng.uniform(config.airlight_min, config.airlight_max);
    for (auto& c : rec.airlight) {
      c = static_cast<float>(std::clamp(grey + rng.uniform(-config.airlight_tint, config.airlight_tint), 0.05, 1.0));
    }
    Degraded d = apply_haze(scene.image, scene.depth,
                            rec.beta, priors::AtmosphericLight(rec.airlight[0], rec.airlight[1], rec.airlight[2]));
    s.image = io::quantize_8bit(d.image);
    s.gt_prior = std::move(d.prior);
  } else {
    rec.noise_level = config.noise_levels[rng.uniform_int(0, int(config.noise_levels.size()) - 1)];
    rec.intensity = rng.uniform(config.intensity_min, config.intensity_max);
    const std::uint64_t mask_seed = Rng::derive(sample_seed, 2).next();
    if (config.weather == PriorKind::Snow) {
      rec.flake_radius = rng.uniform_int(config.flake_min, config.flake_max);
      g.mask = gen_snow_mask(h, w, rec.noise_level, rec.flake_radius, mask_seed).values;
      Degraded d = apply_snow(scene.image, g.mask, rec.intensity, config.blend);
      s.image = io::quantize_8bit(d.image);
      s.gt_prior = std::move(d.prior);
    } else {
      rec.angle = rng.uniform(config.angle_min, config.angle_max);
      rec.streak_length = rng.uniform_int(config.streak_min, config.streak_max);
      g.mask = gen_rain_mask(h, w, rec.noise_level, rec.angle, rec.streak_length, mask_seed).values;
      Degraded d = apply_rain(scene.image, g.mask, rec.intensity, config.blend);
      s.image = io::quantize_8bit(d.image);
      s.gt_prior = std::move(d.prior);
    }
  }
  s.depth = std::move(scene.depth);
  s.estimated_prior = priors::estimate_prior(s.image, config.weather, config.prior_params);
  return g;
}

namespace {

ordered_json record_json(const SampleRecord& r, PriorKind weather, bool degraded) {
  ordered_json j;
  j["id"] = r.id;
  j["image"] = r.image;
  j["labels"] = r.labels;
  j["gt_prior"] = r.gt_prior;
  j["est_prior"] = r.est_prior;
  j["depth"] = r.depth;
  if (!r.mask.empty()) j["mask"] = r.mask;
  j["seed"] = r.seed;
  j["num_objects"] = r.num_objects;
  if (weather == PriorKind::Haze) {
    j["beta"] = r.beta;
    if (degraded) j["airlight"] = r.airlight;
  } else {
    j["intensity"] = r.intensity;
    if (degraded) {
      j["noise_level"] = r.noise_level;
      if (weather == PriorKind::Snow) {
        j["flake_radius"] = r.flake_radius;
      } else {
        j["angle"] = r.angle;
        j["streak_length"] = r.streak_length;
      }
    }
  }
  return j;
}

SampleRecord record_from_json(const nlohmann::json& j) {
  SampleRecord r;
  r.id = j.at("id").get<std::string>();
  r.image = j.at("image").get<std::string>();
  r.labels = j.at("labels").get<std::string>();
  r.gt_prior = j.at("gt_prior").get<std::string>();
  r.est_prior = j.at("est_prior").get<std::string>();
  r.depth = j.at("depth").get<std::string>();
  r.mask = j.value("mask", std::string());
  r.seed = j.at("seed").get<std::uint64_t>();
  r.num_objects = j.at("num_objects").get<int>();
  r.beta = j.value("beta", 0.0);
  if (j.contains("airlight")) r.airlight = j.at("airlight").get<std::array<float, 3>>();
  r.intensity = j.value("intensity", 0.0);
  r.noise_level = j.value("noise_level", 0.0);
  r.angle = j.value("angle", 0.0);
  r.streak_length = j.value("streak_length", 0);
  r.flake_radius = j.value("flake_radius", 0);
  return r;
}

}  // namespace

std::string DatasetManifest::to_json() const {
  ordered_json j;
  j["format"] = "wxadapt-dataset";
  j["version"] = 1;
  j["weather"] = wxa::to_string(weather);
  j["height"] = height;
  j["width"] = width;
  j["num_classes"] = num_classes;
  ordered_json names = ordered_json::array();
  for (int c = 0; c < num_classes; ++c) names.push_back(class_name(c));
  j["classes"] = names;
  j["seed"] = seed;
  ordered_json cfg = ordered_json::object();
  for (const auto& [k, v] : config.entries()) cfg[k] = v;
  j["config"] = cfg;
  ordered_json splits_json = ordered_json::object();
  for (const auto& sp : splits) {
    ordered_json s;
    s["domain"] = sp.domain;
    s["degraded"] = sp.degraded;
    s["labels_eval_only"] = sp.labels_eval_only;
    s["count"] = sp.records.size();
    ordered_json recs = ordered_json::array();
    for (const auto& r : sp.records) recs.push_back(record_json(r, weather, sp.degraded));
    s["records"] = recs;
    splits_json[split_name(sp.split)] = s;
  }
  j["splits"] = splits_json;
  return j.dump(1) + "\n";
}

DatasetManifest DatasetManifest::load(const fs::path& manifest_file) {
  DatasetManifest m;
  m.root = manifest_file.parent_path();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_text(manifest_file));
    if (j.at("format").get<std::string>() != "wxadapt-dataset") throw IoError("not a dataset manifest");
    m.weather = prior_kind_from_string(j.at("weather").get<std::string>());
    m.height = j.at("height").get<int>();
    m.width = j.at("width").get<int>();
    m.num_classes = j.at("num_classes").get<int>();
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& [k, v] : j.at("config").items()) m.config.set(k, v.get<std::string>());
    for (Split sp : kSplits) {
      const auto& s = j.at("splits").at(split_name(sp));
      auto& out = m.splits[static_cast<int>(sp)];
      out.split = sp;
      out.domain = s.at("domain").get<std::string>();
      out.degraded = s.at("degraded").get<bool>();
      out.labels_eval_only = s.at("labels_eval_only").get<bool>();
      for (const auto& r : s.at("records")) out.records.push_back(record_from_json(r));
      if (s.at("count").get<std::size_t>() != out.records.size()) {
        throw IoError("split " + split_name(sp) + ": count does not match the record list");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed manifest " + manifest_file.string() + ": " + e.what());
  }
  for (const auto& sp : m.splits)
    for (const auto& r : sp.records)
      for (const std::string* f : {&r.image, &r.labels, &r.gt_prior, &r.est_prior, &r.depth, &r.mask}) {
        if (!f->empty() && !fs::exists(m.root / *f)) throw IoError("manifest references missing file " + *f);
      }
  return m;
}

DatasetManifest synthesize_dataset(const SynthConfig& config, const fs::path& out_dir) {
  config.validate();
  const bool created_root = !fs::exists(out_dir);
  std::vector<fs::path> created;
  auto cleanup = [&] {
    std::error_code ec;
    if (created_root) {
      fs::remove_all(out_dir, ec);
    } else {
      for (const auto& p : created) fs::remove_all(p, ec);
    }
  };
  try {
    fs::create_directories(out_dir);
    DatasetManifest m;
    m.root = out_dir;
    m.weather = config.weather;
    m.height = config.scene.height;
    m.width = config.scene.width;
    m.seed = config.seed;
    m.config = config.to_kv();
    const std::array<int, 3> counts{config.n_source, config.n_target, config.n_val};
    const bool has_mask = config.weather != PriorKind::Haze;

    for (Split sp : kSplits) {
      const std::string name = split_name(sp);
      const fs::path split_dir = out_dir / name;
      if (fs::exists(split_dir)) fs::remove_all(split_dir);
      created.push_back(split_dir);
      for (const char* sub : {"images", "labels", "priors_gt", "priors_est", "depth"}) fs::create_directories(split_dir / sub);
      if (has_mask && sp != Split::Source) fs::create_directories(split_dir / "masks");

      auto& out = m.splits[static_cast<int>(sp)];
      out.split = sp;
      out.domain = sp == Split::Source ? "source" : "target";
      out.degraded = sp != Split::Source;
      out.labels_eval_only = sp != Split::Source;
      out.records.resize(static_cast<std::size_t>(counts[static_cast<int>(sp)]));

      std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
      for (int i = 0; i < counts[static_cast<int>(sp)]; ++i) {
        try {
          GeneratedSample g = generate_sample(config, sp, i);
          char stem[16];
          std::snprintf(stem, sizeof stem, "%06d", i);
          auto& r = g.record;
          r.image = name + "/images/" + stem + ".png";
          r.labels = name + "/labels/" + stem + ".jsonl";
          r.gt_prior = name + "/priors_gt/" + stem + ".pri";
          r.est_prior = name + "/priors_est/" + stem + ".pri";
          r.depth = name + "/depth/" + stem + ".pfm";
          io::write_png(out_dir / r.image, g.sample.image);
          io::write_labels(out_dir / r.labels, g.sample.objects);
          io::write_prior(out_dir / r.gt_prior, *g.sample.gt_prior);
          io::write_prior(out_dir / r.est_prior, *g.sample.estimated_prior);
          io::write_pfm(out_dir / r.depth, *g.sample.depth);
          if (!g.mask.empty()) {
            r.mask = name + "/masks/" + stem + ".pfm";
            io::write_pfm(out_dir / r.mask, g.mask);
          }
          out.records[static_cast<std::size_t>(i)] = std::move(r);
        } catch (...) {
#pragma omp critical(wxa_synth_failure)
          if (!failure) failure = std::current_exception();
        }
      }
      if (failure) std::rethrow_exception(failure);
    }
    created.push_back(out_dir / "manifest.json");
    io::write_text(out_dir / "manifest.json", m.to_json());
    return m;
  } catch (const fs::filesystem_error& e) {
    cleanup();
    throw IoError(std::string("synthesize_dataset: ") + e.what());
  } catch (...) {
    cleanup();
    throw;
  }
}

DetectionSample load_sample(const DatasetManifest& manifest, Split split, const SampleRecord& record) {
  DetectionSample s;
  s.image = io::read_png(manifest.root / record.image);
  if (s.image.height != manifest.height || s.image.width != manifest.width) {
    throw IoError("image " + record.image + " has unexpected dimensions");
  }
  s.objects = io::read_labels(manifest.root / record.labels);
  s.depth = io::read_pfm(manifest.root / record.depth);
  s.gt_prior = io::read_prior(manifest.root / record.gt_prior);
  s.estimated_prior = io::read_prior(manifest.root / record.est_prior);
  s.synthetic = true;
  s.clean = split == Split::Source;
  g_loaded[static_cast<int>(split)].fetch_add(1, std::memory_order_relaxed);
  return s;
}

std::vector<DetectionSample> load_split(const DatasetManifest& manifest, Split split) {
  const auto& recs = manifest.split(split).records;
  std::vector<DetectionSample> out(recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) out[i] = load_sample(manifest, split, recs[i]);
  return out;
}

std::array<std::size_t, 3> samples_loaded() {
  return {g_loaded[0].load(), g_loaded[1].load(), g_loaded[2].load()};
}

void reset_load_counters() {
  for (auto& c : g_loaded) c.store(0);
}

}  // namespace wxa::sim
