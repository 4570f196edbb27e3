#include "wxadapt/trainer/ablation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <thread>

#include <fmt/format.h>

#include "wxadapt/core/error.hpp"
#include "wxadapt/weathersim/scene.hpp"

namespace wxa::trainer {

std::vector<Mode> ladder_modes() { return {Mode::Frcnn, Mode::D5, Mode::D5R5, Mode::P5R5, Mode::P45R45}; }

std::vector<Mode> extended_ladder_modes() {
  return {Mode::Frcnn, Mode::D5, Mode::D45, Mode::D5R5, Mode::P5R5, Mode::P45, Mode::P45R45};
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

RunOutcome run_one(const RunSpec& spec, const TrainingData& data, const fs::path& out_dir) {
  RunOutcome out;
  out.spec = spec;
  const auto start = std::chrono::steady_clock::now();
  try {
    const auto res = train(spec.config, data, out_dir.empty() ? fs::path() : out_dir / spec.dir);
    out.result = res.evals.back().result;
    out.target_samples = res.target_samples_drawn;
    out.final_reg = res.metrics.back().reg;
  } catch (const DivergenceError& e) {
    out.diverged = true;
    out.error = e.what();
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

std::string class_label(int c) { return c < sim::kNumClasses ? sim::class_name(c) : std::to_string(c); }

std::string fmt_value(double v) { return std::isfinite(v) ? fmt::format("{:.6f}", v) : std::string("nan"); }

}  // namespace

std::vector<RunOutcome> run_grid(const std::vector<RunSpec>& specs, const TrainingData& data, const fs::path& out_dir,
                                 int jobs, const std::function<void(const RunOutcome&)>& on_done) {
  if (jobs < 1) throw UsageError("ablation: jobs must be >= 1");
  {
    std::vector<fs::path> dirs;
    for (const auto& s : specs) dirs.push_back(s.dir);
    std::sort(dirs.begin(), dirs.end());
    if (std::adjacent_find(dirs.begin(), dirs.end()) != dirs.end()) throw UsageError("ablation: run directories must be unique");
  }
  std::vector<RunOutcome> outcomes(specs.size());
  std::atomic<std::size_t> next{0};
  std::mutex report;
  std::exception_ptr failure;
  auto worker = [&] {
    for (std::size_t i = next++; i < specs.size(); i = next++) {
      try {
        outcomes[i] = run_one(specs[i], data, out_dir);
      } catch (...) {
        std::lock_guard lock(report);
        if (!failure) failure = std::current_exception();
        next = specs.size();
        return;
      }
      std::lock_guard lock(report);
      if (on_done) on_done(outcomes[i]);
    }
  };
  const auto n = static_cast<std::size_t>(std::min<std::size_t>(static_cast<std::size_t>(jobs), specs.size()));
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return outcomes;
}

double median(std::vector<double> values) {
  std::erase_if(values, [](double v) { return !std::isfinite(v); });
  if (values.empty()) return kNaN;
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size() / 2;
  return values.size() % 2 ? values[m] : 0.5 * (values[m - 1] + values[m]);
}

const AblationRow& AblationTable::row(Mode mode) const {
  for (const auto& r : rows)
    if (r.mode == mode) return r;
  throw UsageError("ablation: no row for mode " + mode_name(mode));
}

AblationTable ablation_run(const TrainConfig& base, const TrainingData& data, const std::vector<Mode>& modes,
                           const std::vector<std::uint64_t>& seeds, const fs::path& out_dir, int jobs,
                           const std::function<void(const RunOutcome&)>& on_done) {
  if (modes.empty() || seeds.empty()) throw UsageError("ablation: need at least one mode and one seed");
  std::vector<RunSpec> specs;
  for (Mode m : modes) {
    for (auto seed : seeds) {
      RunSpec s;
      s.label = mode_label(m);
      s.config = base;
      s.config.mode = m;
      s.config.seed = seed;
      s.config.validate();
      s.dir = fs::path(mode_name(m)) / ("seed" + std::to_string(seed));
      specs.push_back(std::move(s));
    }
  }

  AblationTable table;
  table.seeds = seeds;
  table.num_classes = data.num_classes;
  table.runs = run_grid(specs, data, out_dir, jobs, on_done);
  const auto nc = static_cast<std::size_t>(data.num_classes);
  for (std::size_t mi = 0; mi < modes.size(); ++mi) {
    AblationRow row;
    row.mode = modes[mi];
    std::vector<std::vector<double>> per_class(nc);
    for (std::size_t si = 0; si < seeds.size(); ++si) {
      const auto& run = table.runs[mi * seeds.size() + si];
      row.target_samples = std::max(row.target_samples, run.target_samples);
      if (run.diverged) {
        ++row.diverged;
        row.maps.push_back(kNaN);
        continue;
      }
      row.maps.push_back(run.result.map);
      for (std::size_t c = 0; c < nc; ++c) per_class[c].push_back(run.result.ap.at(c));
    }
    row.median_map = median(row.maps);
    for (auto& v : per_class) row.median_ap.push_back(median(v));
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string ablation_csv(const AblationTable& table) {
  std::string s = "mode,label";
  for (int c = 0; c < table.num_classes; ++c) s += ",ap_" + class_label(c);
  s += ",map";
  for (auto seed : table.seeds) s += ",map_seed" + std::to_string(seed);
  s += ",target_images,diverged\n";
  for (const auto& r : table.rows) {
    s += mode_name(r.mode) + "," + mode_label(r.mode);
    for (double v : r.median_ap) s += "," + fmt_value(v);
    s += "," + fmt_value(r.median_map);
    for (double v : r.maps) s += "," + fmt_value(v);
    s += fmt::format(",{},{}\n", r.target_samples, r.diverged);
  }
  return s;
}

std::string ablation_markdown(const AblationTable& table) {
  auto pct = [](double v) { return std::isfinite(v) ? fmt::format("{:.1f}", 100 * v) : std::string("n/a"); };
  std::string s = "| Method |";
  std::string rule = "|---|";
  for (int c = 0; c < table.num_classes; ++c) {
    s += " " + class_label(c) + " |";
    rule += "---:|";
  }
  s += " mAP | target images | diverged |\n";
  rule += "---:|---:|---:|\n";
  s += rule;
  for (const auto& r : table.rows) {
    s += "| " + mode_label(r.mode) + " |";
    for (double v : r.median_ap) s += " " + pct(v) + " |";
    s += fmt::format(" {} | {} | {}/{} |\n", pct(r.median_map), r.target_samples, r.diverged, table.seeds.size());
  }
  return s;
}

std::vector<SweepRow> lambda_sweep(const TrainConfig& base, const TrainingData& data, const std::vector<double>& lambdas,
                                   const std::vector<std::uint64_t>& seeds, const fs::path& out_dir, int jobs,
                                   const std::function<void(const RunOutcome&)>& on_done) {
  if (lambdas.empty() || seeds.empty()) throw UsageError("lambda sweep: need at least one lambda and one seed");
  std::vector<RunSpec> specs;
  for (double l : lambdas) {
    for (auto seed : seeds) {
      RunSpec s;
      s.label = fmt::format("lambda={}", l);
      s.config = base;
      s.config.lambda_reg = l;
      s.config.seed = seed;
      s.config.validate();
      s.dir = fs::path(fmt::format("lambda_{}", l)) / ("seed" + std::to_string(seed));
      specs.push_back(std::move(s));
    }
  }
  const auto runs = run_grid(specs, data, out_dir, jobs, on_done);
  std::vector<SweepRow> rows;
  for (const auto& run : runs) {
    SweepRow r;
    r.lambda = run.spec.config.lambda_reg;
    r.seed = run.spec.config.seed;
    r.diverged = run.diverged;
    r.map = run.diverged ? kNaN : run.result.map;
    r.final_reg = run.final_reg;
    rows.push_back(r);
  }
  return rows;
}

std::string lambda_sweep_csv(const std::vector<SweepRow>& rows) {
  std::string s = "lambda,seed,diverged,map,final_reg\n";
  std::vector<double> order;
  std::map<double, std::vector<const SweepRow*>> by_lambda;
  for (const auto& r : rows) {
    s += fmt::format("{},{},{},{},{:.9g}\n", r.lambda, r.seed, r.diverged ? 1 : 0, fmt_value(r.map), r.final_reg);
    if (!by_lambda.count(r.lambda)) order.push_back(r.lambda);
    by_lambda[r.lambda].push_back(&r);
  }
  for (double l : order) {
    std::vector<double> maps, regs;
    int diverged = 0;
    for (const auto* r : by_lambda[l]) {
      maps.push_back(r->map);
      regs.push_back(r->diverged ? kNaN : r->final_reg);
      diverged += r->diverged;
    }
    s += fmt::format("{},median,{},{},{}\n", l, diverged, fmt_value(median(maps)), fmt_value(median(regs)));
  }
  return s;
}

}  // namespace wxa::trainer
