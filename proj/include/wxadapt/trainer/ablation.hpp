#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "wxadapt/trainer/config.hpp"
#include "wxadapt/trainer/evaluate.hpp"
#include "wxadapt/trainer/trainer.hpp"

namespace wxa::trainer {

namespace fs = std::filesystem;

/// The five rows of the main ladder, in table order.
std::vector<Mode> ladder_modes();
/// The ladder plus the supplementary D45 and P45 rows.
std::vector<Mode> extended_ladder_modes();

/// One training run of a grid. `dir` is relative to the grid output
/// directory and must be unique within the grid.
struct RunSpec {
  std::string label;
  TrainConfig config;
  fs::path dir;
};

struct RunOutcome {
  RunSpec spec;
  bool diverged = false;
  std::string error;               // divergence message
  MapResult result;                // final val evaluation; empty when diverged
  std::size_t target_samples = 0;  // target images drawn into training batches
  float final_reg = 0;             // reg term of the last logged iteration
  double seconds = 0;
};

/// Trains every spec on `data` with up to `jobs` runs at a time. Runs that
/// diverge are recorded and do not stop the grid; other errors propagate.
/// `on_done` is called once per finished run, serialized.
std::vector<RunOutcome> run_grid(const std::vector<RunSpec>& specs, const TrainingData& data, const fs::path& out_dir,
                                 int jobs = 1, const std::function<void(const RunOutcome&)>& on_done = {});

struct AblationRow {
  Mode mode = Mode::Frcnn;
  std::vector<double> maps;       // per seed, NaN where diverged
  double median_map = 0;          // over non-diverged seeds; NaN if none
  std::vector<double> median_ap;  // per class, same rule
  std::size_t target_samples = 0; // largest over seeds
  int diverged = 0;
};

struct AblationTable {
  std::vector<std::uint64_t> seeds;
  int num_classes = 0;
  std::vector<AblationRow> rows;
  std::vector<RunOutcome> runs;
  [[nodiscard]] const AblationRow& row(Mode mode) const;
};

/// Median of the finite values; NaN when there are none. Even counts average
/// the two middle values.
double median(std::vector<double> values);

/// Trains `modes` x `seeds` from `base` (mode and seed overridden) and
/// aggregates the final val-target evaluations. Runs land in
/// out_dir/<mode>/seed<k>.
AblationTable ablation_run(const TrainConfig& base, const TrainingData& data, const std::vector<Mode>& modes,
                           const std::vector<std::uint64_t>& seeds, const fs::path& out_dir, int jobs = 1,
                           const std::function<void(const RunOutcome&)>& on_done = {});

std::string ablation_csv(const AblationTable& table);
std::string ablation_markdown(const AblationTable& table);

struct SweepRow {
  double lambda = 0;
  std::uint64_t seed = 0;
  bool diverged = false;
  double map = 0;
  float final_reg = 0;
};

/// Trains `base` at every lambda and seed; runs land in
/// out_dir/lambda_<value>/seed<k>.
std::vector<SweepRow> lambda_sweep(const TrainConfig& base, const TrainingData& data, const std::vector<double>& lambdas,
                                   const std::vector<std::uint64_t>& seeds, const fs::path& out_dir, int jobs = 1,
                                   const std::function<void(const RunOutcome&)>& on_done = {});

/// Columns: lambda, seed, diverged, map, final_reg; then one median row per
/// lambda with seed "median".
std::string lambda_sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace wxa::trainer
