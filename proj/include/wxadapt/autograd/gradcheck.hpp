#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "wxadapt/autograd/tape.hpp"
#include "wxadapt/autograd/tensor.hpp"

namespace wxa::ag {

using LossFn = std::function<Tensor<double>(Tape<double>&, std::vector<Tensor<double>>&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t input_index = 0;  // which input holds the worst coordinate
  std::size_t coord = 0;        // flat index within that input
  std::size_t coords_checked = 0;
};

/// Compares the tape gradient of a scalar loss against central differences
/// (f(x+eps) - f(x-eps)) / 2eps for every coordinate of every input that
/// requires a gradient. Relative error is |a - n| / max(|a|, |n|, 1e-5).
/// `analytic_scale` multiplies the analytic gradient before comparison; it
/// exists to mutation-test the checker itself.
/// When `numeric_loss` is given, the central differences are taken of it
/// instead of `loss` (used where the tape gradient is deliberately not the
/// derivative of the forward value, as with gradient reversal).
GradCheckResult finite_diff_check(const LossFn& loss, std::vector<Tensor<double>> inputs, double eps = 1e-6,
                                  double analytic_scale = 1.0, const LossFn& numeric_loss = {});

struct GradCheckProblem {
  LossFn loss;
  LossFn numeric_loss;  // empty: differentiate `loss` itself
  std::vector<Tensor<double>> inputs;
};

/// A randomized gradient check for one op.
struct GradCheckCase {
  std::string op;
  double tolerance = 1e-4;
  std::function<GradCheckProblem(std::uint64_t seed)> make;
};

/// Every differentiable op with its randomized check; each op appears once.
const std::vector<GradCheckCase>& gradcheck_registry();

struct GradCheckReport {
  std::string op;
  double tolerance = 0.0;
  double worst_error = 0.0;
  std::uint64_t worst_seed = 0;
  int seeds = 0;
  [[nodiscard]] bool passed() const { return worst_error <= tolerance; }
};

/// Runs every registered case on `seeds` seeds. `corrupt_op` names an op whose
/// analytic gradient is scaled by 1.01 (mutation check); empty for none.
std::vector<GradCheckReport> run_gradcheck(int seeds, const std::string& corrupt_op = {});

}  // namespace wxa::ag
