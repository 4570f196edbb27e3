#include "wxadapt/autograd/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "wxadapt/autograd/ops.hpp"
#include "wxadapt/core/rng.hpp"

namespace wxa::ag {

GradCheckResult finite_diff_check(const LossFn& loss, std::vector<Tensor<double>> inputs, double eps,
                                  double analytic_scale, const LossFn& numeric_loss) {
  if (!(eps >= 1e-7 && eps <= 1e-2)) throw UsageError("finite_diff_check: eps must lie in [1e-7, 1e-2]");
  for (auto& t : inputs) t.zero_grad();
  std::vector<std::vector<double>> analytic(inputs.size());
  {
    Tape<double> tape;
    auto out = loss(tape, inputs);
    if (out.numel() != 1) throw ShapeError("finite_diff_check: loss must be scalar, got " + shape_string(out.shape()));
    tape.backward(out);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (!inputs[i].requires_grad()) continue;
      auto g = inputs[i].grad();
      analytic[i].assign(g.begin(), g.end());
    }
  }
  auto eval = [&]() {
    Tape<double> tape;
    auto out = numeric_loss ? numeric_loss(tape, inputs) : loss(tape, inputs);
    return out.item();
  };

  GradCheckResult result;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!inputs[i].requires_grad()) continue;
    auto data = inputs[i].data();
    for (std::size_t k = 0; k < data.size(); ++k) {
      const double saved = data[k];
      data[k] = saved + eps;
      const double up = eval();
      data[k] = saved - eps;
      const double down = eval();
      data[k] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[i][k] * analytic_scale;
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-5});
      const double err = std::abs(a - numeric) / denom;
      ++result.coords_checked;
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.input_index = i;
        result.coord = k;
      }
    }
  }
  return result;
}

namespace {

Tensor<double> random_tensor(Rng& rng, Shape shape, double scale = 1.0, bool requires_grad = true) {
  std::vector<double> v(numel_of(shape));
  for (auto& x : v) x = rng.normal() * scale;
  return Tensor<double>(std::move(shape), std::move(v), requires_grad);
}

// Values bounded away from zero: |x| in [margin, margin + 1].
Tensor<double> away_from_zero(Rng& rng, Shape shape, double margin) {
  std::vector<double> v(numel_of(shape));
  for (auto& x : v) {
    const double mag = margin + rng.uniform();
    x = rng.uniform() < 0.5 ? -mag : mag;
  }
  return Tensor<double>(std::move(shape), std::move(v), true);
}

std::vector<double> random_weights(Rng& rng, std::size_t n) {
  std::vector<double> w(n);
  for (auto& x : w) x = rng.uniform(-1.0, 1.0);
  return w;
}

// Reduces a non-scalar op output to a scalar with fixed random weights.
LossFn reduce(std::function<Tensor<double>(Tape<double>&, std::vector<Tensor<double>>&)> op, std::vector<double> w) {
  return [op = std::move(op), w = std::move(w)](Tape<double>& tape, std::vector<Tensor<double>>& in) {
    auto y = op(tape, in);
    return weighted_sum<double>(tape, y, w);
  };
}

using Made = GradCheckProblem;

std::vector<GradCheckCase> build_registry() {
  std::vector<GradCheckCase> cases;

  cases.push_back({"conv2d", 1e-4, [](std::uint64_t seed) -> Made {
                     Rng rng(seed);
                     auto x = random_tensor(rng, {2, 4, 8, 8});
                     auto w = random_tensor(rng, {8, 4, 3, 3}, 0.3);
                     auto b = random_tensor(rng, {8});
                     const int stride = 1 + int(seed % 2);
                     Shape out{2, 8, std::size_t((8 + 2 - 3) / stride + 1), std::size_t((8 + 2 - 3) / stride + 1)};
                     auto fn = [stride](Tape<double>& t, std::vector<Tensor<double>>& in) {
                       return conv2d<double>(t, in[0], in[1], in[2], stride, 1);
                     };
                     return {reduce(fn, random_weights(rng, numel_of(out))), {}, {x, w, b}};
                   }});

  cases.push_back({"max_pool2d", 1e-4, [](std::uint64_t seed) -> Made {
                     Rng rng(seed);
                     // Distinct values spaced 0.05 apart so +-eps never changes the argmax.
                     std::vector<double> v(72);
                     std::iota(v.begin(), v.end(), 0.0);
                     for (std::size_t i = v.size() - 1; i > 0; --i) std::swap(v[i], v[rng.uniform_int(0, int(i))]);
                     for (auto& x : v) x = x * 0.05 - 1.5;
                     Tensor<double> x({1, 2, 6, 6}, v, true);
                     auto fn = [](Tape<double>& t, std::vector<Tensor<double>>& in) {
                       return pool2d<double>(t, in[0], PoolKind::Max, 2, 2);
                     };
                     return {reduce(fn, random_weights(rng, 18)), {}, {x}};
                   }});

  cases.push_back({"avg_pool2d", 1e-4, [](std::uint64_t seed) -> Made {
                     Rng rng(seed);
                     auto x = random_tensor(rng, {1, 2, 6, 6});
                     auto fn = [](Tape<double>& t, std::vector<Tensor<double>>& in) {
                       return pool2d<double>(t, in[0], PoolKind::Avg, 2, 2);
                     };
                     return {reduce(fn, random_weights(rng, 18)), {}, {x}};
                   }});

  cases.push_back({"relu", 1e-4, [](std::uint64_t seed) -> Made {
                     Rng rng(seed);
                     auto x = away_from_zero(rng, {3, 17}, 0.05);
                     auto fn = [](Tape<double>& t, std::vector<Tensor<double>>& in) { return relu<double>(t, in[0]); };
                     return {reduce(fn, random_weights(rng, 51)), {}, {x}};
                   }});

  cases.push_back({"tanh", 1e-4, [](std::uint64_t seed) -> Made {
                     Rng rng(seed);
                     auto x = random_tensor(rng, {3, 17});
                     auto fn = [](Tape<double>& t, std::vector<Tensor<double>>& in) { return tanh<double>(t, in[0]); };
                     return {reduce(fn, random_weights(rng, 51)), {}, {x}};
                   }});

  cases.push_back({"batchnorm2d", 1e-3, [](std::uint64_t seed) -> Made {
                     Rng rng(seed);
                     auto x = random_tensor(rng, {4, 3, 5, 5});
                     auto gamma = random_tensor(rng, {3});
                     auto beta = random_tensor(rng, {3});
                     auto stats = std::make_shared<BatchNormStats<double>>(3);
                     auto fn = [stats](Tape<double>& t, std::vector<Tensor<double>>& in) {
                       return batchnorm2d<double>(t, in[0], in[1], in[2], NormMode::Train, *stats);
                     };
                     return {reduce(fn, random_weights(rng, 300)), {}, {x, gamma, beta}};
                   }});

  cases.push_back({"grad_reverse", 1e-4, [](std::uint64_t seed) -> Made {
                     Rng rng(seed);
                     auto x = random_tensor(rng, {2, 9});
                     const double coeff = rng.uniform(0.1, 2.0);
                     // The tape gradient through a GRL is -coeff times the
                     // derivative of its forward, so differences are taken of
                     // -coeff * sum(tanh(x)).
                     auto fn = [coeff](Tape<double>& t, std::vector<Tensor<double>>& in) {
                       auto y = grad_reverse<double>(t, in[0], coeff);
                       return sum<double>(t, tanh<double>(t, y));
                     };
                     auto numeric = [coeff](Tape<double>& t, std::vector<Tensor<double>>& in) {
                       return affine<double>(t, sum<double>(t, tanh<double>(t, in[0])), -coeff, 0.0);
                     };
                     return {fn, numeric, {x}};
                   }});

  cases.push_back({"add", 1e-4, [](std::uint64_t seed) -> Made {
                     Rng rng(seed);
                     auto a = random_tensor(rng, {2, 3, 4});
                     auto b = random_tensor(rng, {2, 3, 4});
                     auto fn = [](Tape<double>& t, std::vector<Tensor<double>>& in) { return add<double>(t, in[0], in[1]); };
                     return {reduce(fn, random_weights(rng, 24)), {}, {a, b}};
                   }});

  cases.push_back({"affine", 1e-4, [](std::uint64_t seed) -> Made {
                     Rng rng(seed);
                     auto x = random_tensor(rng, {5, 4});
                     const double s = rng.uniform(-2, 2), c = rng.uniform(-1, 1);
                     auto fn = [s, c](Tape<double>& t, std::vector<Tensor<double>>& in) {
                       return affine<double>(t, in[0], s, c);
                     };
                     return {reduce(fn, random_weights(rng, 20)), {}, {x}};
                   }});

  cases.push_back({"concat0", 1e-4, [](std::uint64_t seed) -> Made {
                     Rng rng(seed);
                     auto a = random_tensor(rng, {2, 3, 2});
                     auto b = random_tensor(rng, {3, 3, 2});
                     auto fn = [](Tape<double>& t, std::vector<Tensor<double>>& in) {
                       return concat0<double>(t, in[0], in[1]);
                     };
                     return {reduce(fn, random_weights(rng, 30)), {}, {a, b}};
                   }});

  cases.push_back({"slice0", 1e-4, [](std::uint64_t seed) -> Made {
                     Rng rng(seed);
                     auto x = random_tensor(rng, {5, 2, 3});
                     auto fn = [](Tape<double>& t, std::vector<Tensor<double>>& in) {
                       return slice0<double>(t, in[0], 1, 4);
                     };
                     return {reduce(fn, random_weights(rng, 18)), {}, {x}};
                   }});

  cases.push_back({"sum", 1e-4, [](std::uint64_t seed) -> Made {
                     Rng rng(seed);
                     auto x = random_tensor(rng, {3, 7});
                     auto fn = [](Tape<double>& t, std::vector<Tensor<double>>& in) {
                       auto y = tanh<double>(t, in[0]);
                       return sum<double>(t, y);
                     };
                     return {fn, {}, {x}};
                   }});

  cases.push_back({"weighted_sum", 1e-4, [](std::uint64_t seed) -> Made {
                     Rng rng(seed);
                     auto x = random_tensor(rng, {4, 6});
                     return {reduce([](Tape<double>&, std::vector<Tensor<double>>& in) { return in[0]; },
                                    random_weights(rng, 24)),
                             {},
                             {x}};
                   }});

  cases.push_back({"gather", 1e-4, [](std::uint64_t seed) -> Made {
                     Rng rng(seed);
                     auto x = random_tensor(rng, {4, 5});
                     std::vector<std::int64_t> idx(12);
                     for (auto& i : idx) i = rng.uniform_int(0, 19);  // repeats exercise scatter-add
                     auto fn = [idx](Tape<double>& t, std::vector<Tensor<double>>& in) {
                       return gather<double>(t, in[0], idx, {3, 4});
                     };
                     return {reduce(fn, random_weights(rng, 12)), {}, {x}};
                   }});

  cases.push_back({"mse_map_loss", 1e-4, [](std::uint64_t seed) -> Made {
                     Rng rng(seed);
                     auto p = random_tensor(rng, {2, 1, 4, 4});
                     auto q = random_tensor(rng, {2, 1, 4, 4});
                     auto fn = [](Tape<double>& t, std::vector<Tensor<double>>& in) {
                       return mse_map_loss<double>(t, in[0], in[1]);
                     };
                     return {fn, {}, {p, q}};
                   }});

  cases.push_back({"l1_penalty", 1e-4, [](std::uint64_t seed) -> Made {
                     Rng rng(seed);
                     auto x = away_from_zero(rng, {3, 2, 3, 3}, 0.01);
                     auto fn = [](Tape<double>& t, std::vector<Tensor<double>>& in) {
                       return l1_penalty<double>(t, in[0]);
                     };
                     return {fn, {}, {x}};
                   }});

  cases.push_back({"classification_loss", 1e-4, [](std::uint64_t seed) -> Made {
                     Rng rng(seed);
                     auto x = random_tensor(rng, {6, 4}, 2.0);
                     std::vector<int> labels(6);
                     for (auto& l : labels) l = rng.uniform_int(0, 3);
                     auto fn = [labels](Tape<double>& t, std::vector<Tensor<double>>& in) {
                       return classification_loss<double>(t, in[0], labels);
                     };
                     return {fn, {}, {x}};
                   }});

  cases.push_back({"smooth_l1", 1e-4, [](std::uint64_t seed) -> Made {
                     Rng rng(seed);
                     // Differences kept off the |d| == beta seam.
                     const std::size_t n = 16;
                     std::vector<double> p(n), q(n);
                     for (std::size_t i = 0; i < n; ++i) {
                       q[i] = rng.normal();
                       double d = rng.uniform(0.0, 3.0);
                       if (std::abs(d - 1.0) < 0.05) d += 0.1;
                       p[i] = q[i] + (rng.uniform() < 0.5 ? -d : d);
                     }
                     Tensor<double> tp({n}, p, true), tq({n}, q, true);
                     auto fn = [](Tape<double>& t, std::vector<Tensor<double>>& in) {
                       return smooth_l1<double>(t, in[0], in[1], 1.0);
                     };
                     return {fn, {}, {tp, tq}};
                   }});

  cases.push_back({"bce_with_logits", 1e-4, [](std::uint64_t seed) -> Made {
                     Rng rng(seed);
                     auto x = random_tensor(rng, {10}, 2.0);
                     std::vector<double> y(10);
                     for (auto& v : y) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
                     auto fn = [y](Tape<double>& t, std::vector<Tensor<double>>& in) {
                       return bce_with_logits<double>(t, in[0], y);
                     };
                     return {fn, {}, {x}};
                   }});

  return cases;
}

}  // namespace

const std::vector<GradCheckCase>& gradcheck_registry() {
  static const std::vector<GradCheckCase> registry = build_registry();
  return registry;
}

std::vector<GradCheckReport> run_gradcheck(int seeds, const std::string& corrupt_op) {
  std::vector<GradCheckReport> reports;
  for (const auto& c : gradcheck_registry()) {
    GradCheckReport r;
    r.op = c.op;
    r.tolerance = c.tolerance;
    r.seeds = seeds;
    for (int s = 0; s < seeds; ++s) {
      const auto seed = static_cast<std::uint64_t>(1000 + s);
      auto problem = c.make(seed);
      const double scale = (c.op == corrupt_op) ? 1.01 : 1.0;
      const auto res = finite_diff_check(problem.loss, std::move(problem.inputs), 1e-6, scale, problem.numeric_loss);
      if (res.max_rel_error >= r.worst_error) {
        r.worst_error = res.max_rel_error;
        r.worst_seed = seed;
      }
    }
    reports.push_back(r);
  }
  return reports;
}

}  // namespace wxa::ag
