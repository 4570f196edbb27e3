#include "wxadapt/autograd/ops.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <sstream>

#include "wxadapt/kernels/batchnorm.hpp"
#include "wxadapt/kernels/conv.hpp"
#include "wxadapt/kernels/pool.hpp"

namespace wxa::ag {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

std::atomic<int> g_finite_checks{-1};

bool env_finite_checks() {
  const char* v = std::getenv("WXADAPT_CHECK_FINITE");
  return v != nullptr && std::strcmp(v, "0") != 0 && *v != '\0';
}

template <typename T>
void check_finite(const char* op, const Tensor<T>& t) {
  if (!finite_checks_enabled()) return;
  for (T v : t.data()) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite value in output");
  }
}

template <typename T>
Tensor<T> make_output(Shape shape, bool requires_grad) {
  return Tensor<T>::zeros(std::move(shape), requires_grad);
}

void require_rank(const char* op, const Shape& s, std::size_t rank, const char* what) {
  if (s.size() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got " +
                     shape_string(s));
  }
}

void require_same_shape(const char* op, const Shape& a, const Shape& b) {
  if (a != b) throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
}

}  // namespace

void set_finite_checks(bool enabled) { g_finite_checks.store(enabled ? 1 : 0); }

bool finite_checks_enabled() {
  int v = g_finite_checks.load();
  if (v < 0) {
    v = env_finite_checks() ? 1 : 0;
    g_finite_checks.store(v);
  }
  return v == 1;
}

template <typename T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, int stride,
                 int padding) {
  constexpr const char* op = "conv2d";
  require_rank(op, input.shape(), 4, "input");
  require_rank(op, weight.shape(), 4, "weight");
  if (weight.dim(2) != weight.dim(3)) throw ShapeError("conv2d: kernel must be square, got " + shape_string(weight.shape()));
  if (weight.dim(1) != input.dim(1)) {
    throw ShapeError("conv2d: weight expects " + std::to_string(weight.dim(1)) + " input channels, input has " +
                     std::to_string(input.dim(1)));
  }
  if (bias.defined() && (bias.numel() != weight.dim(0))) {
    throw ShapeError("conv2d: bias has " + std::to_string(bias.numel()) + " values for " +
                     std::to_string(weight.dim(0)) + " output channels");
  }
  if (stride < 1 || padding < 0) throw UsageError("conv2d: stride must be >= 1 and padding >= 0");
  kernels::ConvGeometry g;
  g.batch = int(input.dim(0));
  g.in_ch = int(input.dim(1));
  g.in_h = int(input.dim(2));
  g.in_w = int(input.dim(3));
  g.out_ch = int(weight.dim(0));
  g.kernel = int(weight.dim(2));
  g.stride = stride;
  g.pad = padding;
  if (g.in_h + 2 * padding < g.kernel || g.in_w + 2 * padding < g.kernel) {
    throw ShapeError("conv2d: spatial dims " + shape_string(input.shape()) + " with padding " +
                     std::to_string(padding) + " smaller than kernel " + std::to_string(g.kernel));
  }
  const bool rg = input.requires_grad() || weight.requires_grad() || (bias.defined() && bias.requires_grad());
  auto out = make_output<T>({input.dim(0), weight.dim(0), std::size_t(g.out_h()), std::size_t(g.out_w())}, rg);
  std::span<const T> b = bias.defined() ? bias.data() : std::span<const T>{};
  kernels::conv2d_forward<T>(g, input.data(), weight.data(), b, out.data());
  check_finite(op, out);
  if (rg) {
    tape.record(op, [=, input = input, weight = weight, bias = bias]() mutable {
      if (!out.has_grad()) return;
      std::span<T> gi = input.requires_grad() ? input.grad() : std::span<T>{};
      std::span<T> gw = weight.requires_grad() ? weight.grad() : std::span<T>{};
      std::span<T> gb = (bias.defined() && bias.requires_grad()) ? bias.grad() : std::span<T>{};
      kernels::conv2d_backward<T>(g, std::as_const(input).data(), std::as_const(weight).data(),
                                  std::as_const(out).grad(), gi, gw, gb);
    });
  }
  return out;
}

template <typename T>
Tensor<T> pool2d(Tape<T>& tape, const Tensor<T>& input, PoolKind kind, int window, int stride) {
  constexpr const char* op = "pool2d";
  require_rank(op, input.shape(), 4, "input");
  if (window < 1 || stride < 1) throw UsageError("pool2d: window and stride must be >= 1");
  const int h = int(input.dim(2)), w = int(input.dim(3));
  if (window == stride) {
    if (h % stride != 0) throw ShapeError("pool2d: height " + std::to_string(h) + " not divisible by stride " + std::to_string(stride));
    if (w % stride != 0) throw ShapeError("pool2d: width " + std::to_string(w) + " not divisible by stride " + std::to_string(stride));
  } else if (h < window || w < window) {
    throw ShapeError("pool2d: input " + shape_string(input.shape()) + " smaller than window");
  }
  kernels::PoolGeometry g{int(input.dim(0) * input.dim(1)), h, w, window, stride};
  const bool rg = input.requires_grad();
  auto out = make_output<T>({input.dim(0), input.dim(1), std::size_t(g.out_h()), std::size_t(g.out_w())}, rg);
  if (kind == PoolKind::Max) {
    auto argmax = std::make_shared<std::vector<std::int32_t>>(out.numel());
    kernels::max_pool_forward<T>(g, input.data(), out.data(), *argmax);
    if (rg) {
      tape.record("max_pool2d", [=, input = input]() mutable {
        if (!out.has_grad()) return;
        kernels::max_pool_backward<T>(g, std::as_const(out).grad(), *argmax, input.grad());
      });
    }
  } else {
    kernels::avg_pool_forward<T>(g, input.data(), out.data());
    if (rg) {
      tape.record("avg_pool2d", [=, input = input]() mutable {
        if (!out.has_grad()) return;
        kernels::avg_pool_backward<T>(g, std::as_const(out).grad(), input.grad());
      });
    }
  }
  check_finite(op, out);
  return out;
}

template <typename T>
Tensor<T> activation(Tape<T>& tape, const Tensor<T>& input, Activation kind) {
  const bool rg = input.requires_grad();
  auto out = make_output<T>(input.shape(), rg);
  auto x = input.data();
  auto y = out.data();
  if (kind == Activation::Relu) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  } else {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
  }
  check_finite(kind == Activation::Relu ? "relu" : "tanh", out);
  if (rg) {
    tape.record(kind == Activation::Relu ? "relu" : "tanh", [=, input = input]() mutable {
      if (!out.has_grad()) return;
      auto go = std::as_const(out).grad();
      auto gi = input.grad();
      auto xin = std::as_const(input).data();
      auto yout = std::as_const(out).data();
      if (kind == Activation::Relu) {
        for (std::size_t i = 0; i < gi.size(); ++i)
          if (xin[i] > T(0)) gi[i] += go[i];
      } else {
        for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += go[i] * (T(1) - yout[i] * yout[i]);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> batchnorm2d(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                      NormMode mode, BatchNormStats<T>& stats) {
  constexpr const char* op = "batchnorm2d";
  require_rank(op, input.shape(), 4, "input");
  const std::size_t c = input.dim(1);
  if (gamma.numel() != c || beta.numel() != c || stats.running_mean.size() != c || stats.running_var.size() != c) {
    throw ShapeError("batchnorm2d: parameters do not match " + std::to_string(c) + " channels");
  }
  kernels::NormGeometry g{int(input.dim(0)), int(c), int(input.dim(2) * input.dim(3))};
  const bool train = mode == NormMode::Train;
  if (train && g.per_channel() < 2) {
    throw ShapeError("batchnorm2d: train mode needs at least 2 values per channel (batch*H*W); got input " +
                     shape_string(input.shape()) + ", use a larger batch or eval mode");
  }
  auto mean = std::make_shared<std::vector<T>>(c);
  auto inv_std = std::make_shared<std::vector<T>>(c);
  if (train) {
    std::vector<T> var(c);
    kernels::batchnorm_stats<T>(g, input.data(), *mean, var);
    const T count = T(g.per_channel());
    for (std::size_t i = 0; i < c; ++i) {
      (*inv_std)[i] = T(1) / std::sqrt(var[i] + stats.eps);
      stats.running_mean[i] = (T(1) - stats.momentum) * stats.running_mean[i] + stats.momentum * (*mean)[i];
      stats.running_var[i] =
          (T(1) - stats.momentum) * stats.running_var[i] + stats.momentum * var[i] * count / (count - T(1));
    }
  } else {
    for (std::size_t i = 0; i < c; ++i) {
      (*mean)[i] = stats.running_mean[i];
      (*inv_std)[i] = T(1) / std::sqrt(stats.running_var[i] + stats.eps);
    }
  }
  const bool rg = input.requires_grad() || gamma.requires_grad() || beta.requires_grad();
  auto out = make_output<T>(input.shape(), rg);
  kernels::batchnorm_apply<T>(g, input.data(), *mean, *inv_std, gamma.data(), beta.data(), out.data());
  check_finite(op, out);
  if (rg) {
    tape.record(op, [=, input = input, gamma = gamma, beta = beta]() mutable {
      if (!out.has_grad()) return;
      std::span<T> gi = input.requires_grad() ? input.grad() : std::span<T>{};
      std::span<T> gg = gamma.requires_grad() ? gamma.grad() : std::span<T>{};
      std::span<T> gb = beta.requires_grad() ? beta.grad() : std::span<T>{};
      kernels::batchnorm_backward<T>(g, train, std::as_const(input).data(), *mean, *inv_std,
                                     std::as_const(gamma).data(), std::as_const(out).grad(), gi, gg, gb);
    });
  }
  return out;
}

template <typename T>
Tensor<T> grad_reverse(Tape<T>& tape, const Tensor<T>& input, T coeff) {
  if (!(coeff >= T(0))) throw UsageError("grad_reverse: coefficient must be >= 0");
  const bool rg = input.requires_grad();
  auto out = Tensor<T>(input.shape(), std::vector<T>(input.data().begin(), input.data().end()), rg);
  if (rg) {
    tape.record("grad_reverse", [=, input = input]() mutable {
      if (!out.has_grad()) return;
      auto go = std::as_const(out).grad();
      auto gi = input.grad();
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += -coeff * go[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("add", a.shape(), b.shape());
  const bool rg = a.requires_grad() || b.requires_grad();
  auto out = make_output<T>(a.shape(), rg);
  auto y = out.data();
  auto xa = a.data();
  auto xb = b.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xa[i] + xb[i];
  check_finite("add", out);
  if (rg) {
    tape.record("add", [=, a = a, b = b]() mutable {
      if (!out.has_grad()) return;
      auto go = std::as_const(out).grad();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat0(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() == 0 || a.rank() != b.rank() || !std::equal(a.shape().begin() + 1, a.shape().end(), b.shape().begin() + 1)) {
    throw ShapeError("concat0: shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()) +
                     " differ beyond dimension 0");
  }
  Shape shape = a.shape();
  shape[0] += b.dim(0);
  const bool rg = a.requires_grad() || b.requires_grad();
  auto out = make_output<T>(shape, rg);
  auto y = out.data();
  std::copy(a.data().begin(), a.data().end(), y.begin());
  std::copy(b.data().begin(), b.data().end(), y.begin() + static_cast<std::ptrdiff_t>(a.numel()));
  if (rg) {
    tape.record("concat0", [=, a = a, b = b]() mutable {
      if (!out.has_grad()) return;
      auto go = std::as_const(out).grad();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        const std::size_t off = a.numel();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[off + i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> slice0(Tape<T>& tape, const Tensor<T>& input, std::size_t begin, std::size_t end) {
  if (input.rank() == 0 || begin >= end || end > input.dim(0)) {
    throw ShapeError("slice0: range [" + std::to_string(begin) + ", " + std::to_string(end) + ") invalid for shape " +
                     shape_string(input.shape()));
  }
  Shape shape = input.shape();
  shape[0] = end - begin;
  const std::size_t row = input.numel() / input.dim(0);
  const bool rg = input.requires_grad();
  auto out = make_output<T>(shape, rg);
  auto x = input.data();
  std::copy(x.begin() + static_cast<std::ptrdiff_t>(begin * row), x.begin() + static_cast<std::ptrdiff_t>(end * row),
            out.data().begin());
  if (rg) {
    tape.record("slice0", [=, input = input]() mutable {
      if (!out.has_grad()) return;
      auto go = std::as_const(out).grad();
      auto gi = input.grad();
      for (std::size_t i = 0; i < go.size(); ++i) gi[begin * row + i] += go[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> affine(Tape<T>& tape, const Tensor<T>& input, T scale, T shift) {
  const bool rg = input.requires_grad();
  auto out = make_output<T>(input.shape(), rg);
  auto x = input.data();
  auto y = out.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = scale * x[i] + shift;
  check_finite("affine", out);
  if (rg) {
    tape.record("affine", [=, input = input]() mutable {
      if (!out.has_grad()) return;
      auto go = std::as_const(out).grad();
      auto gi = input.grad();
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += scale * go[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& input) {
  const bool rg = input.requires_grad();
  T acc = 0;
  for (T v : input.data()) acc += v;
  auto out = Tensor<T>::scalar(acc, rg);
  check_finite("sum", out);
  if (rg) {
    tape.record("sum", [=, input = input]() mutable {
      if (!out.has_grad()) return;
      const T go = std::as_const(out).grad()[0];
      for (auto& g : input.grad()) g += go;
    });
  }
  return out;
}

template <typename T>
Tensor<T> weighted_sum(Tape<T>& tape, const Tensor<T>& input, std::span<const T> weights) {
  if (weights.size() != input.numel()) throw ShapeError("weighted_sum: weight count does not match input");
  const bool rg = input.requires_grad();
  T acc = 0;
  auto x = input.data();
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * weights[i];
  auto out = Tensor<T>::scalar(acc, rg);
  check_finite("weighted_sum", out);
  if (rg) {
    auto w = std::make_shared<std::vector<T>>(weights.begin(), weights.end());
    tape.record("weighted_sum", [=, input = input]() mutable {
      if (!out.has_grad()) return;
      const T go = std::as_const(out).grad()[0];
      auto gi = input.grad();
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += go * (*w)[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> gather(Tape<T>& tape, const Tensor<T>& input, std::span<const std::int64_t> index, Shape shape) {
  if (numel_of(shape) != index.size()) {
    throw ShapeError("gather: shape " + shape_string(shape) + " does not match " + std::to_string(index.size()) +
                     " indices");
  }
  const auto n = static_cast<std::int64_t>(input.numel());
  for (auto i : index)
    if (i < 0 || i >= n) throw ShapeError("gather: index " + std::to_string(i) + " out of range");
  const bool rg = input.requires_grad();
  auto out = make_output<T>(std::move(shape), rg);
  auto x = input.data();
  auto y = out.data();
  for (std::size_t i = 0; i < index.size(); ++i) y[i] = x[static_cast<std::size_t>(index[i])];
  if (rg) {
    auto idx = std::make_shared<std::vector<std::int64_t>>(index.begin(), index.end());
    tape.record("gather", [=, input = input]() mutable {
      if (!out.has_grad()) return;
      auto go = std::as_const(out).grad();
      auto gi = input.grad();
      for (std::size_t i = 0; i < idx->size(); ++i) gi[static_cast<std::size_t>((*idx)[i])] += go[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> mse_map_loss(Tape<T>& tape, const Tensor<T>& pred, const Tensor<T>& target) {
  require_same_shape("mse_map_loss", pred.shape(), target.shape());
  if (pred.numel() == 0) throw ShapeError("mse_map_loss: empty input");
  const bool rg = pred.requires_grad() || target.requires_grad();
  auto p = pred.data();
  auto t = target.data();
  T acc = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const T d = p[i] - t[i];
    acc += d * d;
  }
  const T count = T(p.size());
  auto out = Tensor<T>::scalar(acc / count, rg);
  check_finite("mse_map_loss", out);
  if (rg) {
    tape.record("mse_map_loss", [=, pred = pred, target = target]() mutable {
      if (!out.has_grad()) return;
      const T go = std::as_const(out).grad()[0];
      auto pv = std::as_const(pred).data();
      auto tv = std::as_const(target).data();
      if (pred.requires_grad()) {
        auto gp = pred.grad();
        for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += go * T(2) * (pv[i] - tv[i]) / count;
      }
      if (target.requires_grad()) {
        auto gt = target.grad();
        for (std::size_t i = 0; i < gt.size(); ++i) gt[i] -= go * T(2) * (pv[i] - tv[i]) / count;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> l1_penalty(Tape<T>& tape, const Tensor<T>& input) {
  if (input.rank() == 0 || input.dim(0) == 0) throw ShapeError("l1_penalty: input needs a non-empty batch dimension");
  const T batch = T(input.dim(0));
  const bool rg = input.requires_grad();
  T acc = 0;
  for (T v : input.data()) acc += std::abs(v);
  auto out = Tensor<T>::scalar(acc / batch, rg);
  check_finite("l1_penalty", out);
  if (rg) {
    tape.record("l1_penalty", [=, input = input]() mutable {
      if (!out.has_grad()) return;
      const T go = std::as_const(out).grad()[0];
      auto x = std::as_const(input).data();
      auto gi = input.grad();
      for (std::size_t i = 0; i < gi.size(); ++i) {
        const T s = x[i] > T(0) ? T(1) : (x[i] < T(0) ? T(-1) : T(0));
        gi[i] += go * s / batch;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> classification_loss(Tape<T>& tape, const Tensor<T>& logits, std::span<const int> labels) {
  require_rank("classification_loss", logits.shape(), 2, "logits");
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  if (n == 0 || c == 0) throw ShapeError("classification_loss: empty logits");
  if (labels.size() != n) throw ShapeError("classification_loss: label count does not match logits rows");
  for (int l : labels)
    if (l < 0 || std::size_t(l) >= c) {
      throw UsageError("classification_loss: label " + std::to_string(l) + " outside [0, " + std::to_string(c) + ")");
    }
  auto probs = std::make_shared<std::vector<T>>(n * c);
  auto x = logits.data();
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = x.data() + i * c;
    const T m = *std::max_element(row, row + c);
    T z = 0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - m);
    const T log_z = m + std::log(z);
    for (std::size_t j = 0; j < c; ++j) (*probs)[i * c + j] = std::exp(row[j] - log_z);
    acc += log_z - row[labels[i]];
  }
  const bool rg = logits.requires_grad();
  auto out = Tensor<T>::scalar(acc / T(n), rg);
  check_finite("classification_loss", out);
  if (rg) {
    auto lab = std::make_shared<std::vector<int>>(labels.begin(), labels.end());
    tape.record("classification_loss", [=, logits = logits]() mutable {
      if (!out.has_grad()) return;
      const T go = std::as_const(out).grad()[0] / T(n);
      auto gl = logits.grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) {
          const T onehot = (int(j) == (*lab)[i]) ? T(1) : T(0);
          gl[i * c + j] += go * ((*probs)[i * c + j] - onehot);
        }
    });
  }
  return out;
}

template <typename T>
Tensor<T> smooth_l1(Tape<T>& tape, const Tensor<T>& pred, const Tensor<T>& target, T beta) {
  require_same_shape("smooth_l1", pred.shape(), target.shape());
  if (!(beta > T(0))) throw UsageError("smooth_l1: beta must be > 0");
  if (pred.numel() == 0) throw ShapeError("smooth_l1: empty input");
  auto p = pred.data();
  auto t = target.data();
  T acc = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const T d = std::abs(p[i] - t[i]);
    acc += d < beta ? T(0.5) * d * d / beta : d - T(0.5) * beta;
  }
  const T count = T(p.size());
  const bool rg = pred.requires_grad() || target.requires_grad();
  auto out = Tensor<T>::scalar(acc / count, rg);
  check_finite("smooth_l1", out);
  if (rg) {
    tape.record("smooth_l1", [=, pred = pred, target = target]() mutable {
      if (!out.has_grad()) return;
      const T go = std::as_const(out).grad()[0] / count;
      auto pv = std::as_const(pred).data();
      auto tv = std::as_const(target).data();
      std::vector<T> dd(pv.size());
      for (std::size_t i = 0; i < pv.size(); ++i) {
        const T d = pv[i] - tv[i];
        dd[i] = std::abs(d) < beta ? d / beta : (d > T(0) ? T(1) : T(-1));
      }
      if (pred.requires_grad()) {
        auto gp = pred.grad();
        for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += go * dd[i];
      }
      if (target.requires_grad()) {
        auto gt = target.grad();
        for (std::size_t i = 0; i < gt.size(); ++i) gt[i] -= go * dd[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> bce_with_logits(Tape<T>& tape, const Tensor<T>& logits, std::span<const T> targets) {
  if (targets.size() != logits.numel()) throw ShapeError("bce_with_logits: target count does not match logits");
  if (logits.numel() == 0) throw ShapeError("bce_with_logits: empty input");
  auto x = logits.data();
  T acc = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    acc += std::max(x[i], T(0)) - x[i] * targets[i] + std::log1p(std::exp(-std::abs(x[i])));
  }
  const T count = T(x.size());
  const bool rg = logits.requires_grad();
  auto out = Tensor<T>::scalar(acc / count, rg);
  check_finite("bce_with_logits", out);
  if (rg) {
    auto tg = std::make_shared<std::vector<T>>(targets.begin(), targets.end());
    tape.record("bce_with_logits", [=, logits = logits]() mutable {
      if (!out.has_grad()) return;
      const T go = std::as_const(out).grad()[0] / count;
      auto xv = std::as_const(logits).data();
      auto gl = logits.grad();
      for (std::size_t i = 0; i < gl.size(); ++i) {
        const T s = T(1) / (T(1) + std::exp(-xv[i]));
        gl[i] += go * (s - (*tg)[i]);
      }
    });
  }
  return out;
}

#define WXA_INSTANTIATE_OPS(T)                                                                                     \
  template Tensor<T> conv2d<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int);         \
  template Tensor<T> pool2d<T>(Tape<T>&, const Tensor<T>&, PoolKind, int, int);                                   \
  template Tensor<T> activation<T>(Tape<T>&, const Tensor<T>&, Activation);                                       \
  template Tensor<T> batchnorm2d<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, NormMode,     \
                                    BatchNormStats<T>&);                                                          \
  template Tensor<T> grad_reverse<T>(Tape<T>&, const Tensor<T>&, T);                                              \
  template Tensor<T> add<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> affine<T>(Tape<T>&, const Tensor<T>&, T, T);                                                 \
  template Tensor<T> concat0<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> slice0<T>(Tape<T>&, const Tensor<T>&, std::size_t, std::size_t);                             \
  template Tensor<T> sum<T>(Tape<T>&, const Tensor<T>&);                                                          \
  template Tensor<T> weighted_sum<T>(Tape<T>&, const Tensor<T>&, std::span<const T>);                             \
  template Tensor<T> gather<T>(Tape<T>&, const Tensor<T>&, std::span<const std::int64_t>, Shape);                 \
  template Tensor<T> mse_map_loss<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> l1_penalty<T>(Tape<T>&, const Tensor<T>&);                                                   \
  template Tensor<T> classification_loss<T>(Tape<T>&, const Tensor<T>&, std::span<const int>);                    \
  template Tensor<T> smooth_l1<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&, T);                               \
  template Tensor<T> bce_with_logits<T>(Tape<T>&, const Tensor<T>&, std::span<const T>);

WXA_INSTANTIATE_OPS(float)
WXA_INSTANTIATE_OPS(double)

}  // namespace wxa::ag
