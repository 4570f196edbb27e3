#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "wxadapt/autograd/tape.hpp"
#include "wxadapt/autograd/tensor.hpp"

/// Differentiable tensor operations. Every op takes the tape it records onto
/// as its first argument; an op records nothing when none of its inputs
/// require a gradient. Feature maps are NCHW.
namespace wxa::ag {

/// NaN/Inf checking at op boundaries. Defaults to the WXADAPT_CHECK_FINITE
/// environment variable ("1" enables it).
void set_finite_checks(bool enabled);
[[nodiscard]] bool finite_checks_enabled();

enum class PoolKind { Max, Avg };
enum class Activation { Relu, Tanh };
enum class NormMode { Train, Eval };

/// Running statistics owned by a batch-norm layer.
template <typename T>
struct BatchNormStats {
  std::vector<T> running_mean;
  std::vector<T> running_var;
  T momentum = T(0.1);
  T eps = T(1e-5);

  BatchNormStats() = default;
  explicit BatchNormStats(std::size_t channels) : running_mean(channels, T(0)), running_var(channels, T(1)) {}
};

// Layers
template <typename T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, int stride,
                 int padding);
template <typename T>
Tensor<T> pool2d(Tape<T>& tape, const Tensor<T>& input, PoolKind kind, int window, int stride);
template <typename T>
Tensor<T> activation(Tape<T>& tape, const Tensor<T>& input, Activation kind);
template <typename T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& input) {
  return activation(tape, input, Activation::Relu);
}
template <typename T>
Tensor<T> tanh(Tape<T>& tape, const Tensor<T>& input) {
  return activation(tape, input, Activation::Tanh);
}
/// Train mode normalizes with batch statistics and updates `stats`;
/// eval mode uses the running statistics.
template <typename T>
Tensor<T> batchnorm2d(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                      NormMode mode, BatchNormStats<T>& stats);
/// Identity forward; backward multiplies the incoming gradient by -coeff.
template <typename T>
Tensor<T> grad_reverse(Tape<T>& tape, const Tensor<T>& input, T coeff);

// Elementwise / reshaping
template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);
/// scale * x + shift
template <typename T>
Tensor<T> affine(Tape<T>& tape, const Tensor<T>& input, T scale, T shift);
template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& input);
template <typename T>
Tensor<T> weighted_sum(Tape<T>& tape, const Tensor<T>& input, std::span<const T> weights);
/// Stacks a and b along dimension 0; the other dimensions must agree.
template <typename T>
Tensor<T> concat0(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);
/// Rows [begin, end) of dimension 0.
template <typename T>
Tensor<T> slice0(Tape<T>& tape, const Tensor<T>& input, std::size_t begin, std::size_t end);
/// out.flat[i] = input.flat[index[i]], reshaped to `shape`.
template <typename T>
Tensor<T> gather(Tape<T>& tape, const Tensor<T>& input, std::span<const std::int64_t> index, Shape shape);

// Losses (all return a scalar tensor)

/// Mean squared difference over every element (batch, channels, U, V).
template <typename T>
Tensor<T> mse_map_loss(Tape<T>& tape, const Tensor<T>& pred, const Tensor<T>& target);
/// Sum of |x| per sample, averaged over the leading (batch) dimension.
template <typename T>
Tensor<T> l1_penalty(Tape<T>& tape, const Tensor<T>& input);
/// Softmax cross-entropy of N x C logits, averaged over N.
template <typename T>
Tensor<T> classification_loss(Tape<T>& tape, const Tensor<T>& logits, std::span<const int> labels);
/// Elementwise smooth-L1 with quadratic zone |d| < beta, averaged.
template <typename T>
Tensor<T> smooth_l1(Tape<T>& tape, const Tensor<T>& pred, const Tensor<T>& target, T beta = T(1));
/// Binary cross-entropy on logits against targets in [0,1], averaged.
template <typename T>
Tensor<T> bce_with_logits(Tape<T>& tape, const Tensor<T>& logits, std::span<const T> targets);

}  // namespace wxa::ag
