#pragma once

#include <span>

namespace wxa::kernels {

struct NormGeometry {
  int batch = 1;
  int channels = 1;
  int plane = 1;  // H*W

  [[nodiscard]] long per_channel() const { return long(batch) * plane; }
};

/// Normalizes with the given per-channel mean / inverse stddev:
/// out = gamma * (x - mean) * inv_std + beta.
template <typename T>
void batchnorm_apply(const NormGeometry& g, std::span<const T> input, std::span<const T> mean,
                     std::span<const T> inv_std, std::span<const T> gamma, std::span<const T> beta,
                     std::span<T> output);

/// Biased batch statistics per channel.
template <typename T>
void batchnorm_stats(const NormGeometry& g, std::span<const T> input, std::span<T> mean, std::span<T> var);

/// Backward of batchnorm_apply. With `batch_stats` the mean/inv_std are
/// treated as functions of the input (train mode); otherwise as constants.
template <typename T>
void batchnorm_backward(const NormGeometry& g, bool batch_stats, std::span<const T> input, std::span<const T> mean,
                        std::span<const T> inv_std, std::span<const T> gamma, std::span<const T> grad_output,
                        std::span<T> grad_input, std::span<T> grad_gamma, std::span<T> grad_beta);

}  // namespace wxa::kernels
