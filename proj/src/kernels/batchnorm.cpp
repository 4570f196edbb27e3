#include "wxadapt/kernels/batchnorm.hpp"

namespace wxa::kernels {

template <typename T>
void batchnorm_apply(const NormGeometry& g, std::span<const T> input, std::span<const T> mean,
                     std::span<const T> inv_std, std::span<const T> gamma, std::span<const T> beta,
                     std::span<T> output) {
#pragma omp parallel for schedule(static)
  for (int c = 0; c < g.channels; ++c) {
    const T scale = gamma[c] * inv_std[c];
    for (int n = 0; n < g.batch; ++n) {
      const long base = (long(n) * g.channels + c) * g.plane;
      for (int i = 0; i < g.plane; ++i) output[base + i] = (input[base + i] - mean[c]) * scale + beta[c];
    }
  }
}

template <typename T>
void batchnorm_stats(const NormGeometry& g, std::span<const T> input, std::span<T> mean, std::span<T> var) {
  const T count = T(g.per_channel());
#pragma omp parallel for schedule(static)
  for (int c = 0; c < g.channels; ++c) {
    T sum = 0;
    for (int n = 0; n < g.batch; ++n) {
      const long base = (long(n) * g.channels + c) * g.plane;
      for (int i = 0; i < g.plane; ++i) sum += input[base + i];
    }
    T mu = sum / count;
    // One refinement pass makes the mean of a constant channel exact.
    T resid = 0;
    for (int n = 0; n < g.batch; ++n) {
      const long base = (long(n) * g.channels + c) * g.plane;
      for (int i = 0; i < g.plane; ++i) resid += input[base + i] - mu;
    }
    mu += resid / count;
    T sq = 0;
    for (int n = 0; n < g.batch; ++n) {
      const long base = (long(n) * g.channels + c) * g.plane;
      for (int i = 0; i < g.plane; ++i) {
        const T d = input[base + i] - mu;
        sq += d * d;
      }
    }
    mean[c] = mu;
    var[c] = sq / count;
  }
}

template <typename T>
void batchnorm_backward(const NormGeometry& g, bool batch_stats, std::span<const T> input, std::span<const T> mean,
                        std::span<const T> inv_std, std::span<const T> gamma, std::span<const T> grad_output,
                        std::span<T> grad_input, std::span<T> grad_gamma, std::span<T> grad_beta) {
  const T count = T(g.per_channel());
#pragma omp parallel for schedule(static)
  for (int c = 0; c < g.channels; ++c) {
    T sum_dy = 0, sum_dy_xhat = 0;
    for (int n = 0; n < g.batch; ++n) {
      const long base = (long(n) * g.channels + c) * g.plane;
      for (int i = 0; i < g.plane; ++i) {
        const T xhat = (input[base + i] - mean[c]) * inv_std[c];
        sum_dy += grad_output[base + i];
        sum_dy_xhat += grad_output[base + i] * xhat;
      }
    }
    if (!grad_gamma.empty()) grad_gamma[c] += sum_dy_xhat;
    if (!grad_beta.empty()) grad_beta[c] += sum_dy;
    if (grad_input.empty()) continue;
    const T k = gamma[c] * inv_std[c];
    for (int n = 0; n < g.batch; ++n) {
      const long base = (long(n) * g.channels + c) * g.plane;
      for (int i = 0; i < g.plane; ++i) {
        if (batch_stats) {
          const T xhat = (input[base + i] - mean[c]) * inv_std[c];
          grad_input[base + i] += k * (grad_output[base + i] - sum_dy / count - xhat * sum_dy_xhat / count);
        } else {
          grad_input[base + i] += k * grad_output[base + i];
        }
      }
    }
  }
}

#define WXA_INSTANTIATE_BN(T)                                                                                    \
  template void batchnorm_apply<T>(const NormGeometry&, std::span<const T>, std::span<const T>,                 \
                                   std::span<const T>, std::span<const T>, std::span<const T>, std::span<T>);   \
  template void batchnorm_stats<T>(const NormGeometry&, std::span<const T>, std::span<T>, std::span<T>);        \
  template void batchnorm_backward<T>(const NormGeometry&, bool, std::span<const T>, std::span<const T>,        \
                                      std::span<const T>, std::span<const T>, std::span<const T>, std::span<T>, \
                                      std::span<T>, std::span<T>);

WXA_INSTANTIATE_BN(float)
WXA_INSTANTIATE_BN(double)

}  // namespace wxa::kernels
