#pragma once

#include <cstdint>
#include <span>

namespace wxa::kernels {

/// Pooling over `planes` independent HxW planes (planes = N*C), no padding.
struct PoolGeometry {
  int planes = 1;
  int in_h = 1;
  int in_w = 1;
  int window = 2;
  int stride = 2;

  [[nodiscard]] int out_h() const { return (in_h - window) / stride + 1; }
  [[nodiscard]] int out_w() const { return (in_w - window) / stride + 1; }
};

// argmax holds the flat in-plane input index selected for every output cell;
// ties resolve to the first index in row-major order.
template <typename T>
void max_pool_forward(const PoolGeometry& g, std::span<const T> input, std::span<T> output,
                      std::span<std::int32_t> argmax);
template <typename T>
void max_pool_backward(const PoolGeometry& g, std::span<const T> grad_output, std::span<const std::int32_t> argmax,
                       std::span<T> grad_input);

template <typename T>
void avg_pool_forward(const PoolGeometry& g, std::span<const T> input, std::span<T> output);
template <typename T>
void avg_pool_backward(const PoolGeometry& g, std::span<const T> grad_output, std::span<T> grad_input);

namespace reference {
template <typename T>
void max_pool_forward(const PoolGeometry& g, std::span<const T> input, std::span<T> output,
                      std::span<std::int32_t> argmax);
template <typename T>
void avg_pool_forward(const PoolGeometry& g, std::span<const T> input, std::span<T> output);
}  // namespace reference

}  // namespace wxa::kernels
