#pragma once

#include <span>

namespace wxa::kernels {

/// NCHW input, OIKK weight, square kernel.
struct ConvGeometry {
  int batch = 1;
  int in_ch = 1;
  int in_h = 1;
  int in_w = 1;
  int out_ch = 1;
  int kernel = 1;
  int stride = 1;
  int pad = 0;

  [[nodiscard]] int out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
  [[nodiscard]] int out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
  [[nodiscard]] long input_size() const { return long(batch) * in_ch * in_h * in_w; }
  [[nodiscard]] long weight_size() const { return long(out_ch) * in_ch * kernel * kernel; }
  [[nodiscard]] long output_size() const { return long(batch) * out_ch * out_h() * out_w(); }
};

// Parallel (OpenMP over the batch, im2col + GEMM per sample).
// Backward accumulates into whichever gradient spans are non-empty.
template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> input, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> output);

template <typename T>
void conv2d_backward(const ConvGeometry& g, std::span<const T> input, std::span<const T> weight,
                     std::span<const T> grad_output, std::span<T> grad_input, std::span<T> grad_weight,
                     std::span<T> grad_bias);

namespace reference {

// Direct serial loops. Kept as the ground truth for the parallel kernels.
template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> input, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> output);

template <typename T>
void conv2d_backward(const ConvGeometry& g, std::span<const T> input, std::span<const T> weight,
                     std::span<const T> grad_output, std::span<T> grad_input, std::span<T> grad_weight,
                     std::span<T> grad_bias);

}  // namespace reference
}  // namespace wxa::kernels
