#include "wxadapt/kernels/conv.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <vector>

namespace wxa::kernels {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

bool is_pointwise(const ConvGeometry& g) { return g.kernel == 1 && g.stride == 1 && g.pad == 0; }

// col is (in_ch*K*K) x (out_h*out_w)
template <typename T>
void im2col(const ConvGeometry& g, const T* in, T* col) {
  const int oh = g.out_h(), ow = g.out_w(), k = g.kernel;
  for (int c = 0; c < g.in_ch; ++c) {
    const T* plane = in + long(c) * g.in_h * g.in_w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = col + (long(c * k + ky) * k + kx) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          T* dst = row + long(oy) * ow;
          if (iy < 0 || iy >= g.in_h) {
            std::fill(dst, dst + ow, T(0));
            continue;
          }
          const T* src = plane + long(iy) * g.in_w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            dst[ox] = (ix >= 0 && ix < g.in_w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const ConvGeometry& g, const T* col, T* in) {
  const int oh = g.out_h(), ow = g.out_w(), k = g.kernel;
  for (int c = 0; c < g.in_ch; ++c) {
    T* plane = in + long(c) * g.in_h * g.in_w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = col + (long(c * k + ky) * k + kx) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.in_h) continue;
          T* dst = plane + long(iy) * g.in_w;
          const T* src = row + long(oy) * ow;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.in_w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> input, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> output) {
  const long ckk = long(g.in_ch) * g.kernel * g.kernel;
  const long positions = long(g.out_h()) * g.out_w();
  const long in_stride = long(g.in_ch) * g.in_h * g.in_w;
  const long out_stride = long(g.out_ch) * positions;
  const CMapMat<T> w(weight.data(), g.out_ch, ckk);
  const bool pointwise = is_pointwise(g);

#pragma omp parallel for schedule(static)
  for (int n = 0; n < g.batch; ++n) {
    std::vector<T> col;
    const T* col_ptr = input.data() + n * in_stride;
    if (!pointwise) {
      col.resize(static_cast<std::size_t>(ckk * positions));
      im2col(g, input.data() + n * in_stride, col.data());
      col_ptr = col.data();
    }
    MapMat<T> out(output.data() + n * out_stride, g.out_ch, positions);
    out.noalias() = w * CMapMat<T>(col_ptr, ckk, positions);
    if (!bias.empty()) {
      for (int o = 0; o < g.out_ch; ++o) out.row(o).array() += bias[o];
    }
  }
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, std::span<const T> input, std::span<const T> weight,
                     std::span<const T> grad_output, std::span<T> grad_input, std::span<T> grad_weight,
                     std::span<T> grad_bias) {
  const long ckk = long(g.in_ch) * g.kernel * g.kernel;
  const long positions = long(g.out_h()) * g.out_w();
  const long in_stride = long(g.in_ch) * g.in_h * g.in_w;
  const long out_stride = long(g.out_ch) * positions;
  const CMapMat<T> w(weight.data(), g.out_ch, ckk);
  const bool pointwise = is_pointwise(g);
  const bool want_w = !grad_weight.empty();

  // Per-sample weight gradients, reduced in sample order afterwards so the
  // result does not depend on the thread count.
  std::vector<T> per_sample_w(want_w ? static_cast<std::size_t>(g.batch * g.out_ch * ckk) : 0);

#pragma omp parallel for schedule(static)
  for (int n = 0; n < g.batch; ++n) {
    const CMapMat<T> go(grad_output.data() + n * out_stride, g.out_ch, positions);
    std::vector<T> col;
    if (want_w) {
      const T* col_ptr = input.data() + n * in_stride;
      if (!pointwise) {
        col.resize(static_cast<std::size_t>(ckk * positions));
        im2col(g, input.data() + n * in_stride, col.data());
        col_ptr = col.data();
      }
      MapMat<T> gw(per_sample_w.data() + long(n) * g.out_ch * ckk, g.out_ch, ckk);
      gw.noalias() = go * CMapMat<T>(col_ptr, ckk, positions).transpose();
    }
    if (!grad_input.empty()) {
      if (pointwise) {
        MapMat<T> gi(grad_input.data() + n * in_stride, g.in_ch, positions);
        gi.noalias() += w.transpose() * go;
      } else {
        col.resize(static_cast<std::size_t>(ckk * positions));
        MapMat<T> gcol(col.data(), ckk, positions);
        gcol.noalias() = w.transpose() * go;
        col2im_add(g, col.data(), grad_input.data() + n * in_stride);
      }
    }
  }

  if (want_w) {
    for (int n = 0; n < g.batch; ++n) {
      const T* src = per_sample_w.data() + long(n) * g.out_ch * ckk;
      for (long i = 0; i < g.out_ch * ckk; ++i) grad_weight[i] += src[i];
    }
  }
  if (!grad_bias.empty()) {
    for (int n = 0; n < g.batch; ++n) {
      for (int o = 0; o < g.out_ch; ++o) {
        const T* row = grad_output.data() + n * out_stride + long(o) * positions;
        T acc = 0;
        for (long p = 0; p < positions; ++p) acc += row[p];
        grad_bias[o] += acc;
      }
    }
  }
}

namespace reference {

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> input, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> output) {
  const int oh = g.out_h(), ow = g.out_w(), k = g.kernel;
  for (int n = 0; n < g.batch; ++n)
    for (int o = 0; o < g.out_ch; ++o)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          T acc = bias.empty() ? T(0) : bias[o];
          for (int c = 0; c < g.in_ch; ++c)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = oy * g.stride - g.pad + ky;
                const int ix = ox * g.stride - g.pad + kx;
                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                acc += input[((long(n) * g.in_ch + c) * g.in_h + iy) * g.in_w + ix] *
                       weight[((long(o) * g.in_ch + c) * k + ky) * k + kx];
              }
          output[((long(n) * g.out_ch + o) * oh + oy) * ow + ox] = acc;
        }
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, std::span<const T> input, std::span<const T> weight,
                     std::span<const T> grad_output, std::span<T> grad_input, std::span<T> grad_weight,
                     std::span<T> grad_bias) {
  const int oh = g.out_h(), ow = g.out_w(), k = g.kernel;
  for (int n = 0; n < g.batch; ++n)
    for (int o = 0; o < g.out_ch; ++o)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          const T go = grad_output[((long(n) * g.out_ch + o) * oh + oy) * ow + ox];
          if (!grad_bias.empty()) grad_bias[o] += go;
          for (int c = 0; c < g.in_ch; ++c)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = oy * g.stride - g.pad + ky;
                const int ix = ox * g.stride - g.pad + kx;
                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                const long in_idx = ((long(n) * g.in_ch + c) * g.in_h + iy) * g.in_w + ix;
                const long w_idx = ((long(o) * g.in_ch + c) * k + ky) * k + kx;
                if (!grad_input.empty()) grad_input[in_idx] += go * weight[w_idx];
                if (!grad_weight.empty()) grad_weight[w_idx] += go * input[in_idx];
              }
        }
}

}  // namespace reference

#define WXA_INSTANTIATE_CONV(T)                                                                            \
  template void conv2d_forward<T>(const ConvGeometry&, std::span<const T>, std::span<const T>,             \
                                  std::span<const T>, std::span<T>);                                       \
  template void conv2d_backward<T>(const ConvGeometry&, std::span<const T>, std::span<const T>,            \
                                   std::span<const T>, std::span<T>, std::span<T>, std::span<T>);          \
  template void reference::conv2d_forward<T>(const ConvGeometry&, std::span<const T>, std::span<const T>,  \
                                             std::span<const T>, std::span<T>);                            \
  template void reference::conv2d_backward<T>(const ConvGeometry&, std::span<const T>, std::span<const T>, \
                                              std::span<const T>, std::span<T>, std::span<T>, std::span<T>);

WXA_INSTANTIATE_CONV(float)
WXA_INSTANTIATE_CONV(double)

}  // namespace wxa::kernels
