#include "wxadapt/kernels/pool.hpp"

namespace wxa::kernels {
namespace {

template <typename T>
void max_plane(const PoolGeometry& g, const T* in, T* out, std::int32_t* arg) {
  const int oh = g.out_h(), ow = g.out_w();
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox) {
      int best = (oy * g.stride) * g.in_w + ox * g.stride;
      T best_v = in[best];
      for (int ky = 0; ky < g.window; ++ky)
        for (int kx = 0; kx < g.window; ++kx) {
          const int idx = (oy * g.stride + ky) * g.in_w + ox * g.stride + kx;
          if (in[idx] > best_v) {
            best_v = in[idx];
            best = idx;
          }
        }
      out[oy * ow + ox] = best_v;
      arg[oy * ow + ox] = best;
    }
}

template <typename T>
void avg_plane(const PoolGeometry& g, const T* in, T* out) {
  const int oh = g.out_h(), ow = g.out_w();
  const T scale = T(1) / T(g.window * g.window);
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox) {
      T acc = 0;
      for (int ky = 0; ky < g.window; ++ky)
        for (int kx = 0; kx < g.window; ++kx) acc += in[(oy * g.stride + ky) * g.in_w + ox * g.stride + kx];
      out[oy * ow + ox] = acc * scale;
    }
}

}  // namespace

template <typename T>
void max_pool_forward(const PoolGeometry& g, std::span<const T> input, std::span<T> output,
                      std::span<std::int32_t> argmax) {
  const long in_plane = long(g.in_h) * g.in_w;
  const long out_plane = long(g.out_h()) * g.out_w();
#pragma omp parallel for schedule(static)
  for (int p = 0; p < g.planes; ++p)
    max_plane(g, input.data() + p * in_plane, output.data() + p * out_plane, argmax.data() + p * out_plane);
}

template <typename T>
void max_pool_backward(const PoolGeometry& g, std::span<const T> grad_output, std::span<const std::int32_t> argmax,
                       std::span<T> grad_input) {
  const long in_plane = long(g.in_h) * g.in_w;
  const long out_plane = long(g.out_h()) * g.out_w();
#pragma omp parallel for schedule(static)
  for (int p = 0; p < g.planes; ++p) {
    T* gi = grad_input.data() + p * in_plane;
    const T* go = grad_output.data() + p * out_plane;
    const std::int32_t* arg = argmax.data() + p * out_plane;
    for (long i = 0; i < out_plane; ++i) gi[arg[i]] += go[i];
  }
}

template <typename T>
void avg_pool_forward(const PoolGeometry& g, std::span<const T> input, std::span<T> output) {
  const long in_plane = long(g.in_h) * g.in_w;
  const long out_plane = long(g.out_h()) * g.out_w();
#pragma omp parallel for schedule(static)
  for (int p = 0; p < g.planes; ++p) avg_plane(g, input.data() + p * in_plane, output.data() + p * out_plane);
}

template <typename T>
void avg_pool_backward(const PoolGeometry& g, std::span<const T> grad_output, std::span<T> grad_input) {
  const long in_plane = long(g.in_h) * g.in_w;
  const int oh = g.out_h(), ow = g.out_w();
  const T scale = T(1) / T(g.window * g.window);
#pragma omp parallel for schedule(static)
  for (int p = 0; p < g.planes; ++p) {
    T* gi = grad_input.data() + p * in_plane;
    const T* go = grad_output.data() + long(p) * oh * ow;
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        const T v = go[oy * ow + ox] * scale;
        for (int ky = 0; ky < g.window; ++ky)
          for (int kx = 0; kx < g.window; ++kx) gi[(oy * g.stride + ky) * g.in_w + ox * g.stride + kx] += v;
      }
  }
}

namespace reference {

template <typename T>
void max_pool_forward(const PoolGeometry& g, std::span<const T> input, std::span<T> output,
                      std::span<std::int32_t> argmax) {
  const long in_plane = long(g.in_h) * g.in_w;
  const long out_plane = long(g.out_h()) * g.out_w();
  for (int p = 0; p < g.planes; ++p)
    max_plane(g, input.data() + p * in_plane, output.data() + p * out_plane, argmax.data() + p * out_plane);
}

template <typename T>
void avg_pool_forward(const PoolGeometry& g, std::span<const T> input, std::span<T> output) {
  const long in_plane = long(g.in_h) * g.in_w;
  const long out_plane = long(g.out_h()) * g.out_w();
  for (int p = 0; p < g.planes; ++p) avg_plane(g, input.data() + p * in_plane, output.data() + p * out_plane);
}

}  // namespace reference

#define WXA_INSTANTIATE_POOL(T)                                                                                    \
  template void max_pool_forward<T>(const PoolGeometry&, std::span<const T>, std::span<T>, std::span<std::int32_t>); \
  template void max_pool_backward<T>(const PoolGeometry&, std::span<const T>, std::span<const std::int32_t>,        \
                                     std::span<T>);                                                                \
  template void avg_pool_forward<T>(const PoolGeometry&, std::span<const T>, std::span<T>);                        \
  template void avg_pool_backward<T>(const PoolGeometry&, std::span<const T>, std::span<T>);                       \
  template void reference::max_pool_forward<T>(const PoolGeometry&, std::span<const T>, std::span<T>,              \
                                               std::span<std::int32_t>);                                           \
  template void reference::avg_pool_forward<T>(const PoolGeometry&, std::span<const T>, std::span<T>);

WXA_INSTANTIATE_POOL(float)
WXA_INSTANTIATE_POOL(double)

}  // namespace wxa::kernels
