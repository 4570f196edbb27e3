#include "wxadapt/kernels/filters.hpp"

#include <algorithm>
#include <limits>
#include <vector>

namespace wxa::kernels {

Plane min_filter(const Plane& in, int radius) {
  if (radius < 0) throw UsageError("min_filter: negative radius");
  const int h = in.height, w = in.width;
  Plane rows(h, w), out(h, w);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float m = std::numeric_limits<float>::infinity();
      const int x0 = std::max(0, x - radius), x1 = std::min(w - 1, x + radius);
      for (int xx = x0; xx <= x1; ++xx) m = std::min(m, in.at(y, xx));
      rows.at(y, x) = m;
    }
  }
#pragma omp parallel for schedule(static)
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) {
      float m = std::numeric_limits<float>::infinity();
      const int y0 = std::max(0, y - radius), y1 = std::min(h - 1, y + radius);
      for (int yy = y0; yy <= y1; ++yy) m = std::min(m, rows.at(yy, x));
      out.at(y, x) = m;
    }
  }
  return out;
}

Plane box_mean(const Plane& in, int radius) {
  if (radius < 0) throw UsageError("box_mean: negative radius");
  const int h = in.height, w = in.width;
  // Horizontal window sums in double, then vertical sums of those.
  std::vector<double> rows(in.size());
  Plane out(h, w);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    std::vector<double> prefix(static_cast<std::size_t>(w) + 1, 0.0);
    for (int x = 0; x < w; ++x) prefix[x + 1] = prefix[x] + in.at(y, x);
    for (int x = 0; x < w; ++x) {
      const int x0 = std::max(0, x - radius), x1 = std::min(w - 1, x + radius);
      rows[static_cast<std::size_t>(y) * w + x] = prefix[x1 + 1] - prefix[x0];
    }
  }
#pragma omp parallel for schedule(static)
  for (int x = 0; x < w; ++x) {
    std::vector<double> prefix(static_cast<std::size_t>(h) + 1, 0.0);
    for (int y = 0; y < h; ++y) prefix[y + 1] = prefix[y] + rows[static_cast<std::size_t>(y) * w + x];
    const int cx = std::min(w - 1, x + radius) - std::max(0, x - radius) + 1;
    for (int y = 0; y < h; ++y) {
      const int y0 = std::max(0, y - radius), y1 = std::min(h - 1, y + radius);
      const double count = double(cx) * (y1 - y0 + 1);
      out.at(y, x) = static_cast<float>((prefix[y1 + 1] - prefix[y0]) / count);
    }
  }
  return out;
}

namespace reference {

Plane min_filter(const Plane& in, int radius) {
  Plane out(in.height, in.width);
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x) {
      float m = std::numeric_limits<float>::infinity();
      for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) m = std::min(m, in.clamped(y + dy, x + dx));
      out.at(y, x) = m;
    }
  return out;
}

Plane box_mean(const Plane& in, int radius) {
  Plane out(in.height, in.width);
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x) {
      double sum = 0.0;
      int count = 0;
      for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= in.height || xx < 0 || xx >= in.width) continue;
          sum += in.at(yy, xx);
          ++count;
        }
      out.at(y, x) = static_cast<float>(sum / count);
    }
  return out;
}

}  // namespace reference
}  // namespace wxa::kernels
