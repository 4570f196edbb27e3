#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "wxadapt/core/error.hpp"

namespace wxa {

/// Single-channel float raster, row-major.
struct Plane {
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Plane() = default;
  Plane(int h, int w, float fill = 0.0f) : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {
    if (h < 0 || w < 0) throw ShapeError("Plane: negative dimensions");
  }

  [[nodiscard]] bool empty() const { return data.empty(); }
  [[nodiscard]] std::size_t size() const { return data.size(); }
  float& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
  [[nodiscard]] float at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
  /// Edge-clamped read.
  [[nodiscard]] float clamped(int y, int x) const {
    return at(std::clamp(y, 0, height - 1), std::clamp(x, 0, width - 1));
  }
};

/// Per-pixel scene depth, arbitrary units >= 0.
using DepthMap = Plane;

/// RGB image with values in [0, 1], interleaved (HWC).
struct ImageF {
  int height = 0;
  int width = 0;
  std::vector<float> data;

  ImageF() = default;
  ImageF(int h, int w, float fill = 0.0f) : height(h), width(w), data(static_cast<std::size_t>(h) * w * 3, fill) {
    if (h < 0 || w < 0) throw ShapeError("ImageF: negative dimensions");
  }

  [[nodiscard]] bool empty() const { return data.empty(); }
  [[nodiscard]] std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }
  float& at(int y, int x, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  [[nodiscard]] float at(int y, int x, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }

  void clamp01() {
    for (auto& v : data) v = std::clamp(v, 0.0f, 1.0f);
  }
};

inline void require_same_dims(const ImageF& a, const Plane& b, const char* what) {
  if (a.height != b.height || a.width != b.width) throw ShapeError(std::string(what) + ": image/map dimension mismatch");
}

}  // namespace wxa
