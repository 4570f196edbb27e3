#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "wxadapt/core/image.hpp"
#include "wxadapt/priors/prior_map.hpp"

namespace wxa {

/// Axis-aligned box in continuous pixel coordinates: pixel (x, y) covers
/// [x, x+1) x [y, y+1).
struct Box {
  float x_min = 0, y_min = 0, x_max = 0, y_max = 0;

  [[nodiscard]] float width() const { return x_max - x_min; }
  [[nodiscard]] float height() const { return y_max - y_min; }
  [[nodiscard]] float area() const { return std::max(0.0f, width()) * std::max(0.0f, height()); }
  [[nodiscard]] float center_x() const { return 0.5f * (x_min + x_max); }
  [[nodiscard]] float center_y() const { return 0.5f * (y_min + y_max); }
  friend bool operator==(const Box&, const Box&) = default;
};

inline double iou(const Box& a, const Box& b) {
  const double iw = std::max(0.0, double(std::min(a.x_max, b.x_max)) - std::max(a.x_min, b.x_min));
  const double ih = std::max(0.0, double(std::min(a.y_max, b.y_max)) - std::max(a.y_min, b.y_min));
  const double inter = iw * ih;
  const double uni = double(a.area()) + double(b.area()) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

struct LabeledBox {
  Box box;
  int label = 0;
  friend bool operator==(const LabeledBox&, const LabeledBox&) = default;
};

/// One image with its annotations and whatever priors are known for it.
struct DetectionSample {
  ImageF image;
  std::vector<LabeledBox> objects;
  std::optional<DepthMap> depth;
  std::optional<PriorMap> gt_prior;         // exact prior from synthesis
  std::optional<PriorMap> estimated_prior;  // precomputed estimator output
  bool synthetic = false;                   // carries synthesis ground truth
  bool clean = false;                       // source-domain (undegraded) image
};

}  // namespace wxa
