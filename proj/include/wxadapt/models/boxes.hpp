#pragma once

#include <span>
#include <vector>

#include "wxadapt/core/sample.hpp"

namespace wxa::models {

/// Square anchors centred on every cell of a feature grid.
struct AnchorGrid {
  int grid_h = 4;
  int grid_w = 4;
  float stride = 32;
  std::vector<float> sizes{16, 32, 64};

  [[nodiscard]] int per_cell() const { return static_cast<int>(sizes.size()); }
  [[nodiscard]] int count() const { return grid_h * grid_w * per_cell(); }
  /// Anchor index runs (gy, gx, a) in row-major order.
  [[nodiscard]] int index(int gy, int gx, int a) const { return (gy * grid_w + gx) * per_cell() + a; }
  [[nodiscard]] Box anchor(int gy, int gx, int a) const;
  [[nodiscard]] Box anchor(int index) const;
};

/// Center/size box parameterization relative to an anchor.
struct Deltas {
  float dx = 0, dy = 0, dw = 0, dh = 0;
};

Deltas encode_box(const Box& anchor, const Box& target);
/// cx = ax + dx * aw, w = aw * exp(dw); the result is clipped to the image.
Box decode_box(const Box& anchor, const Deltas& d, float image_w, float image_h);

/// Greedy suppression in descending score order, ties broken by lower index.
std::vector<int> nms(std::span<const Box> boxes, std::span<const float> scores, double iou_threshold = 0.5);

struct Detection {
  Box box;
  int label = 0;
  float score = 0;
};

/// Channel layout of the dense head: for anchor a, channel a*(5+C)+k holds
/// k = 0 objectness logit, 1..4 deltas (dx, dy, dw, dh), 5.. class logits.
struct HeadLayout {
  int anchors = 3;
  int classes = 3;
  [[nodiscard]] int stride() const { return 5 + classes; }
  [[nodiscard]] int channels() const { return anchors * stride(); }
  [[nodiscard]] int channel(int a, int k) const { return a * stride() + k; }
};

/// One candidate per anchor (argmax class, score = sigmoid(obj) * p_class),
/// then score threshold and per-class NMS. `head` holds one image's
/// C x grid_h x grid_w output.
std::vector<Detection> decode_candidates(std::span<const float> head, const AnchorGrid& grid, int num_classes,
                                         float image_w, float image_h);
std::vector<Detection> postprocess(std::span<const float> head, const AnchorGrid& grid, int num_classes,
                                   float image_w, float image_h, float score_threshold = 0.05f,
                                   double nms_iou = 0.5);

/// Per-anchor assignment: >= 0 ground-truth index (positive), -1 negative,
/// -2 ignored. IoU >= pos_iou is positive, < neg_iou negative; each ground
/// truth's best anchor is forced positive.
inline constexpr int kNegative = -1;
inline constexpr int kIgnore = -2;
std::vector<int> match_anchors(const AnchorGrid& grid, std::span<const LabeledBox> gt, double pos_iou = 0.5,
                               double neg_iou = 0.3);

}  // namespace wxa::models
