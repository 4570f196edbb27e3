#include "wxadapt/models/boxes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace wxa::models {

namespace {
const float kMaxLogScale = std::log(1000.0f / 16.0f);

float sigmoid(float x) { return 1.0f / (1.0f + std::exp(-x)); }
}  // namespace

Box AnchorGrid::anchor(int gy, int gx, int a) const {
  const float cx = (float(gx) + 0.5f) * stride, cy = (float(gy) + 0.5f) * stride;
  const float h = sizes.at(static_cast<std::size_t>(a)) / 2;
  return {cx - h, cy - h, cx + h, cy + h};
}

Box AnchorGrid::anchor(int index) const {
  const int a = index % per_cell();
  const int cell = index / per_cell();
  return anchor(cell / grid_w, cell % grid_w, a);
}

Deltas encode_box(const Box& anchor, const Box& target) {
  const float aw = anchor.width(), ah = anchor.height();
  return {(target.center_x() - anchor.center_x()) / aw, (target.center_y() - anchor.center_y()) / ah,
          std::log(target.width() / aw), std::log(target.height() / ah)};
}

Box decode_box(const Box& anchor, const Deltas& d, float image_w, float image_h) {
  const float aw = anchor.width(), ah = anchor.height();
  const float cx = anchor.center_x() + d.dx * aw;
  const float cy = anchor.center_y() + d.dy * ah;
  const float w = aw * std::exp(std::min(d.dw, kMaxLogScale));
  const float h = ah * std::exp(std::min(d.dh, kMaxLogScale));
  return {std::clamp(cx - w / 2, 0.0f, image_w), std::clamp(cy - h / 2, 0.0f, image_h),
          std::clamp(cx + w / 2, 0.0f, image_w), std::clamp(cy + h / 2, 0.0f, image_h)};
}

std::vector<int> nms(std::span<const Box> boxes, std::span<const float> scores, double iou_threshold) {
  if (boxes.size() != scores.size()) throw ShapeError("nms: boxes and scores differ in length");
  std::vector<int> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] > scores[b]; });
  std::vector<int> kept;
  std::vector<bool> dead(boxes.size(), false);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const int k = order[i];
    if (dead[k]) continue;
    kept.push_back(k);
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      const int m = order[j];
      if (!dead[m] && iou(boxes[k], boxes[m]) > iou_threshold) dead[m] = true;
    }
  }
  return kept;
}

std::vector<Detection> decode_candidates(std::span<const float> head, const AnchorGrid& grid, int num_classes,
                                         float image_w, float image_h) {
  const HeadLayout layout{grid.per_cell(), num_classes};
  const std::size_t plane = static_cast<std::size_t>(grid.grid_h) * grid.grid_w;
  if (head.size() != plane * layout.channels()) throw ShapeError("decode: head output size does not match the grid");
  std::vector<Detection> out;
  out.reserve(static_cast<std::size_t>(grid.count()));
  std::vector<float> probs(static_cast<std::size_t>(num_classes));
  for (int gy = 0; gy < grid.grid_h; ++gy)
    for (int gx = 0; gx < grid.grid_w; ++gx)
      for (int a = 0; a < grid.per_cell(); ++a) {
        auto v = [&](int k) { return head[layout.channel(a, k) * plane + gy * grid.grid_w + gx]; };
        float mx = v(5);
        for (int c = 1; c < num_classes; ++c) mx = std::max(mx, v(5 + c));
        double z = 0;
        for (int c = 0; c < num_classes; ++c) z += std::exp(double(v(5 + c)) - mx);
        int best = 0;
        for (int c = 1; c < num_classes; ++c)
          if (v(5 + c) > v(5 + best)) best = c;
        const float p = static_cast<float>(1.0 / z);  // exp(max - max) / z
        const Box box = decode_box(grid.anchor(gy, gx, a), {v(1), v(2), v(3), v(4)}, image_w, image_h);
        out.push_back({box, best, sigmoid(v(0)) * p});
      }
  return out;
}

std::vector<Detection> postprocess(std::span<const float> head, const AnchorGrid& grid, int num_classes,
                                   float image_w, float image_h, float score_threshold, double nms_iou) {
  const auto cands = decode_candidates(head, grid, num_classes, image_w, image_h);
  std::vector<Detection> out;
  for (int c = 0; c < num_classes; ++c) {
    std::vector<Box> boxes;
    std::vector<float> scores;
    for (const auto& d : cands)
      if (d.label == c && d.score >= score_threshold && d.box.area() > 0) {
        boxes.push_back(d.box);
        scores.push_back(d.score);
      }
    for (int k : nms(boxes, scores, nms_iou)) out.push_back({boxes[k], c, scores[k]});
  }
  std::stable_sort(out.begin(), out.end(), [](const Detection& a, const Detection& b) { return a.score > b.score; });
  return out;
}

std::vector<int> match_anchors(const AnchorGrid& grid, std::span<const LabeledBox> gt, double pos_iou, double neg_iou) {
  const int n = grid.count();
  std::vector<int> assign(static_cast<std::size_t>(n), kNegative);
  if (gt.empty()) return assign;
  std::vector<double> best_iou(gt.size(), -1.0);
  std::vector<int> best_anchor(gt.size(), -1);
  for (int i = 0; i < n; ++i) {
    const Box a = grid.anchor(i);
    double top = 0.0;
    int arg = -1;
    for (std::size_t g = 0; g < gt.size(); ++g) {
      const double v = iou(a, gt[g].box);
      if (v > top) {
        top = v;
        arg = static_cast<int>(g);
      }
      if (v > best_iou[g]) {
        best_iou[g] = v;
        best_anchor[g] = i;
      }
    }
    if (top >= pos_iou) assign[static_cast<std::size_t>(i)] = arg;
    else if (top >= neg_iou) assign[static_cast<std::size_t>(i)] = kIgnore;
  }
  for (std::size_t g = 0; g < gt.size(); ++g)
    if (best_anchor[g] >= 0 && best_iou[g] > 0.0) assign[static_cast<std::size_t>(best_anchor[g])] = static_cast<int>(g);
  return assign;
}

}  // namespace wxa::models
