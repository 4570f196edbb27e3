#include "wxadapt/trainer/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "wxadapt/weathersim/scene.hpp"

namespace wxa::trainer {

double average_precision(std::span<const double> recall, std::span<const double> precision) {
  if (recall.size() != precision.size()) throw ShapeError("average_precision: recall/precision length mismatch");
  const std::size_t n = recall.size();
  std::vector<double> envelope(precision.begin(), precision.end());
  for (std::size_t i = n; i-- > 1;) envelope[i - 1] = std::max(envelope[i - 1], envelope[i]);
  double ap = 0;
  double prev = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (recall[i] != prev) ap += (recall[i] - prev) * envelope[i];
    prev = recall[i];
  }
  return ap;
}

MapResult evaluate_map(const std::vector<std::vector<models::Detection>>& detections,
                       const std::vector<std::vector<LabeledBox>>& ground_truth, int num_classes, double iou_threshold) {
  if (detections.size() != ground_truth.size()) throw ShapeError("evaluate_map: detection and ground-truth image counts differ");
  if (num_classes < 1) throw UsageError("evaluate_map: num_classes must be >= 1");
  const auto nc = static_cast<std::size_t>(num_classes);
  MapResult r;
  r.ap.assign(nc, std::numeric_limits<double>::quiet_NaN());
  r.num_gt.assign(nc, 0);
  r.num_det.assign(nc, 0);
  for (const auto& img : ground_truth)
    for (const auto& g : img) {
      if (g.label < 0 || g.label >= num_classes) throw UsageError("evaluate_map: ground-truth label out of range");
      ++r.num_gt[static_cast<std::size_t>(g.label)];
    }

  struct Ranked {
    float score;
    std::size_t image, index;
  };
  double sum = 0;
  for (int c = 0; c < num_classes; ++c) {
    const auto cu = static_cast<std::size_t>(c);
    std::vector<Ranked> ranked;
    for (std::size_t i = 0; i < detections.size(); ++i)
      for (std::size_t k = 0; k < detections[i].size(); ++k)
        if (detections[i][k].label == c) ranked.push_back({detections[i][k].score, i, k});
    r.num_det[cu] = static_cast<int>(ranked.size());
    if (r.num_gt[cu] == 0) {
      r.flags.push_back("class " + std::to_string(c) + " (" + (c < sim::kNumClasses ? sim::class_name(c) : "?") +
                        ") has no ground truth; AP undefined and excluded from mAP");
      continue;
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) { return a.score > b.score; });

    std::vector<std::vector<bool>> taken(ground_truth.size());
    for (std::size_t i = 0; i < ground_truth.size(); ++i) taken[i].assign(ground_truth[i].size(), false);
    std::vector<double> recall, precision;
    recall.reserve(ranked.size());
    precision.reserve(ranked.size());
    double tp = 0;
    const double npos = r.num_gt[cu];
    for (std::size_t k = 0; k < ranked.size(); ++k) {
      const auto& d = detections[ranked[k].image][ranked[k].index];
      const auto& gts = ground_truth[ranked[k].image];
      double best = -1;
      std::size_t arg = 0;
      for (std::size_t g = 0; g < gts.size(); ++g) {
        if (gts[g].label != c) continue;
        const double v = iou(d.box, gts[g].box);
        if (v > best) {
          best = v;
          arg = g;
        }
      }
      if (best >= iou_threshold && !taken[ranked[k].image][arg]) {
        taken[ranked[k].image][arg] = true;
        tp += 1;
      }
      recall.push_back(tp / npos);
      precision.push_back(tp / static_cast<double>(k + 1));
    }
    r.ap[cu] = average_precision(recall, precision);
    sum += r.ap[cu];
    ++r.classes_present;
  }
  r.map = r.classes_present > 0 ? sum / r.classes_present : std::numeric_limits<double>::quiet_NaN();
  return r;
}

std::vector<std::vector<models::Detection>> predict(const models::Detector<float>& model,
                                                    const std::vector<DetectionSample>& samples,
                                                    const PredictOptions& options) {
  if (options.batch < 1) throw UsageError("predict: batch must be >= 1");
  std::vector<std::vector<models::Detection>> out(samples.size());
  const auto layout = model.head_layout();
  ag::Tape<float> tape;
  for (std::size_t begin = 0; begin < samples.size(); begin += static_cast<std::size_t>(options.batch)) {
    const std::size_t end = std::min(samples.size(), begin + static_cast<std::size_t>(options.batch));
    std::vector<const ImageF*> images;
    for (std::size_t i = begin; i < end; ++i) images.push_back(&samples[i].image);
    const int h = images.front()->height, w = images.front()->width;
    for (const auto* im : images)
      if (im->height != h || im->width != w) throw ShapeError("predict: images in a batch must share dimensions");
    tape.clear();
    const auto x = models::images_to_tensor<float>(images);
    const auto feats = options.target_pipeline ? model.target_features(tape, x) : model.source_features(tape, x);
    const auto head = model.detect(tape, feats.f5);
    const auto grid = model.anchors(h, w);
    const std::size_t per_image = head.numel() / (end - begin);
    for (std::size_t i = begin; i < end; ++i) {
      const auto slice = head.data().subspan((i - begin) * per_image, per_image);
      out[i] = models::postprocess(slice, grid, layout.classes, float(w), float(h), options.score_threshold, options.nms_iou);
    }
  }
  return out;
}

std::vector<Plane> predict_priors(models::Detector<float>& model, const std::vector<DetectionSample>& samples, int level,
                                  bool corrected, int batch) {
  if (batch < 1) throw UsageError("predict_priors: batch must be >= 1");
  if (level != 4 && level != 5) throw UsageError("predict_priors: level must be 4 or 5");
  std::vector<Plane> out;
  out.reserve(samples.size());
  ag::Tape<float> tape;
  for (std::size_t begin = 0; begin < samples.size(); begin += static_cast<std::size_t>(batch)) {
    const std::size_t end = std::min(samples.size(), begin + static_cast<std::size_t>(batch));
    std::vector<const ImageF*> images;
    for (std::size_t i = begin; i < end; ++i) images.push_back(&samples[i].image);
    tape.clear();
    const auto x = models::images_to_tensor<float>(images);
    const auto feats = model.target_features(tape, x);
    const auto& f = level == 4 ? (corrected ? feats.f4 : feats.raw4) : (corrected ? feats.f5 : feats.raw5);
    const auto pred = model.pen(tape, f, level, ag::NormMode::Eval);
    const int c = static_cast<int>(pred.dim(1)), h = static_cast<int>(pred.dim(2)), w = static_cast<int>(pred.dim(3));
    const auto data = pred.data();
    for (std::size_t i = 0; i < end - begin; ++i) {
      Plane p(h, w);
      std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(i * static_cast<std::size_t>(c * h * w)), h * w, p.data.begin());
      out.push_back(std::move(p));
    }
  }
  return out;
}

}  // namespace wxa::trainer
