#pragma once

#include <span>
#include <string>
#include <vector>

#include "wxadapt/core/sample.hpp"
#include "wxadapt/models/boxes.hpp"
#include "wxadapt/models/network.hpp"

namespace wxa::trainer {

struct MapResult {
  std::vector<double> ap;      // per class; NaN where the class has no ground truth
  std::vector<int> num_gt;     // ground-truth boxes per class
  std::vector<int> num_det;    // detections per class
  double map = 0;              // mean over classes with ground truth; NaN if none has any
  int classes_present = 0;
  std::vector<std::string> flags;  // one note per class excluded from the mean

  [[nodiscard]] bool present(int c) const { return num_gt.at(static_cast<std::size_t>(c)) > 0; }
};

/// All-points interpolated area under a precision-recall curve whose points
/// are listed in detection order (recall non-decreasing).
double average_precision(std::span<const double> recall, std::span<const double> precision);

/// Per-class AP at the given IoU. Detections of a class are ranked by
/// descending score (ties keep image order, then list order); each is a true
/// positive when its best-overlapping same-class box in the same image
/// reaches `iou_threshold` and is not yet taken.
MapResult evaluate_map(const std::vector<std::vector<models::Detection>>& detections,
                       const std::vector<std::vector<LabeledBox>>& ground_truth, int num_classes,
                       double iou_threshold = 0.5);

struct PredictOptions {
  bool target_pipeline = true;  // apply RFRB corrections
  float score_threshold = 0.05f;
  double nms_iou = 0.5;
  int batch = 16;
};

/// Post-NMS detections for every sample.
std::vector<std::vector<models::Detection>> predict(const models::Detector<float>& model,
                                                    const std::vector<DetectionSample>& samples,
                                                    const PredictOptions& options = {});

/// PEN output at `level` for each sample, run on the (optionally corrected)
/// features in eval mode. Returns one map per sample, channel 0.
std::vector<Plane> predict_priors(models::Detector<float>& model, const std::vector<DetectionSample>& samples,
                                  int level, bool corrected = true, int batch = 16);

}  // namespace wxa::trainer
