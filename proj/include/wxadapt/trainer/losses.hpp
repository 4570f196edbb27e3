#pragma once

#include <span>
#include <vector>

#include "wxadapt/autograd/ops.hpp"
#include "wxadapt/core/sample.hpp"
#include "wxadapt/models/boxes.hpp"

namespace wxa::trainer {

using ag::Tape;
using ag::Tensor;

/// Squared prior-regression error normalized by 1/(n U V).
template <typename T>
Tensor<T> pal_level_loss(Tape<T>& tape, const Tensor<T>& pred, const Tensor<T>& prior);

/// Arithmetic mean of the per-level losses (one level: that loss).
template <typename T>
Tensor<T> pal_domain_loss(Tape<T>& tape, const std::vector<Tensor<T>>& level_losses);

/// (src + tgt) / 2. The adversarial sign comes from gradient reversal inside
/// the prior networks and discriminators, not from this op.
template <typename T>
Tensor<T> adv_loss(Tape<T>& tape, const Tensor<T>& src, const Tensor<T>& tgt);

/// Sum over levels of the batch-averaged L1 norm of each residual. Undefined
/// residuals are skipped; with none at all the result is a constant 0.
template <typename T>
Tensor<T> reg_loss(Tape<T>& tape, const std::vector<Tensor<T>>& residuals);

/// Quadratic-zone width of the box regression smooth-L1.
extern const double kBoxBeta;

/// Regression and classification targets of one image's anchors.
struct AnchorTargets {
  std::vector<int> assign;                // per anchor: gt index, kNegative or kIgnore
  std::vector<models::Deltas> deltas;     // per anchor; meaningful on positives only
  std::vector<int> labels;                // per anchor; meaningful on positives only
  [[nodiscard]] int positives() const;
};

AnchorTargets make_anchor_targets(const models::AnchorGrid& grid, std::span<const LabeledBox> gt,
                                  double pos_iou = 0.5, double neg_iou = 0.3);

template <typename T>
struct DetectionLoss {
  Tensor<T> objectness;  // BCE over positive and negative anchors, averaged
  Tensor<T> box;         // smooth-L1 (beta 1/9) summed over the 4 deltas, averaged over positives
  Tensor<T> cls;         // cross-entropy over positives, averaged
  int positives = 0;
  int negatives = 0;
};

/// `head` is N x channels x grid_h x grid_w with the channel layout of
/// `layout`; `targets[n]` belongs to image n. Box and class terms are exact
/// constant zeros when the batch has no positive anchor.
template <typename T>
DetectionLoss<T> detection_loss(Tape<T>& tape, const Tensor<T>& head, const models::HeadLayout& layout,
                                const models::AnchorGrid& grid, std::span<const AnchorTargets* const> targets);

}  // namespace wxa::trainer
