#include "wxadapt/trainer/losses.hpp"

#include <cstdint>

namespace wxa::trainer {

template <typename T>
Tensor<T> pal_level_loss(Tape<T>& tape, const Tensor<T>& pred, const Tensor<T>& prior) {
  if (pred.shape() != prior.shape()) {
    throw ShapeError("pal_level_loss: prediction " + ag::shape_string(pred.shape()) + " vs prior " +
                     ag::shape_string(prior.shape()));
  }
  return ag::mse_map_loss(tape, pred, prior);
}

template <typename T>
Tensor<T> pal_domain_loss(Tape<T>& tape, const std::vector<Tensor<T>>& level_losses) {
  if (level_losses.empty()) throw UsageError("pal_domain_loss: no level losses");
  if (level_losses.size() == 1) return level_losses.front();
  Tensor<T> acc = level_losses.front();
  for (std::size_t i = 1; i < level_losses.size(); ++i) acc = ag::add(tape, acc, level_losses[i]);
  return ag::affine(tape, acc, T(1) / T(level_losses.size()), T(0));
}

template <typename T>
Tensor<T> adv_loss(Tape<T>& tape, const Tensor<T>& src, const Tensor<T>& tgt) {
  return ag::affine(tape, ag::add(tape, src, tgt), T(0.5), T(0));
}

template <typename T>
Tensor<T> reg_loss(Tape<T>& tape, const std::vector<Tensor<T>>& residuals) {
  Tensor<T> acc;
  for (const auto& r : residuals) {
    if (!r.defined()) continue;
    auto term = ag::l1_penalty(tape, r);
    acc = acc.defined() ? ag::add(tape, acc, term) : term;
  }
  return acc.defined() ? acc : Tensor<T>::scalar(T(0));
}

const double kBoxBeta = 1.0 / 9.0;

int AnchorTargets::positives() const {
  int n = 0;
  for (int a : assign) n += a >= 0;
  return n;
}

AnchorTargets make_anchor_targets(const models::AnchorGrid& grid, std::span<const LabeledBox> gt, double pos_iou,
                                  double neg_iou) {
  AnchorTargets t;
  t.assign = models::match_anchors(grid, gt, pos_iou, neg_iou);
  t.deltas.resize(t.assign.size());
  t.labels.assign(t.assign.size(), 0);
  for (std::size_t i = 0; i < t.assign.size(); ++i) {
    const int g = t.assign[i];
    if (g < 0) continue;
    t.deltas[i] = models::encode_box(grid.anchor(static_cast<int>(i)), gt[static_cast<std::size_t>(g)].box);
    t.labels[i] = gt[static_cast<std::size_t>(g)].label;
  }
  return t;
}

template <typename T>
DetectionLoss<T> detection_loss(Tape<T>& tape, const Tensor<T>& head, const models::HeadLayout& layout,
                                const models::AnchorGrid& grid, std::span<const AnchorTargets* const> targets) {
  if (head.rank() != 4) throw ShapeError("detection_loss: head must be N x C x H x W");
  const std::size_t n = head.dim(0);
  const auto ch = static_cast<std::size_t>(layout.channels());
  const auto gh = static_cast<std::size_t>(grid.grid_h), gw = static_cast<std::size_t>(grid.grid_w);
  if (head.dim(1) != ch || head.dim(2) != gh || head.dim(3) != gw) {
    throw ShapeError("detection_loss: head " + ag::shape_string(head.shape()) + " does not match the anchor layout");
  }
  if (targets.size() != n) throw ShapeError("detection_loss: one target set per image required");
  if (layout.anchors != grid.per_cell()) throw ShapeError("detection_loss: anchor count mismatch");

  auto flat = [&](std::size_t img, int channel, int gy, int gx) {
    return static_cast<std::int64_t>(((img * ch + static_cast<std::size_t>(channel)) * gh + static_cast<std::size_t>(gy)) * gw +
                                     static_cast<std::size_t>(gx));
  };

  std::vector<std::int64_t> obj_idx, box_idx, cls_idx;
  std::vector<T> obj_tgt, box_tgt;
  std::vector<int> cls_tgt;
  DetectionLoss<T> out;
  for (std::size_t img = 0; img < n; ++img) {
    const AnchorTargets& t = *targets[img];
    if (t.assign.size() != static_cast<std::size_t>(grid.count())) throw ShapeError("detection_loss: targets do not match grid");
    for (int gy = 0; gy < grid.grid_h; ++gy) {
      for (int gx = 0; gx < grid.grid_w; ++gx) {
        for (int a = 0; a < grid.per_cell(); ++a) {
          const auto i = static_cast<std::size_t>(grid.index(gy, gx, a));
          const int assign = t.assign[i];
          if (assign == models::kIgnore) continue;
          obj_idx.push_back(flat(img, layout.channel(a, 0), gy, gx));
          obj_tgt.push_back(assign >= 0 ? T(1) : T(0));
          if (assign < 0) {
            ++out.negatives;
            continue;
          }
          ++out.positives;
          const auto& d = t.deltas[i];
          const float dv[4] = {d.dx, d.dy, d.dw, d.dh};
          for (int k = 0; k < 4; ++k) {
            box_idx.push_back(flat(img, layout.channel(a, 1 + k), gy, gx));
            box_tgt.push_back(static_cast<T>(dv[k]));
          }
          for (int c = 0; c < layout.classes; ++c) cls_idx.push_back(flat(img, layout.channel(a, 5 + c), gy, gx));
          cls_tgt.push_back(t.labels[i]);
        }
      }
    }
  }

  if (obj_idx.empty()) {
    out.objectness = Tensor<T>::scalar(T(0));
  } else {
    auto logits = ag::gather(tape, head, obj_idx, ag::Shape{obj_idx.size()});
    out.objectness = ag::bce_with_logits(tape, logits, std::span<const T>(obj_tgt));
  }
  if (out.positives == 0) {
    out.box = Tensor<T>::scalar(T(0));
    out.cls = Tensor<T>::scalar(T(0));
    return out;
  }
  const auto p = static_cast<std::size_t>(out.positives);
  auto deltas = ag::gather(tape, head, box_idx, ag::Shape{p, 4});
  const auto per_coord = ag::smooth_l1(tape, deltas, Tensor<T>(ag::Shape{p, 4}, std::move(box_tgt)), T(kBoxBeta));
  out.box = ag::affine(tape, per_coord, T(4), T(0));
  auto cls_logits = ag::gather(tape, head, cls_idx, ag::Shape{p, static_cast<std::size_t>(layout.classes)});
  out.cls = ag::classification_loss(tape, cls_logits, std::span<const int>(cls_tgt));
  return out;
}

#define WXA_INSTANTIATE(T)                                                                                        \
  template Tensor<T> pal_level_loss(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> pal_domain_loss(Tape<T>&, const std::vector<Tensor<T>>&);                                    \
  template Tensor<T> adv_loss(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> reg_loss(Tape<T>&, const std::vector<Tensor<T>>&);                                           \
  template DetectionLoss<T> detection_loss(Tape<T>&, const Tensor<T>&, const models::HeadLayout&,                \
                                           const models::AnchorGrid&, std::span<const AnchorTargets* const>);
WXA_INSTANTIATE(float)
WXA_INSTANTIATE(double)
#undef WXA_INSTANTIATE

}  // namespace wxa::trainer
