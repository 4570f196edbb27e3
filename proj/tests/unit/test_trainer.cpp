#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>

#include "wxadapt/core/rng.hpp"
#include "wxadapt/io/image_io.hpp"
#include "wxadapt/models/checkpoint.hpp"
#include "wxadapt/trainer/config.hpp"
#include "wxadapt/trainer/evaluate.hpp"
#include "wxadapt/trainer/losses.hpp"
#include "wxadapt/trainer/trainer.hpp"
#include "wxadapt/weathersim/dataset.hpp"

using namespace wxa;
using namespace wxa::trainer;
using ag::Tape;
using ag::Tensor;
namespace fs = std::filesystem;

namespace {

const TrainingData& small_data() {
  static const TrainingData data = [] {
    sim::SynthConfig sc;
    sc.seed = 11;
    TrainingData d;
    d.weather = PriorKind::Haze;
    d.height = 128;
    d.width = 128;
    d.num_classes = sim::kNumClasses;
    for (int i = 0; i < 12; ++i) d.source.push_back(sim::generate_sample(sc, sim::Split::Source, i).sample);
    for (int i = 0; i < 12; ++i) d.target.push_back(sim::generate_sample(sc, sim::Split::Target, i).sample);
    for (int i = 0; i < 6; ++i) d.val.push_back(sim::generate_sample(sc, sim::Split::Val, i).sample);
    return d;
  }();
  return data;
}

TrainConfig quick_config(Mode mode, long iterations = 3) {
  TrainConfig c;
  c.mode = mode;
  c.iterations = iterations;
  c.seed = 5;
  return c;
}

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("wxa_trainer_" + name);
  fs::remove_all(p);
  return p;
}

// (((a + b) + c) + d) + e in float, one rounding per addition.
float sum_left(float a, float b, float c, float d, float e) {
  volatile float s = a + b;
  s = s + c;
  s = s + d;
  s = s + e;
  return s;
}

template <typename T>
Tensor<T> constant(ag::Shape shape, T v, bool rg = false) {
  return Tensor<T>::full(std::move(shape), v, rg);
}

double sigmoid_bce(double x, double y) {
  const double p = 1.0 / (1.0 + std::exp(-x));
  return -(y * std::log(p) + (1 - y) * std::log(1 - p));
}

double smooth_l1_scalar(double d, double beta) {
  const double a = std::abs(d);
  return a < beta ? 0.5 * a * a / beta : a - 0.5 * beta;
}

// Brute-force AP: for every prefix k of the score ranking, redo the greedy
// matching from scratch and read precision and recall off the counts.
std::vector<double> reference_ap(const std::vector<std::vector<models::Detection>>& dets,
                                 const std::vector<std::vector<LabeledBox>>& gts, int num_classes, double thr) {
  std::vector<double> out;
  for (int c = 0; c < num_classes; ++c) {
    int npos = 0;
    for (const auto& img : gts)
      for (const auto& g : img) npos += g.label == c;
    if (npos == 0) {
      out.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    struct Item {
      float score;
      std::size_t image, index;
    };
    std::vector<Item> items;
    for (std::size_t i = 0; i < dets.size(); ++i)
      for (std::size_t k = 0; k < dets[i].size(); ++k)
        if (dets[i][k].label == c) items.push_back({dets[i][k].score, i, k});
    // rank = number of items strictly ahead in (score desc, image, index) order
    std::vector<Item> ranked(items.size());
    for (std::size_t a = 0; a < items.size(); ++a) {
      std::size_t r = 0;
      for (std::size_t b = 0; b < items.size(); ++b) {
        const bool ahead = items[b].score > items[a].score ||
                           (items[b].score == items[a].score &&
                            (items[b].image < items[a].image || (items[b].image == items[a].image && items[b].index < items[a].index)));
        r += ahead;
      }
      ranked[r] = items[a];
    }
    std::vector<double> prec, rec;
    for (std::size_t k = 1; k <= ranked.size(); ++k) {
      std::vector<std::vector<bool>> taken(gts.size());
      for (std::size_t i = 0; i < gts.size(); ++i) taken[i].assign(gts[i].size(), false);
      double tp = 0;
      for (std::size_t j = 0; j < k; ++j) {
        const auto& d = dets[ranked[j].image][ranked[j].index];
        double best = -1;
        std::size_t arg = 0;
        for (std::size_t g = 0; g < gts[ranked[j].image].size(); ++g) {
          const auto& gt = gts[ranked[j].image][g];
          if (gt.label != c) continue;
          const double v = iou(d.box, gt.box);
          if (v > best) {
            best = v;
            arg = g;
          }
        }
        if (best >= thr && !taken[ranked[j].image][arg]) {
          taken[ranked[j].image][arg] = true;
          tp += 1;
        }
      }
      prec.push_back(tp / static_cast<double>(k));
      rec.push_back(tp / npos);
    }
    double ap = 0;
    for (std::size_t k = 0; k < rec.size(); ++k) {
      const double prev = k == 0 ? 0.0 : rec[k - 1];
      const double pmax = *std::max_element(prec.begin() + static_cast<std::ptrdiff_t>(k), prec.end());
      ap += (rec[k] - prev) * pmax;
    }
    out.push_back(ap);
  }
  return out;
}

bool same_value(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

}  // namespace

TEST_CASE("pal_level_loss examples") {
  Tape<double> tape;
  const auto p = constant<double>({1, 1, 4, 4}, 0.3);
  CHECK(pal_level_loss(tape, p, p).item() == 0.0);
  CHECK(pal_level_loss(tape, constant<double>({2, 1, 4, 4}, 0.0), constant<double>({2, 1, 4, 4}, 0.5)).item() ==
        doctest::Approx(0.25).epsilon(1e-15));

  Rng rng(3);
  std::vector<double> a(2 * 16), b(2 * 16);
  for (auto& v : a) v = rng.uniform();
  for (auto& v : b) v = rng.uniform();
  const auto both = pal_level_loss(tape, Tensor<double>({2, 1, 4, 4}, a), Tensor<double>({2, 1, 4, 4}, b)).item();
  double per[2];
  for (int n = 0; n < 2; ++n) {
    std::vector<double> an(a.begin() + n * 16, a.begin() + (n + 1) * 16), bn(b.begin() + n * 16, b.begin() + (n + 1) * 16);
    per[n] = pal_level_loss(tape, Tensor<double>({1, 1, 4, 4}, an), Tensor<double>({1, 1, 4, 4}, bn)).item();
  }
  CHECK(both == doctest::Approx(0.5 * (per[0] + per[1])).epsilon(1e-14));
  CHECK(both >= 0.0);
  CHECK_THROWS_AS(pal_level_loss(tape, constant<double>({1, 1, 4, 4}, 0), constant<double>({1, 1, 2, 2}, 0)), ShapeError);
}

TEST_CASE("pal_domain_loss and adv_loss examples") {
  Tape<double> tape;
  auto s = [](double v) { return Tensor<double>::scalar(v); };
  CHECK(pal_domain_loss(tape, {s(0.7), s(0.7)}).item() == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(pal_domain_loss(tape, {s(0.2), s(0.4)}).item() == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(pal_domain_loss(tape, {s(0.2)}).item() == 0.2);
  CHECK_THROWS_AS(pal_domain_loss<double>(tape, {}), UsageError);
  CHECK(adv_loss(tape, s(0), s(0)).item() == 0.0);
  CHECK(adv_loss(tape, s(0.2), s(0.6)).item() == doctest::Approx(0.4).epsilon(1e-15));
}

TEST_CASE("reg_loss examples") {
  Tape<double> tape;
  CHECK(reg_loss(tape, {Tensor<double>({1, 2}, {1.0, -1.0})}).item() == 2.0);
  CHECK(reg_loss<double>(tape, {Tensor<double>(), Tensor<double>()}).item() == 0.0);
  CHECK(reg_loss(tape, {Tensor<double>({1, 2}, {1.0, -1.0}), Tensor<double>({2, 1}, {0.5, -0.5})}).item() == 2.5);

  models::ModelConfig mc;
  mc.rfrb_levels = {4, 5};
  models::Detector<float> det(mc, 1);
  Rng rng(2);
  std::vector<float> img(2 * 3 * 64 * 64);
  for (auto& v : img) v = static_cast<float>(rng.uniform());
  Tape<float> ft;
  const auto f = det.target_features(ft, Tensor<float>({2, 3, 64, 64}, img));
  CHECK(reg_loss(ft, std::vector<Tensor<float>>{f.delta4, f.delta5}).item() == 0.0f);
}

TEST_CASE("detection loss: no ground truth leaves box and class terms at exactly zero") {
  models::AnchorGrid grid;
  models::HeadLayout layout;
  const AnchorTargets t = make_anchor_targets(grid, {});
  CHECK(t.positives() == 0);
  std::vector<double> head(static_cast<std::size_t>(layout.channels() * 16), 0.0);
  for (int a = 0; a < 3; ++a)
    for (int cell = 0; cell < 16; ++cell) head[static_cast<std::size_t>(layout.channel(a, 0) * 16 + cell)] = -30.0;
  Tape<double> tape;
  const AnchorTargets* ptr[] = {&t};
  auto loss = detection_loss<double>(tape, Tensor<double>({1, std::size_t(layout.channels()), 4, 4}, head, true), layout,
                                     grid, ptr);
  CHECK(loss.box.item() == 0.0);
  CHECK(loss.cls.item() == 0.0);
  CHECK(loss.objectness.item() < 1e-12);
  CHECK(loss.negatives == 48);
}

TEST_CASE("detection loss: exact encoding with confident logits is near zero") {
  models::AnchorGrid grid;
  models::HeadLayout layout;
  const std::vector<LabeledBox> gt = {{{10, 12, 40, 44}, 2}, {{70, 60, 120, 118}, 0}};
  const AnchorTargets t = make_anchor_targets(grid, gt);
  REQUIRE(t.positives() >= 2);
  const std::size_t cells = 16;
  std::vector<double> head(static_cast<std::size_t>(layout.channels()) * cells, 0.0);
  for (int i = 0; i < grid.count(); ++i) {
    const int a = i % 3, cell = i / 3;
    auto at = [&](int k) -> double& { return head[static_cast<std::size_t>(layout.channel(a, k)) * cells + std::size_t(cell)]; };
    const int g = t.assign[std::size_t(i)];
    at(0) = g >= 0 ? 30.0 : -30.0;
    if (g < 0) continue;
    const auto& d = t.deltas[std::size_t(i)];
    at(1) = d.dx;
    at(2) = d.dy;
    at(3) = d.dw;
    at(4) = d.dh;
    for (int c = 0; c < 3; ++c) at(5 + c) = c == t.labels[std::size_t(i)] ? 30.0 : -30.0;
  }
  Tape<double> tape;
  const AnchorTargets* ptr[] = {&t};
  auto loss = detection_loss<double>(tape, Tensor<double>({1, std::size_t(layout.channels()), 4, 4}, head), layout, grid, ptr);
  CHECK(loss.objectness.item() + loss.box.item() + loss.cls.item() < 0.01);
}

TEST_CASE("detection loss: single box matches a hand recomputation") {
  models::AnchorGrid grid;
  models::HeadLayout layout;
  // Exactly the size-32 anchor of cell (1, 1); every other anchor overlaps it
  // with IoU <= 0.25, so it is the only positive and nothing is ignored.
  const std::vector<LabeledBox> gt = {{{32, 32, 64, 64}, 1}};
  const AnchorTargets t = make_anchor_targets(grid, gt);
  const int pos = grid.index(1, 1, 1);
  for (int i = 0; i < grid.count(); ++i) CHECK(t.assign[std::size_t(i)] == (i == pos ? 0 : models::kNegative));

  Rng rng(9);
  const std::size_t cells = 16;
  std::vector<double> head(static_cast<std::size_t>(layout.channels()) * cells);
  for (auto& v : head) v = rng.normal(0, 1.5);
  auto at = [&](int a, int k, int cell) { return head[static_cast<std::size_t>(layout.channel(a, k)) * cells + std::size_t(cell)]; };

  double bce = 0;
  for (int cell = 0; cell < 16; ++cell)
    for (int a = 0; a < 3; ++a) bce += sigmoid_bce(at(a, 0, cell), cell == 5 && a == 1 ? 1.0 : 0.0);
  bce /= 48;
  double box = 0;
  for (int k = 1; k <= 4; ++k) box += smooth_l1_scalar(at(1, k, 5) - 0.0, 1.0 / 9.0);
  const double l0 = at(1, 5, 5), l1 = at(1, 6, 5), l2 = at(1, 7, 5);
  const double ce = std::log(std::exp(l0) + std::exp(l1) + std::exp(l2)) - l1;

  Tape<double> tape;
  const AnchorTargets* ptr[] = {&t};
  auto loss = detection_loss<double>(tape, Tensor<double>({1, std::size_t(layout.channels()), 4, 4}, head), layout, grid, ptr);
  CHECK(loss.positives == 1);
  CHECK(loss.objectness.item() == doctest::Approx(bce).epsilon(1e-12));
  CHECK(loss.box.item() == doctest::Approx(box).epsilon(1e-12));
  CHECK(loss.cls.item() == doctest::Approx(ce).epsilon(1e-12));
  CHECK(loss.objectness.item() + loss.box.item() + loss.cls.item() == doctest::Approx(bce + box + ce).epsilon(1e-12));
}

TEST_CASE("prior-adversarial gradient into the extractor is the reversed PEN gradient") {
  const float coeff = 0.5f;
  models::ModelConfig mc;
  mc.pen_levels = {5};
  mc.grl_coeff = coeff;
  models::Detector<float> det(mc, 3);
  Rng rng(4);
  std::vector<float> img(2 * 3 * 64 * 64), prior(2 * 1 * 2 * 2);
  for (auto& v : img) v = static_cast<float>(rng.uniform());
  for (auto& v : prior) v = static_cast<float>(rng.uniform());
  const Tensor<float> x({2, 3, 64, 64}, img), z({2, 1, 2, 2}, prior);

  auto extractor_grads = [&](bool reversed) {
    for (auto& p : det.parameters()) p.tensor.zero_grad();
    Tape<float> tape;
    const auto f = det.source_features(tape, x);
    Tensor<float> pred;
    if (reversed) {
      pred = det.pen(tape, f.f5, 5, ag::NormMode::Train);
    } else {
      auto& p = det.pens.at(5);
      auto h = ag::relu(tape, p.n1(tape, p.c1(tape, f.f5), ag::NormMode::Train));
      h = ag::relu(tape, p.n2(tape, p.c2(tape, h), ag::NormMode::Train));
      h = ag::relu(tape, p.n3(tape, p.c3(tape, h), ag::NormMode::Train));
      pred = ag::affine(tape, ag::tanh(tape, p.out(tape, h)), 0.5f, 0.5f);
    }
    auto loss = adv_loss(tape, pal_level_loss(tape, pred, z), Tensor<float>::scalar(0));
    tape.backward(loss);
    std::vector<float> g;
    for (auto& p : det.parameters()) {
      if (!p.name.starts_with("extractor.") || !p.tensor.requires_grad()) continue;
      auto gs = std::as_const(p.tensor).grad();
      g.insert(g.end(), gs.begin(), gs.end());
    }
    return g;
  };
  const auto with = extractor_grads(true);
  const auto without = extractor_grads(false);
  REQUIRE(with.size() == without.size());
  double max_err = 0, max_mag = 0;
  for (std::size_t i = 0; i < with.size(); ++i) {
    max_err = std::max(max_err, std::abs(double(with[i]) + coeff * double(without[i])));
    max_mag = std::max(max_mag, std::abs(double(without[i])));
  }
  CHECK(max_mag > 0);
  CHECK(max_err <= 1e-6 * max_mag);
}

TEST_CASE("grl_coeff 0 decouples the extractor from the prior loss while PEN still trains") {
  models::ModelConfig mc;
  mc.pen_levels = {4, 5};
  mc.grl_coeff = 0.0;
  models::Detector<float> det(mc, 8);
  Rng rng(5);
  std::vector<float> img(2 * 3 * 64 * 64);
  for (auto& v : img) v = static_cast<float>(rng.uniform());
  Tape<float> tape;
  const auto f = det.source_features(tape, Tensor<float>({2, 3, 64, 64}, img));
  const auto p4 = det.pen(tape, f.f4, 4, ag::NormMode::Train);
  const auto p5 = det.pen(tape, f.f5, 5, ag::NormMode::Train);
  auto loss = pal_domain_loss(tape, {pal_level_loss(tape, p4, constant<float>(p4.shape(), 0.2f)),
                                     pal_level_loss(tape, p5, constant<float>(p5.shape(), 0.7f))});
  tape.backward(loss);
  double pen_norm = 0;
  for (auto& p : det.parameters()) {
    if (p.name.starts_with("extractor.") && p.tensor.has_grad()) {
      for (float g : std::as_const(p.tensor).grad()) CHECK(g == 0.0f);
    }
    if (p.name.starts_with("pen") && p.tensor.has_grad()) {
      for (float g : std::as_const(p.tensor).grad()) pen_norm += double(g) * g;
    }
  }
  CHECK(pen_norm > 0);
}

TEST_CASE("lambda 0 adds nothing to the RFRB gradient") {
  models::ModelConfig mc;
  mc.rfrb_levels = {5};
  models::Detector<float> det(mc, 2);
  Rng rng(6);
  for (auto t : {det.rfrb.at(5).c3.weight, det.rfrb.at(5).c3.bias})
    for (auto& v : t.data()) v = static_cast<float>(rng.normal(0, 0.1));
  std::vector<float> img(2 * 3 * 64 * 64);
  for (auto& v : img) v = static_cast<float>(rng.uniform());
  const Tensor<float> x({2, 3, 64, 64}, img);
  auto rfrb_grads = [&](bool with_reg) {
    for (auto& p : det.parameters()) p.tensor.zero_grad();
    Tape<float> tape;
    const auto f = det.target_features(tape, x);
    auto loss = ag::sum(tape, f.f5);
    if (with_reg) loss = ag::add(tape, loss, ag::affine(tape, reg_loss(tape, std::vector<Tensor<float>>{f.delta5}), 0.0f, 0.0f));
    tape.backward(loss);
    std::vector<float> g;
    for (auto& p : det.parameters())
      if (p.name.starts_with("rfrb")) {
        auto gs = std::as_const(p.tensor).grad();
        g.insert(g.end(), gs.begin(), gs.end());
      }
    return g;
  };
  const auto a = rfrb_grads(true), b = rfrb_grads(false);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("train config parsing and schedule") {
  const auto c = TrainConfig::from_kv(io::KeyValueConfig::parse(
      "mode = FRCNN+P5+R5\niterations = 7\nlambda = 0.01\nwidths = 8,16,16,16,16\nsource_prior = ideal\n"));
  CHECK(c.mode == Mode::P5R5);
  CHECK(c.lambda_reg == 0.01);
  CHECK(c.model.widths[4] == 16);
  CHECK(c.source_prior == priors::PriorSource::Ideal);
  CHECK(c.lr_at(0) == 1e-2);
  CHECK(c.lr_at(4) == 1e-2);
  CHECK(c.lr_at(5) == 1e-3);
  CHECK(c.lr_at(6) == 1e-3);
  const auto back = TrainConfig::from_kv(c.to_kv());
  CHECK(back.to_kv().dump() == c.to_kv().dump());

  TrainConfig d;
  CHECK(d.iterations == 4000);
  CHECK(d.lambda_reg == 0.1);
  CHECK(d.momentum == 0.9);
  CHECK(d.lr_at(2856) == 1e-2);
  CHECK(d.lr_at(2857) == 1e-3);
  CHECK(d.grl_scale_at(0) == 0.0);
  CHECK(d.grl_scale_at(999) == 0.0);
  CHECK(d.grl_scale_at(1000) == 0.0);
  CHECK(d.grl_scale_at(2500) == doctest::Approx(2.0 / (1.0 + std::exp(-5.0)) - 1.0).epsilon(1e-15));
  CHECK(d.grl_scale_at(3999) < 1.0);
  d.grl_ramp = 0;
  CHECK(d.grl_scale_at(999) == 0.0);
  CHECK(d.grl_scale_at(1000) == 1.0);
  d.grl_warmup = 0;
  CHECK(d.grl_scale_at(0) == 1.0);
  CHECK(d.model_config().pen_levels == std::vector<int>{4, 5});
  CHECK(d.model_config().rfrb_levels == std::vector<int>{4, 5});

  CHECK_THROWS_AS(TrainConfig::from_kv(io::KeyValueConfig::parse("iterations = 0")), UsageError);
  CHECK_THROWS_AS(TrainConfig::from_kv(io::KeyValueConfig::parse("lambda = -1")), UsageError);
  CHECK_THROWS_AS(TrainConfig::from_kv(io::KeyValueConfig::parse("pal_levels = 3")), UsageError);
  CHECK_THROWS_AS(TrainConfig::from_kv(io::KeyValueConfig::parse("learning_rate = 1")), UsageError);
  CHECK_THROWS_AS(mode_from_string("p4"), UsageError);
  for (Mode m : {Mode::Frcnn, Mode::D5, Mode::D45, Mode::D5R5, Mode::P5R5, Mode::P45, Mode::P45R45}) {
    CHECK(mode_from_string(mode_name(m)) == m);
    CHECK(mode_from_string(mode_label(m)) == m);
  }
}

TEST_CASE("sgd with momentum and weight decay") {
  Tensor<float> w({1}, {1.0f}, true);
  Sgd sgd({{"w", w}}, 0.9, 0.1);
  w.grad()[0] = 0.5f;
  sgd.step(0.1);
  CHECK(w.data()[0] == doctest::Approx(0.94).epsilon(1e-6));
  sgd.zero_grad();
  CHECK_FALSE(w.has_grad());
  sgd.step(0.1);  // no gradient: skipped
  CHECK(w.data()[0] == doctest::Approx(0.94).epsilon(1e-6));
  w.grad()[0] = 0.5f;
  sgd.step(0.1);  // v = 0.9 * 0.6 + 0.5 + 0.094
  CHECK(w.data()[0] == doctest::Approx(0.94 - 0.1134).epsilon(1e-6));
}

TEST_CASE("logged total equals the sum of its logged components") {
  for (Mode m : {Mode::Frcnn, Mode::D5, Mode::D5R5, Mode::P5R5, Mode::P45R45}) {
    Trainer tr(quick_config(m), small_data());
    for (int it = 0; it < 3; ++it) {
      const auto r = tr.step();
      CHECK(r.total == sum_left(r.det_obj, r.det_box, r.det_cls, r.adv, r.reg_weighted));
      if (m == Mode::P5R5 || m == Mode::P45R45) CHECK(r.adv == 0.5f * (r.pal_src + r.pal_tgt));
      if (m == Mode::D5 || m == Mode::D5R5) CHECK(r.adv == 0.5f * (r.disc_src + r.disc_tgt));
      CHECK(r.reg_weighted == float(0.1) * r.reg);
      if (m == Mode::Frcnn) {
        CHECK(r.adv == 0.0f);
        CHECK(r.reg == 0.0f);
        CHECK(r.pal_src == 0.0f);
        CHECK(r.pal_tgt == 0.0f);
      }
    }
    if (m == Mode::Frcnn) CHECK(tr.target_samples_drawn() == 0);
  }
}

TEST_CASE("lambda sweep changes only the weighted regularizer") {
  std::vector<LossRecord> rec;
  const std::array<double, 3> lambdas{0.01, 0.1, 1.0};
  for (double lambda : lambdas) {
    auto c = quick_config(Mode::P45R45);
    c.lambda_reg = lambda;
    Trainer tr(c, small_data());
    Rng rng(12);
    for (int l : {4, 5})
      for (auto& v : tr.model().rfrb.at(l).c3.weight.data()) v = static_cast<float>(rng.normal(0, 0.05));
    rec.push_back(tr.step());
  }
  CHECK(rec[0].reg > 0.0f);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(rec[i].det_obj == rec[0].det_obj);
    CHECK(rec[i].det_box == rec[0].det_box);
    CHECK(rec[i].det_cls == rec[0].det_cls);
    CHECK(rec[i].adv == rec[0].adv);
    CHECK(rec[i].reg == rec[0].reg);
    CHECK(rec[i].reg_weighted == static_cast<float>(lambdas[i]) * rec[i].reg);
    CHECK(rec[i].total == sum_left(rec[i].det_obj, rec[i].det_box, rec[i].det_cls, rec[i].adv, rec[i].reg_weighted));
  }
  CHECK(rec[0].total != rec[2].total);
}

TEST_CASE("zero learning rate leaves every parameter bitwise unchanged") {
  auto c = quick_config(Mode::P45R45);
  c.lr = 0;
  c.lr_low = 0;
  Trainer tr(c, small_data());
  std::vector<std::vector<float>> before;
  for (const auto& p : tr.model().parameters()) before.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  tr.step();
  const auto after = tr.model().parameters();
  for (std::size_t i = 0; i < after.size(); ++i) {
    CHECK_MESSAGE(std::equal(before[i].begin(), before[i].end(), after[i].tensor.data().begin()), after[i].name);
  }
}

TEST_CASE("frozen early blocks stay bitwise unchanged in every mode") {
  for (Mode m : {Mode::Frcnn, Mode::D5, Mode::D45, Mode::D5R5, Mode::P5R5, Mode::P45, Mode::P45R45}) {
    Trainer tr(quick_config(m), small_data());
    std::vector<std::vector<float>> before;
    const auto params = tr.model().parameters();
    for (const auto& p : params) before.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
    tr.step();
    tr.step();
    bool moved_later = false;
    for (std::size_t i = 0; i < params.size(); ++i) {
      const bool same = std::equal(before[i].begin(), before[i].end(), params[i].tensor.data().begin());
      if (params[i].name.starts_with("extractor.c1.") || params[i].name.starts_with("extractor.c2.")) {
        CHECK_MESSAGE(same, params[i].name);
        CHECK_FALSE(params[i].tensor.has_grad());
      }
      if (params[i].name.starts_with("extractor.c3.")) moved_later = moved_later || !same;
    }
    CHECK(moved_later);
  }
}

TEST_CASE("train writes one row per iteration, a checkpoint, and is deterministic") {
  const auto a = temp_dir("det_a"), b = temp_dir("det_b"), one = temp_dir("one");
  auto c = quick_config(Mode::P45R45, 4);
  c.eval_interval = 2;
  const auto ra = train(c, small_data(), a);
  const auto rb = train(c, small_data(), b);
  CHECK(io::file_digest(a / "metrics.csv") == io::file_digest(b / "metrics.csv"));
  CHECK(io::file_digest(a / "checkpoint.wxa") == io::file_digest(b / "checkpoint.wxa"));
  CHECK(io::file_digest(a / "eval.csv") == io::file_digest(b / "eval.csv"));
  CHECK(ra.evals.size() == 2);
  CHECK(ra.evals.back().iteration == 4);

  const auto rows = read_metrics_csv(a / "metrics.csv");
  REQUIRE(rows.size() == 4);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].iteration == long(i + 1));
    CHECK(rows[i].total == ra.metrics[i].total);
    CHECK(rows[i].total == sum_left(rows[i].det_obj, rows[i].det_box, rows[i].det_cls, rows[i].adv, rows[i].reg_weighted));
  }

  c.seed = 6;
  train(c, small_data(), b);
  CHECK(io::file_digest(a / "metrics.csv") != io::file_digest(b / "metrics.csv"));

  auto c1 = quick_config(Mode::Frcnn, 1);
  train(c1, small_data(), one);
  CHECK(read_metrics_csv(one / "metrics.csv").size() == 1);
  const auto ck = models::load_checkpoint(one / "checkpoint.wxa");
  CHECK(ck.meta.iteration == 1);
  CHECK(TrainConfig::from_kv(ck.meta.train_config).mode == Mode::Frcnn);
  for (const auto& p : {a, b, one}) fs::remove_all(p);
}

TEST_CASE("divergence and non-finite losses abort with the component named") {
  auto c = quick_config(Mode::D5);
  c.divergence_threshold = 1e-3;
  try {
    Trainer(c, small_data()).step();
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(std::string(e.what()).find("exceeds") != std::string::npos);
    CHECK(e.exit_code() == 2);
  }

  try {
    Trainer tr(quick_config(Mode::Frcnn), small_data());
    tr.model().head.out.bias.data()[0] = std::numeric_limits<float>::quiet_NaN();  // objectness of anchor 0
    tr.step();
    FAIL("expected a non-finite loss");
  } catch (const DivergenceError& e) {
    CHECK(std::string(e.what()).find("det_obj") != std::string::npos);
  }
}

TEST_CASE("source-only training never reads target images") {
  const auto root = temp_dir("counters");
  sim::SynthConfig sc;
  sc.n_source = 4;
  sc.n_target = 4;
  sc.n_val = 2;
  sc.seed = 2;
  const auto manifest = sim::synthesize_dataset(sc, root);
  sim::reset_load_counters();
  const auto c = quick_config(Mode::Frcnn, 2);
  const auto data = load_training_data(manifest, c);
  const auto result = train(c, data, "");
  const auto counts = sim::samples_loaded();
  CHECK(counts[0] == 4);
  CHECK(counts[1] == 0);
  CHECK(counts[2] == 2);
  CHECK(data.target.empty());
  CHECK(result.target_samples_drawn == 0);

  sim::reset_load_counters();
  const auto da = load_training_data(manifest, quick_config(Mode::P45R45));
  CHECK(sim::samples_loaded()[1] == 4);
  auto wrong = c;
  wrong.weather = "rain";
  CHECK_THROWS_AS(load_training_data(manifest, wrong), UsageError);
  fs::remove_all(root);
}

TEST_CASE("PEN learns the prior with the extractor frozen") {
  const auto fit = fit_pen_only(quick_config(Mode::P45R45), small_data(), 200);
  REQUIRE(fit.losses.size() == 201);
  CHECK(fit.final() <= 0.5f * fit.initial());
}

TEST_CASE("mAP: perfect detections, no detections, hand scenario") {
  const std::vector<std::vector<LabeledBox>> gts = {{{{0, 0, 10, 10}, 0}, {{20, 20, 40, 40}, 1}}, {{{5, 5, 25, 25}, 2}}};
  std::vector<std::vector<models::Detection>> perfect(2);
  for (std::size_t i = 0; i < gts.size(); ++i)
    for (const auto& g : gts[i]) perfect[i].push_back({g.box, g.label, 1.0f});
  CHECK(evaluate_map(perfect, gts, 3).map == 1.0);
  CHECK(evaluate_map({{}, {}}, gts, 3).map == 0.0);

  // One true positive, one false positive, one missed ground truth.
  const std::vector<std::vector<LabeledBox>> g1 = {{{{0, 0, 10, 10}, 0}, {{50, 50, 60, 60}, 0}}};
  const std::vector<std::vector<models::Detection>> d1 = {{{{0, 0, 10, 10}, 0, 0.9f}, {{100, 100, 110, 110}, 0, 0.8f}}};
  const auto r = evaluate_map(d1, g1, 1);
  CHECK(r.ap[0] == 0.5);
  CHECK(r.ap[0] == reference_ap(d1, g1, 1, 0.5)[0]);

  // A class with no ground truth is flagged and excluded.
  const auto r2 = evaluate_map(d1, g1, 3);
  CHECK(std::isnan(r2.ap[1]));
  CHECK(r2.classes_present == 1);
  CHECK(r2.map == 0.5);
  CHECK(r2.flags.size() == 2);
}

TEST_CASE("mAP matches the brute-force precision-recall oracle on random scenes") {
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const int images = rng.uniform_int(1, 3);
    std::vector<std::vector<LabeledBox>> gts(static_cast<std::size_t>(images));
    std::vector<std::vector<models::Detection>> dets(static_cast<std::size_t>(images));
    int total_boxes = rng.uniform_int(1, 5);
    for (int b = 0; b < total_boxes; ++b) {
      const float x = float(rng.uniform(0, 80)), y = float(rng.uniform(0, 80)), s = float(rng.uniform(8, 40));
      gts[static_cast<std::size_t>(rng.uniform_int(0, images - 1))].push_back({{x, y, x + s, y + s}, rng.uniform_int(0, 2)});
    }
    for (int i = 0; i < images; ++i) {
      for (const auto& g : gts[static_cast<std::size_t>(i)]) {
        const int copies = rng.uniform_int(0, 2);
        for (int k = 0; k < copies; ++k) {
          const float j = float(rng.uniform(-6, 6));
          const int label = rng.uniform() < 0.8 ? g.label : rng.uniform_int(0, 2);
          dets[static_cast<std::size_t>(i)].push_back(
              {{g.box.x_min + j, g.box.y_min + j, g.box.x_max + j, g.box.y_max}, label, float(rng.uniform_int(1, 10)) / 10});
        }
      }
      const int spurious = rng.uniform_int(0, 2);
      for (int k = 0; k < spurious; ++k) {
        const float x = float(rng.uniform(0, 100)), y = float(rng.uniform(0, 100));
        dets[static_cast<std::size_t>(i)].push_back({{x, y, x + 15, y + 15}, rng.uniform_int(0, 2), float(rng.uniform_int(1, 10)) / 10});
      }
    }
    const auto got = evaluate_map(dets, gts, 3);
    const auto want = reference_ap(dets, gts, 3, 0.5);
    for (int c = 0; c < 3; ++c) CHECK_MESSAGE(same_value(got.ap[std::size_t(c)], want[std::size_t(c)]), "trial " << trial);
  }
}
