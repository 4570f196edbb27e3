#include "wxadapt/models/network.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace wxa::models {

namespace {

bool contains(const std::vector<int>& v, int x) { return std::find(v.begin(), v.end(), x) != v.end(); }

void check_levels(const std::vector<int>& v, const char* what) {
  for (int l : v)
    if (l != 4 && l != 5) throw UsageError(std::string(what) + ": levels must be 4 or 5, got " + std::to_string(l));
}

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<int> to_ints(const std::vector<double>& v) {
  std::vector<int> out;
  for (double d : v) out.push_back(static_cast<int>(d));
  return out;
}

}  // namespace

void ModelConfig::validate() const {
  for (int w : widths)
    if (w < 1) throw UsageError("model: channel widths must be >= 1");
  if (num_classes < 1) throw UsageError("model: need at least one class");
  if (anchor_sizes.empty()) throw UsageError("model: need at least one anchor size");
  if (head_width < 1 || pen_width < 1 || disc_width < 1 || pen_out_channels < 1) {
    throw UsageError("model: head, pen and discriminator widths must be >= 1");
  }
  check_levels(pen_levels, "pen_levels");
  check_levels(rfrb_levels, "rfrb_levels");
  check_levels(disc_levels, "disc_levels");
  if (!(grl_coeff >= 0) || !(disc_grl_coeff >= 0)) throw UsageError("model: reversal coefficients must be >= 0");
}

bool ModelConfig::has_pen(int level) const { return contains(pen_levels, level); }
bool ModelConfig::has_rfrb(int level) const { return contains(rfrb_levels, level); }
bool ModelConfig::has_disc(int level) const { return contains(disc_levels, level); }

void ModelConfig::to_kv(io::KeyValueConfig& kv) const {
  kv.set("widths", join_ints({widths.begin(), widths.end()}));
  kv.set("num_classes", std::to_string(num_classes));
  std::ostringstream a;
  for (std::size_t i = 0; i < anchor_sizes.size(); ++i) a << (i ? "," : "") << anchor_sizes[i];
  kv.set("anchor_sizes", a.str());
  kv.set("head_width", std::to_string(head_width));
  kv.set("pen_width", std::to_string(pen_width));
  kv.set("pen_out_channels", std::to_string(pen_out_channels));
  kv.set("disc_width", std::to_string(disc_width));
  kv.set("pen_levels", join_ints(pen_levels));
  kv.set("rfrb_levels", join_ints(rfrb_levels));
  kv.set("disc_levels", join_ints(disc_levels));
  kv.set("freeze_early", freeze_early ? "true" : "false");
  std::ostringstream g;
  g.precision(17);
  g << grl_coeff;
  kv.set("grl_coeff", g.str());
  g.str("");
  g << disc_grl_coeff;
  kv.set("disc_grl_coeff", g.str());
}

ModelConfig ModelConfig::from_kv(const io::KeyValueConfig& kv) { return from_kv(kv, ModelConfig{}); }

ModelConfig ModelConfig::from_kv(const io::KeyValueConfig& kv, ModelConfig c) {
  if (kv.has("widths")) {
    const auto w = to_ints(kv.get_list("widths", {}));
    if (w.size() != 5) throw UsageError("model: widths needs five values");
    std::copy(w.begin(), w.end(), c.widths.begin());
  }
  c.num_classes = int(kv.get_int("num_classes", c.num_classes));
  if (kv.has("anchor_sizes")) {
    c.anchor_sizes.clear();
    for (double d : kv.get_list("anchor_sizes", {})) c.anchor_sizes.push_back(float(d));
  }
  c.head_width = int(kv.get_int("head_width", c.head_width));
  c.pen_width = int(kv.get_int("pen_width", c.pen_width));
  c.pen_out_channels = int(kv.get_int("pen_out_channels", c.pen_out_channels));
  c.disc_width = int(kv.get_int("disc_width", c.disc_width));
  if (kv.has("pen_levels")) c.pen_levels = to_ints(kv.get_list("pen_levels", {}));
  if (kv.has("rfrb_levels")) c.rfrb_levels = to_ints(kv.get_list("rfrb_levels", {}));
  if (kv.has("disc_levels")) c.disc_levels = to_ints(kv.get_list("disc_levels", {}));
  c.freeze_early = kv.get_bool("freeze_early", c.freeze_early);
  c.grl_coeff = kv.get_double("grl_coeff", c.grl_coeff);
  c.disc_grl_coeff = kv.get_double("disc_grl_coeff", c.disc_grl_coeff);
  c.validate();
  return c;
}

template <typename T>
Conv<T>::Conv(int in, int out, int kernel, Rng& rng, bool zero) : pad(kernel / 2) {
  const std::size_t n = static_cast<std::size_t>(out) * in * kernel * kernel;
  std::vector<T> w(n, T(0));
  if (!zero) {
    const double sd = std::sqrt(2.0 / double(in * kernel * kernel));
    for (auto& v : w) v = static_cast<T>(rng.normal(0.0, sd));
  }
  weight = Tensor<T>({std::size_t(out), std::size_t(in), std::size_t(kernel), std::size_t(kernel)}, std::move(w), true);
  bias = Tensor<T>::zeros({std::size_t(out)}, true);
}

template <typename T>
BatchNorm<T>::BatchNorm(int channels)
    : gamma(Tensor<T>::full({std::size_t(channels)}, T(1), true)),
      beta(Tensor<T>::zeros({std::size_t(channels)}, true)),
      stats(std::size_t(channels)) {}

template <typename T>
Tensor<T> ConvBlock<T>::operator()(Tape<T>& tape, const Tensor<T>& x) const {
  auto h = ag::relu(tape, a(tape, x));
  h = ag::relu(tape, b(tape, h));
  return ag::pool2d(tape, h, ag::PoolKind::Max, 2, 2);
}

template <typename T>
Tensor<T> Rfrb<T>::operator()(Tape<T>& tape, const Tensor<T>& prev) const {
  auto h = ag::pool2d(tape, prev, ag::PoolKind::Max, 2, 2);
  h = ag::relu(tape, c1(tape, h));
  h = ag::relu(tape, c2(tape, h));
  return c3(tape, h);
}

template <typename T>
Tensor<T> Pen<T>::operator()(Tape<T>& tape, const Tensor<T>& f, T grl_coeff, NormMode mode) {
  auto h = ag::grad_reverse(tape, f, grl_coeff);
  h = ag::relu(tape, n1(tape, c1(tape, h), mode));
  h = ag::relu(tape, n2(tape, c2(tape, h), mode));
  h = ag::relu(tape, n3(tape, c3(tape, h), mode));
  h = ag::tanh(tape, out(tape, h));
  return ag::affine(tape, h, T(0.5), T(0.5));
}

template <typename T>
Tensor<T> Discriminator<T>::operator()(Tape<T>& tape, const Tensor<T>& f, T grl_coeff) const {
  auto h = ag::grad_reverse(tape, f, grl_coeff);
  h = ag::relu(tape, c1(tape, h));
  return c2(tape, h);
}

template <typename T>
Tensor<T> DetectionHead<T>::operator()(Tape<T>& tape, const Tensor<T>& f5) const {
  return out(tape, ag::relu(tape, tower(tape, f5)));
}

template <typename T>
Detector<T>::Detector(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  int in = 3;
  for (int l = 1; l <= 5; ++l) {
    const int w = config_.channels(l);
    auto& blk = blocks[static_cast<std::size_t>(l - 1)];
    blk.a = Conv<T>(in, w, 3, rng);
    blk.b = Conv<T>(w, w, 3, rng);
    if (config_.freeze_early && l <= 2) {
      for (auto* c : {&blk.a, &blk.b}) {
        c->weight.set_requires_grad(false);
        c->bias.set_requires_grad(false);
      }
    }
    in = w;
  }
  for (int l : {4, 5}) {
    if (!config_.has_rfrb(l)) continue;
    const int prev = config_.channels(l - 1), cur = config_.channels(l);
    Rfrb<T> r;
    r.c1 = Conv<T>(prev, prev, 3, rng);
    r.c2 = Conv<T>(prev, cur, 3, rng);
    r.c3 = Conv<T>(cur, cur, 3, rng, /*zero=*/true);
    rfrb.emplace(l, std::move(r));
  }
  for (int l : {4, 5}) {
    if (!config_.has_pen(l)) continue;
    const int p = config_.pen_width;
    Pen<T> pen;
    pen.c1 = Conv<T>(config_.channels(l), p, 1, rng);
    pen.n1 = BatchNorm<T>(p);
    pen.c2 = Conv<T>(p, p, 3, rng);
    pen.n2 = BatchNorm<T>(p);
    pen.c3 = Conv<T>(p, p, 3, rng);
    pen.n3 = BatchNorm<T>(p);
    pen.out = Conv<T>(p, config_.pen_out_channels, 3, rng);
    pens.emplace(l, std::move(pen));
  }
  for (int l : {4, 5}) {
    if (!config_.has_disc(l)) continue;
    Discriminator<T> d;
    d.c1 = Conv<T>(config_.channels(l), config_.disc_width, 3, rng);
    d.c2 = Conv<T>(config_.disc_width, 1, 1, rng);
    discs.emplace(l, std::move(d));
  }
  const HeadLayout layout = head_layout();
  head.tower = Conv<T>(config_.channels(5), config_.head_width, 3, rng);
  head.out = Conv<T>(config_.head_width, layout.channels(), 1, rng);
  // small initial outputs and a low objectness prior
  for (auto& w : head.out.weight.data()) w *= T(0.1);
  for (int a = 0; a < layout.anchors; ++a) head.out.bias.data()[static_cast<std::size_t>(layout.channel(a, 0))] = T(-2);
}

namespace {

// Pixel values in [0, 1] are mapped to [-1, 1] before the first block.
template <typename T>
Tensor<T> center_input(Tape<T>& tape, const Tensor<T>& x) {
  return ag::affine(tape, x, T(2), T(-1));
}

}  // namespace

template <typename T>
Tensor<T> Detector<T>::stem(Tape<T>& tape, const Tensor<T>& x, int level) const {
  if (level < 0 || level > 5) throw UsageError("stem: level must lie in [0, 5]");
  Tensor<T> h = level > 0 ? center_input(tape, x) : x;
  for (int l = 1; l <= level; ++l) h = blocks[static_cast<std::size_t>(l - 1)](tape, h);
  return h;
}

template <typename T>
Features<T> Detector<T>::run(Tape<T>& tape, const Tensor<T>& x, int from_level, bool target) const {
  if (from_level < 0 || from_level > 3) throw UsageError("features: from_level must lie in [0, 3]");
  if (from_level == 0) {
    if (x.rank() != 4 || x.dim(1) != 3) throw ShapeError("features: expected N x 3 x H x W input, got " + ag::shape_string(x.shape()));
    if (x.dim(2) % 32 != 0 || x.dim(3) % 32 != 0) {
      throw ShapeError("features: image height and width must be divisible by 32, got " + ag::shape_string(x.shape()));
    }
  }
  Features<T> out;
  Tensor<T> h = from_level == 0 ? center_input(tape, x) : x;
  for (int l = from_level + 1; l <= 5; ++l) {
    const Tensor<T> prev = h;
    h = blocks[static_cast<std::size_t>(l - 1)](tape, h);
    if (l == 4) out.raw4 = h;
    if (l == 5) out.raw5 = h;
    if (target && l >= 4 && config_.has_rfrb(l)) {
      auto delta = rfrb.at(l)(tape, prev);
      h = ag::add(tape, h, delta);
      (l == 4 ? out.delta4 : out.delta5) = delta;
    }
    if (l == 4) out.f4 = h;
  }
  out.f5 = h;
  return out;
}

template <typename T>
Features<T> Detector<T>::source_features(Tape<T>& tape, const Tensor<T>& x, int from_level) const {
  return run(tape, x, from_level, false);
}

template <typename T>
Features<T> Detector<T>::target_features(Tape<T>& tape, const Tensor<T>& x, int from_level) const {
  return run(tape, x, from_level, true);
}

template <typename T>
Tensor<T> Detector<T>::detect(Tape<T>& tape, const Tensor<T>& f5) const {
  return head(tape, f5);
}

template <typename T>
Tensor<T> Detector<T>::pen(Tape<T>& tape, const Tensor<T>& f, int level, NormMode mode) {
  auto it = pens.find(level);
  if (it == pens.end()) throw UsageError("pen: no prior estimation network attached at level " + std::to_string(level));
  return it->second(tape, f, static_cast<T>(config_.grl_coeff * grl_scale_), mode);
}

template <typename T>
Tensor<T> Detector<T>::discriminate(Tape<T>& tape, const Tensor<T>& f, int level) const {
  auto it = discs.find(level);
  if (it == discs.end()) throw UsageError("discriminator: none attached at level " + std::to_string(level));
  return it->second(tape, f, static_cast<T>(config_.disc_grl_coeff * grl_scale_));
}

template <typename T>
AnchorGrid Detector<T>::anchors(int image_h, int image_w) const {
  AnchorGrid g;
  g.grid_h = image_h / 32;
  g.grid_w = image_w / 32;
  g.stride = 32;
  g.sizes = config_.anchor_sizes;
  return g;
}

template <typename T>
std::vector<NamedTensor<T>> Detector<T>::parameters() const {
  std::vector<NamedTensor<T>> out;
  auto conv = [&](const std::string& name, const Conv<T>& c) {
    out.push_back({name + ".weight", c.weight});
    out.push_back({name + ".bias", c.bias});
  };
  auto bn = [&](const std::string& name, const BatchNorm<T>& n) {
    out.push_back({name + ".gamma", n.gamma});
    out.push_back({name + ".beta", n.beta});
  };
  for (int l = 1; l <= 5; ++l) {
    const std::string p = "extractor.c" + std::to_string(l);
    conv(p + ".a", blocks[static_cast<std::size_t>(l - 1)].a);
    conv(p + ".b", blocks[static_cast<std::size_t>(l - 1)].b);
  }
  for (const auto& [l, r] : rfrb) {
    const std::string p = "rfrb" + std::to_string(l);
    conv(p + ".conv1", r.c1);
    conv(p + ".conv2", r.c2);
    conv(p + ".conv3", r.c3);
  }
  for (const auto& [l, pen] : pens) {
    const std::string p = "pen" + std::to_string(l);
    conv(p + ".conv1", pen.c1);
    bn(p + ".bn1", pen.n1);
    conv(p + ".conv2", pen.c2);
    bn(p + ".bn2", pen.n2);
    conv(p + ".conv3", pen.c3);
    bn(p + ".bn3", pen.n3);
    conv(p + ".out", pen.out);
  }
  for (const auto& [l, d] : discs) {
    const std::string p = "disc" + std::to_string(l);
    conv(p + ".conv1", d.c1);
    conv(p + ".conv2", d.c2);
  }
  conv("head.tower", head.tower);
  conv("head.out", head.out);
  return out;
}

template <typename T>
std::vector<NamedBuffer<T>> Detector<T>::buffers() {
  std::vector<NamedBuffer<T>> out;
  for (auto& [l, pen] : pens) {
    const std::string p = "pen" + std::to_string(l);
    int k = 1;
    for (auto* n : {&pen.n1, &pen.n2, &pen.n3}) {
      const std::string b = p + ".bn" + std::to_string(k++);
      out.push_back({b + ".running_mean", &n->stats.running_mean});
      out.push_back({b + ".running_var", &n->stats.running_var});
    }
  }
  return out;
}

template <typename T>
std::size_t Detector<T>::parameter_count(const std::string& prefix) const {
  std::size_t n = 0;
  for (const auto& p : parameters())
    if (p.name.compare(0, prefix.size(), prefix) == 0) n += p.tensor.numel();
  return n;
}

template <typename T>
Tensor<T> images_to_tensor(const std::vector<const ImageF*>& images) {
  if (images.empty()) throw ShapeError("images_to_tensor: empty batch");
  const int h = images[0]->height, w = images[0]->width;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<T> data(images.size() * 3 * plane);
  for (std::size_t n = 0; n < images.size(); ++n) {
    const ImageF& img = *images[n];
    if (img.height != h || img.width != w) throw ShapeError("images_to_tensor: images differ in size");
    for (std::size_t i = 0; i < plane; ++i)
      for (int c = 0; c < 3; ++c) data[(n * 3 + c) * plane + i] = static_cast<T>(img.data[i * 3 + c]);
  }
  return Tensor<T>({images.size(), 3, std::size_t(h), std::size_t(w)}, std::move(data));
}

#define WXA_INSTANTIATE_MODELS(T)                                              \
  template struct Conv<T>;                                                     \
  template struct BatchNorm<T>;                                                \
  template struct ConvBlock<T>;                                                \
  template struct Rfrb<T>;                                                     \
  template struct Pen<T>;                                                      \
  template struct Discriminator<T>;                                            \
  template struct DetectionHead<T>;                                            \
  template class Detector<T>;                                                  \
  template Tensor<T> images_to_tensor<T>(const std::vector<const ImageF*>&);

WXA_INSTANTIATE_MODELS(float)
WXA_INSTANTIATE_MODELS(double)

}  // namespace wxa::models
