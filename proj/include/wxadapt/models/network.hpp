#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "wxadapt/autograd/ops.hpp"
#include "wxadapt/core/image.hpp"
#include "wxadapt/core/rng.hpp"
#include "wxadapt/io/kv_config.hpp"
#include "wxadapt/models/boxes.hpp"

namespace wxa::models {

using ag::NormMode;
using ag::Tape;
using ag::Tensor;

struct ModelConfig {
  std::array<int, 5> widths{8, 16, 32, 32, 32};
  int num_classes = 3;
  std::vector<float> anchor_sizes{16, 32, 64};
  int head_width = 32;
  int pen_width = 16;
  int pen_out_channels = 1;
  int disc_width = 16;
  std::vector<int> pen_levels;   // subset of {4, 5}
  std::vector<int> rfrb_levels;  // subset of {4, 5}
  std::vector<int> disc_levels;  // subset of {4, 5}
  bool freeze_early = true;      // blocks c1-c2 receive no updates
  double grl_coeff = 1.0;        // gradient reversal in front of the prior networks
  double disc_grl_coeff = 0.1;   // gradient reversal in front of the discriminators

  void validate() const;
  [[nodiscard]] bool has_pen(int level) const;
  [[nodiscard]] bool has_rfrb(int level) const;
  [[nodiscard]] bool has_disc(int level) const;
  [[nodiscard]] int channels(int level) const { return widths.at(static_cast<std::size_t>(level - 1)); }

  void to_kv(io::KeyValueConfig& kv) const;
  static ModelConfig from_kv(const io::KeyValueConfig& kv);
  static ModelConfig from_kv(const io::KeyValueConfig& kv, ModelConfig base);
};

template <typename T>
struct Conv {
  Tensor<T> weight;  // out x in x k x k
  Tensor<T> bias;    // out
  int stride = 1;
  int pad = 0;

  Conv() = default;
  /// He-normal weights and zero bias; all zeros when `zero` is set.
  Conv(int in, int out, int kernel, Rng& rng, bool zero = false);
  Tensor<T> operator()(Tape<T>& tape, const Tensor<T>& x) const { return ag::conv2d(tape, x, weight, bias, stride, pad); }
};

template <typename T>
struct BatchNorm {
  Tensor<T> gamma, beta;
  ag::BatchNormStats<T> stats;

  BatchNorm() = default;
  explicit BatchNorm(int channels);
  Tensor<T> operator()(Tape<T>& tape, const Tensor<T>& x, NormMode mode) {
    return ag::batchnorm2d(tape, x, gamma, beta, mode, stats);
  }
};

/// [conv3x3 -> ReLU] x 2 -> maxpool 2x2.
template <typename T>
struct ConvBlock {
  Conv<T> a, b;
  Tensor<T> operator()(Tape<T>& tape, const Tensor<T>& x) const;
};

/// Residual feature recovery: maxpool 2x2 -> conv3x3 (ch_{l-1}) ReLU ->
/// conv3x3 (ch_l) ReLU -> conv3x3 (ch_l), the last one zero-initialized.
template <typename T>
struct Rfrb {
  Conv<T> c1, c2, c3;
  Tensor<T> operator()(Tape<T>& tape, const Tensor<T>& prev) const;
};

/// Prior estimation network: GRL -> conv1x1 BN ReLU -> [conv3x3 BN ReLU] x 2
/// -> conv3x3 Tanh, mapped to [0, 1] by (y + 1) / 2.
template <typename T>
struct Pen {
  Conv<T> c1, c2, c3, out;
  BatchNorm<T> n1, n2, n3;
  Tensor<T> operator()(Tape<T>& tape, const Tensor<T>& f, T grl_coeff, NormMode mode);
};

/// GRL -> conv3x3 ReLU -> conv1x1 to one logit per location.
template <typename T>
struct Discriminator {
  Conv<T> c1, c2;
  Tensor<T> operator()(Tape<T>& tape, const Tensor<T>& f, T grl_coeff) const;
};

/// conv3x3 ReLU -> conv1x1 to anchors * (5 + classes) channels.
template <typename T>
struct DetectionHead {
  Conv<T> tower, out;
  Tensor<T> operator()(Tape<T>& tape, const Tensor<T>& f5) const;
};

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
struct NamedBuffer {
  std::string name;
  std::vector<T>* values;
};

template <typename T>
struct Features {
  Tensor<T> f4, f5;          // F_l, or the corrected F^_l on the target path
  Tensor<T> delta4, delta5;  // residuals; undefined where no RFRB is attached
  Tensor<T> raw4, raw5;      // block outputs before any residual is added
};

template <typename T>
class Detector {
 public:
  Detector(const ModelConfig& config, std::uint64_t seed);

  [[nodiscard]] const ModelConfig& config() const { return config_; }
  /// Multiplies both reversal coefficients (training-time ramp); 1 by default.
  void set_grl_scale(double scale) { grl_scale_ = scale; }
  [[nodiscard]] double grl_scale() const { return grl_scale_; }

  /// Blocks c1..c`level`. With frozen c1-c2, stem(x, 2) is constant per
  /// image and may be cached.
  Tensor<T> stem(Tape<T>& tape, const Tensor<T>& x, int level = 2) const;

  /// Plain block cascade. `x` is the output of block `from_level` (0: image).
  Features<T> source_features(Tape<T>& tape, const Tensor<T>& x, int from_level = 0) const;
  /// F^_l = F_l + dF_l(F^_{l-1}) at each RFRB level; block l+1 consumes F^_l.
  Features<T> target_features(Tape<T>& tape, const Tensor<T>& x, int from_level = 0) const;

  Tensor<T> detect(Tape<T>& tape, const Tensor<T>& f5) const;
  Tensor<T> pen(Tape<T>& tape, const Tensor<T>& f, int level, NormMode mode);
  Tensor<T> discriminate(Tape<T>& tape, const Tensor<T>& f, int level) const;

  [[nodiscard]] AnchorGrid anchors(int image_h, int image_w) const;
  [[nodiscard]] HeadLayout head_layout() const { return {static_cast<int>(config_.anchor_sizes.size()), config_.num_classes}; }

  /// Parameters in declaration order: extractor c1..c5, rfrb4/5, pen4/5,
  /// disc4/5, head. Names look like "extractor.c3.a.weight".
  [[nodiscard]] std::vector<NamedTensor<T>> parameters() const;
  /// Batch-norm running statistics, in declaration order.
  [[nodiscard]] std::vector<NamedBuffer<T>> buffers();
  [[nodiscard]] std::size_t parameter_count(const std::string& prefix = "") const;

  std::array<ConvBlock<T>, 5> blocks;
  std::map<int, Rfrb<T>> rfrb;
  std::map<int, Pen<T>> pens;
  std::map<int, Discriminator<T>> discs;
  DetectionHead<T> head;

 private:
  Features<T> run(Tape<T>& tape, const Tensor<T>& x, int from_level, bool target) const;
  ModelConfig config_;
  double grl_scale_ = 1.0;
};

/// Interleaved HWC images -> N x 3 x H x W tensor.
template <typename T>
Tensor<T> images_to_tensor(const std::vector<const ImageF*>& images);

}  // namespace wxa::models
