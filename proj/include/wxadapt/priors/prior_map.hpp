#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "wxadapt/core/error.hpp"

namespace wxa {

enum class PriorKind : std::uint8_t { Haze = 0, Rain = 1, Snow = 2, Generic = 3 };

std::string to_string(PriorKind kind);
PriorKind prior_kind_from_string(const std::string& name);

/// Spatial weather prior: transmission (haze) or residue (rain/snow).
/// Values are clamped into [0, 1] on construction. scale_level l means the
/// map has been averaged down to ceil(image dims / 2^l).
class PriorMap {
 public:
  PriorMap() = default;
  PriorMap(int height, int width, int channels, PriorKind kind, int scale_level, std::vector<float> values);
  /// Constant single-channel map.
  static PriorMap constant(int height, int width, float value, PriorKind kind, int scale_level = 0);

  [[nodiscard]] int height() const { return height_; }
  [[nodiscard]] int width() const { return width_; }
  [[nodiscard]] int channels() const { return channels_; }
  [[nodiscard]] PriorKind kind() const { return kind_; }
  [[nodiscard]] int scale_level() const { return scale_level_; }
  [[nodiscard]] std::span<const float> values() const& { return values_; }
  std::span<const float> values() const&& = delete;
  [[nodiscard]] bool empty() const { return values_.empty(); }

  [[nodiscard]] float at(int y, int x, int c = 0) const {
    return values_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  [[nodiscard]] double mean() const;

  friend bool operator==(const PriorMap&, const PriorMap&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 1;
  PriorKind kind_ = PriorKind::Generic;
  int scale_level_ = 0;
  std::vector<float> values_;  // row-major, channel-last
};

}  // namespace wxa
