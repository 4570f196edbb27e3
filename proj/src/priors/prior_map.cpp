#include "wxadapt/priors/prior_map.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace wxa {

std::string to_string(PriorKind kind) {
  switch (kind) {
    case PriorKind::Haze: return "haze";
    case PriorKind::Rain: return "rain";
    case PriorKind::Snow: return "snow";
    case PriorKind::Generic: return "generic";
  }
  return "generic";
}

PriorKind prior_kind_from_string(const std::string& name) {
  if (name == "haze") return PriorKind::Haze;
  if (name == "rain") return PriorKind::Rain;
  if (name == "snow") return PriorKind::Snow;
  if (name == "generic") return PriorKind::Generic;
  throw UsageError("unknown weather kind '" + name + "' (expected haze, rain, snow or generic)");
}

PriorMap::PriorMap(int height, int width, int channels, PriorKind kind, int scale_level, std::vector<float> values)
    : height_(height), width_(width), channels_(channels), kind_(kind), scale_level_(scale_level),
      values_(std::move(values)) {
  if (height < 0 || width < 0 || channels < 1 || scale_level < 0) throw ShapeError("PriorMap: invalid dimensions");
  if (values_.size() != static_cast<std::size_t>(height) * width * channels) {
    throw ShapeError("PriorMap: " + std::to_string(values_.size()) + " values for " + std::to_string(height) + "x" +
                     std::to_string(width) + "x" + std::to_string(channels));
  }
  for (auto& v : values_) {
    if (std::isnan(v)) throw NumericError("PriorMap: NaN value");
    v = std::clamp(v, 0.0f, 1.0f);
  }
}

PriorMap PriorMap::constant(int height, int width, float value, PriorKind kind, int scale_level) {
  return PriorMap(height, width, 1, kind, scale_level,
                  std::vector<float>(static_cast<std::size_t>(height) * width, value));
}

double PriorMap::mean() const {
  if (values_.empty()) return 0.0;
  return std::accumulate(values_.begin(), values_.end(), 0.0) / double(values_.size());
}

}  // namespace wxa
