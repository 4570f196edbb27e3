#include "wxadapt/weathersim/weather.hpp"

#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

#include "wxadapt/core/rng.hpp"

namespace wxa::sim {

PriorMap transmission_from_depth(const DepthMap& depth, double beta) {
  if (!(beta >= 0.0)) throw UsageError("haze: beta must be >= 0");
  std::vector<float> t(depth.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double d = depth.data[i];
    if (!(d >= 0.0)) throw UsageError("haze: depth must be finite and >= 0");
    t[i] = static_cast<float>(std::exp(-beta * d));
  }
  return PriorMap(depth.height, depth.width, 1, PriorKind::Haze, 0, std::move(t));
}

Degraded apply_haze(const ImageF& clean, const DepthMap& depth, double beta, const priors::AtmosphericLight& a) {
  require_same_dims(clean, depth, "apply_haze");
  PriorMap t = transmission_from_depth(depth, beta);
  ImageF out(clean.height, clean.width);
  const auto tv = t.values();
  for (std::size_t i = 0; i < clean.pixels(); ++i) {
    const double ti = tv[i];
    for (int c = 0; c < 3; ++c) {
      const double j = clean.data[i * 3 + c];
      out.data[i * 3 + c] = static_cast<float>(j * ti + double(a.rgb[c]) * (1.0 - ti));
    }
  }
  out.clamp01();
  return {std::move(out), std::move(t)};
}

namespace {

Plane thresholded_noise(int height, int width, double noise_level, std::uint64_t seed) {
  if (height <= 0 || width <= 0) throw UsageError("mask: dimensions must be positive");
  if (!(noise_level > 0.0 && noise_level <= 1.0)) throw UsageError("mask: noise_level must lie in (0, 1]");
  Rng rng(seed);
  Plane dots(height, width);
  for (auto& v : dots.data) {
    const double n = rng.normal(0.0, noise_level);
    v = n > 2.0 * noise_level ? static_cast<float>(n) : 0.0f;
  }
  return dots;
}

struct Tap {
  int dy, dx;
  float w;
};

Plane spread(const Plane& dots, const std::vector<Tap>& taps) {
  Plane out(dots.height, dots.width);
  for (int y = 0; y < dots.height; ++y)
    for (int x = 0; x < dots.width; ++x) {
      const float v = dots.at(y, x);
      if (v == 0.0f) continue;
      for (const auto& t : taps) {
        const int yy = y + t.dy, xx = x + t.dx;
        if (yy < 0 || yy >= dots.height || xx < 0 || xx >= dots.width) continue;
        out.at(yy, xx) += v * t.w;
      }
    }
  for (auto& v : out.data) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

Degraded apply_residue(const ImageF& clean, const Plane& mask, double intensity, BlendMode blend, PriorKind kind) {
  require_same_dims(clean, mask, kind == PriorKind::Snow ? "apply_snow" : "apply_rain");
  if (!(intensity > 0.0 && intensity <= 1.0)) throw UsageError("residue: intensity must lie in (0, 1]");
  std::vector<float> r(mask.size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = static_cast<float>(intensity * double(mask.data[i]));
  ImageF out(clean.height, clean.width);
  for (std::size_t i = 0; i < clean.pixels(); ++i)
    for (int c = 0; c < 3; ++c) {
      const float j = clean.data[i * 3 + c];
      out.data[i * 3 + c] = blend == BlendMode::Additive ? j + r[i] : 1.0f - (1.0f - j) * (1.0f - std::min(r[i], 1.0f));
    }
  out.clamp01();
  return {std::move(out), PriorMap(mask.height, mask.width, 1, kind, 0, std::move(r))};
}

}  // namespace

RainMask gen_rain_mask(int height, int width, double noise_level, double angle, int streak_length, std::uint64_t seed) {
  if (!(angle >= 70.0 && angle <= 110.0)) throw UsageError("rain: angle must lie in [70, 110] degrees");
  if (streak_length < 1) throw UsageError("rain: streak_length must be >= 1");
  const Plane dots = thresholded_noise(height, width, noise_level, seed);
  const double rad = angle * std::numbers::pi / 180.0;
  const double ux = std::cos(rad), uy = -std::sin(rad);
  std::vector<Tap> taps;
  for (int k = 0; k < streak_length; ++k) {
    const double s = k - (streak_length - 1) / 2.0;
    const Tap t{static_cast<int>(std::lround(s * uy)), static_cast<int>(std::lround(s * ux)), 1.0f};
    bool dup = false;
    for (const auto& o : taps) dup = dup || (o.dy == t.dy && o.dx == t.dx);
    if (!dup) taps.push_back(t);
  }
  return {spread(dots, taps), noise_level, angle, streak_length};
}

SnowMask gen_snow_mask(int height, int width, double noise_level, int flake_radius, std::uint64_t seed) {
  if (flake_radius < 0) throw UsageError("snow: flake_radius must be >= 0");
  const Plane dots = thresholded_noise(height, width, noise_level, seed);
  std::vector<Tap> taps;
  const double r = flake_radius + 0.5;
  for (int dy = -flake_radius; dy <= flake_radius; ++dy)
    for (int dx = -flake_radius; dx <= flake_radius; ++dx) {
      const double d = std::sqrt(double(dy * dy + dx * dx));
      if (d < r) taps.push_back({dy, dx, static_cast<float>(1.0 - d / r)});
    }
  return {spread(dots, taps), noise_level, flake_radius};
}

Degraded apply_rain(const ImageF& clean, const Plane& mask, double intensity, BlendMode blend) {
  return apply_residue(clean, mask, intensity, blend, PriorKind::Rain);
}

Degraded apply_snow(const ImageF& clean, const Plane& mask, double intensity, BlendMode blend) {
  return apply_residue(clean, mask, intensity, blend, PriorKind::Snow);
}

}  // namespace wxa::sim
