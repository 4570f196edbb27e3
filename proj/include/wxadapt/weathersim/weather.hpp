#pragma once

#include <cstdint>

#include "wxadapt/core/image.hpp"
#include "wxadapt/priors/priors.hpp"

namespace wxa::sim {

struct Degraded {
  ImageF image;
  PriorMap prior;  // exact ground-truth prior of the degradation
};

/// t(z) = exp(-beta * d(z)), evaluated in double.
PriorMap transmission_from_depth(const DepthMap& depth, double beta);

/// I = J t + A (1 - t), clamped to [0, 1]; returns I and t.
Degraded apply_haze(const ImageF& clean, const DepthMap& depth, double beta, const priors::AtmosphericLight& a);

struct RainMask {
  Plane values;  // streak intensity in [0, 1]
  double noise_level = 0.3;
  double angle = 90;  // degrees from the image x axis, counter-clockwise; 90 is vertical
  int streak_length = 15;
};

struct SnowMask {
  Plane values;
  double noise_level = 0.3;
  int flake_radius = 2;
};

/// Gaussian noise (sd = noise_level) -> keep values above mean + 2 sd at their
/// magnitude -> sum along a line of `streak_length` pixels at `angle` ->
/// clamp to [0, 1].
RainMask gen_rain_mask(int height, int width, double noise_level, double angle, int streak_length, std::uint64_t seed);

/// Same thresholded noise, spread by an isotropic disc of `flake_radius`
/// with weights falling off linearly from the center.
SnowMask gen_snow_mask(int height, int width, double noise_level, int flake_radius, std::uint64_t seed);

enum class BlendMode { Additive, Screen };

/// I = clamp(J + intensity * mask) (additive) or 1 - (1 - J)(1 - intensity * mask)
/// (screen). The prior is intensity * mask, clamped to [0, 1].
Degraded apply_rain(const ImageF& clean, const Plane& mask, double intensity, BlendMode blend = BlendMode::Additive);
Degraded apply_snow(const ImageF& clean, const Plane& mask, double intensity, BlendMode blend = BlendMode::Additive);

}  // namespace wxa::sim
