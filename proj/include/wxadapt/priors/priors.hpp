#pragma once

#include <array>

#include "wxadapt/core/image.hpp"
#include "wxadapt/core/sample.hpp"
#include "wxadapt/priors/prior_map.hpp"

namespace wxa::priors {

/// Ambient light A of the scattering model; every channel is > 0.
struct AtmosphericLight {
  std::array<float, 3> rgb{1.0f, 1.0f, 1.0f};

  AtmosphericLight() = default;
  AtmosphericLight(float r, float g, float b);
  static AtmosphericLight gray(float v) { return {v, v, v}; }
};

struct PriorParams {
  // dark-channel transmission
  double omega = 0.95;
  int patch = 15;
  bool refine = true;
  int guided_radius = 20;
  double guided_eps = 1e-3;
  // high-pass residue
  int residue_blur_radius = 2;
  float residue_threshold = 0.02f;
};

/// Per-pixel minimum over RGB, then over the patch x patch window centered on
/// the pixel (edge-clamped). `patch` must be odd.
Plane dark_channel(const ImageF& image, int patch);

/// Mean colour of the brightest 0.1% of pixels ranked by dark-channel value
/// (at least one pixel). Channels are floored at 0.05.
AtmosphericLight estimate_atmospheric_light(const ImageF& image, const Plane& dark);

/// t = 1 - omega * dark_channel(I / A), clamped to [0.05, 1].
PriorMap estimate_transmission(const ImageF& image, const AtmosphericLight& a, double omega = 0.95, int patch = 15);

/// Guided filter (grayscale guide) smoothing of a transmission map. Output is
/// clamped to [0.05, 1].
PriorMap refine_transmission(const PriorMap& t, const ImageF& guide, int radius = 20, double eps = 1e-3);

/// Positive high-pass residue: max over RGB of (I - boxblur(I)), clamped to
/// [0,1], zeroed below `threshold`. Stand-in for a layer-decomposition prior.
PriorMap extract_rain_residue(const ImageF& image, int blur_radius = 2, float threshold = 0.02f,
                              PriorKind kind = PriorKind::Rain);

/// Full haze estimator: dark channel -> A -> t -> optional guided refinement.
PriorMap estimate_haze_prior(const ImageF& image, const PriorParams& params = {});

/// Estimator matching `kind` (haze: transmission, rain/snow: residue).
PriorMap estimate_prior(const ImageF& image, PriorKind kind, const PriorParams& params = {});

/// Repeated 2x2 averaging (edge-padded for odd dims) until the map sits at
/// `level`, i.e. dims ceil(image dims / 2^level).
PriorMap downscale_prior(const PriorMap& prior, int level);

enum class PriorSource {
  GroundTruth,  // stored synthesis prior; only for synthetic samples
  Estimated,    // stored estimator output, or the estimator run on the image
  Ideal,        // t == 1 / residue == 0 for clean images, else as Estimated
};

PriorMap prior_for_sample(const DetectionSample& sample, PriorKind kind, PriorSource source,
                          const PriorParams& params = {});

/// Pearson correlation of two equally sized value sets.
double pearson(std::span<const float> a, std::span<const float> b);

}  // namespace wxa::priors
