#include "wxadapt/priors/priors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "wxadapt/kernels/filters.hpp"

namespace wxa::priors {

AtmosphericLight::AtmosphericLight(float r, float g, float b) : rgb{r, g, b} {
  for (float v : rgb)
    if (!(v > 0.0f) || v > 1.0f) throw UsageError("AtmosphericLight: channels must lie in (0, 1]");
}

namespace {

void require_image(const ImageF& image, const char* op) {
  if (image.empty()) throw ShapeError(std::string(op) + ": empty image");
}

Plane min_over_rgb(const ImageF& image) {
  Plane m(image.height, image.width);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      m.at(y, x) = std::min({image.at(y, x, 0), image.at(y, x, 1), image.at(y, x, 2)});
  return m;
}

Plane gray(const ImageF& image) {
  Plane g(image.height, image.width);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      g.at(y, x) = (image.at(y, x, 0) + image.at(y, x, 1) + image.at(y, x, 2)) / 3.0f;
  return g;
}

PriorMap to_prior(const Plane& p, PriorKind kind, float lo = 0.0f) {
  std::vector<float> v(p.data);
  for (auto& x : v) x = std::clamp(x, lo, 1.0f);
  return PriorMap(p.height, p.width, 1, kind, 0, std::move(v));
}

}  // namespace

Plane dark_channel(const ImageF& image, int patch) {
  require_image(image, "dark_channel");
  if (patch < 1 || patch % 2 == 0) throw UsageError("dark_channel: patch size must be odd and >= 1, got " + std::to_string(patch));
  return kernels::min_filter(min_over_rgb(image), patch / 2);
}

AtmosphericLight estimate_atmospheric_light(const ImageF& image, const Plane& dark) {
  require_same_dims(image, dark, "estimate_atmospheric_light");
  const std::size_t n = dark.size();
  const std::size_t k = std::max<std::size_t>(1, n / 1000);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dark.data[a] > dark.data[b]; });
  std::array<double, 3> acc{0, 0, 0};
  for (std::size_t i = 0; i < k; ++i)
    for (int c = 0; c < 3; ++c) acc[c] += image.data[order[i] * 3 + c];
  AtmosphericLight a;
  for (int c = 0; c < 3; ++c) a.rgb[c] = std::clamp(static_cast<float>(acc[c] / double(k)), 0.05f, 1.0f);
  return a;
}

PriorMap estimate_transmission(const ImageF& image, const AtmosphericLight& a, double omega, int patch) {
  require_image(image, "estimate_transmission");
  if (!(omega > 0.0 && omega <= 1.0)) throw UsageError("estimate_transmission: omega must lie in (0, 1]");
  if (patch < 1 || patch % 2 == 0) throw UsageError("estimate_transmission: patch size must be odd");
  ImageF normalized(image.height, image.width);
  for (std::size_t i = 0; i < image.pixels(); ++i)
    for (int c = 0; c < 3; ++c) normalized.data[i * 3 + c] = image.data[i * 3 + c] / a.rgb[c];
  // I/A may exceed 1 for pixels brighter than A; the dark channel uses raw ratios.
  Plane dark = kernels::min_filter(min_over_rgb(normalized), patch / 2);
  for (auto& v : dark.data) v = static_cast<float>(1.0 - omega * v);
  return to_prior(dark, PriorKind::Haze, 0.05f);
}

PriorMap refine_transmission(const PriorMap& t, const ImageF& guide, int radius, double eps) {
  if (t.height() != guide.height || t.width() != guide.width || t.channels() != 1) {
    throw ShapeError("refine_transmission: transmission and guide dimensions differ");
  }
  if (radius < 0 || eps < 0) throw UsageError("refine_transmission: radius and eps must be >= 0");
  const Plane I = gray(guide);
  Plane p(t.height(), t.width());
  std::copy(t.values().begin(), t.values().end(), p.data.begin());

  Plane Ip(I.height, I.width), II(I.height, I.width);
  for (std::size_t i = 0; i < I.size(); ++i) {
    Ip.data[i] = I.data[i] * p.data[i];
    II.data[i] = I.data[i] * I.data[i];
  }
  const Plane mean_I = kernels::box_mean(I, radius);
  const Plane mean_p = kernels::box_mean(p, radius);
  const Plane mean_Ip = kernels::box_mean(Ip, radius);
  const Plane mean_II = kernels::box_mean(II, radius);
  Plane a(I.height, I.width), b(I.height, I.width);
  for (std::size_t i = 0; i < I.size(); ++i) {
    const double cov = double(mean_Ip.data[i]) - double(mean_I.data[i]) * mean_p.data[i];
    const double var = double(mean_II.data[i]) - double(mean_I.data[i]) * mean_I.data[i];
    const double ai = cov / (var + eps);
    a.data[i] = static_cast<float>(ai);
    b.data[i] = static_cast<float>(mean_p.data[i] - ai * mean_I.data[i]);
  }
  const Plane mean_a = kernels::box_mean(a, radius);
  const Plane mean_b = kernels::box_mean(b, radius);
  Plane q(I.height, I.width);
  for (std::size_t i = 0; i < I.size(); ++i) q.data[i] = mean_a.data[i] * I.data[i] + mean_b.data[i];
  return to_prior(q, t.kind(), 0.05f);
}

PriorMap extract_rain_residue(const ImageF& image, int blur_radius, float threshold, PriorKind kind) {
  require_image(image, "extract_rain_residue");
  if (blur_radius < 1) throw UsageError("extract_rain_residue: blur_radius must be >= 1");
  Plane residue(image.height, image.width, -1.0f);
  for (int c = 0; c < 3; ++c) {
    Plane ch(image.height, image.width);
    for (std::size_t i = 0; i < image.pixels(); ++i) ch.data[i] = image.data[i * 3 + c];
    const Plane blur = kernels::box_mean(ch, blur_radius);
    for (std::size_t i = 0; i < ch.size(); ++i) residue.data[i] = std::max(residue.data[i], ch.data[i] - blur.data[i]);
  }
  for (auto& v : residue.data) {
    v = std::clamp(v, 0.0f, 1.0f);
    if (v < threshold) v = 0.0f;
  }
  return to_prior(residue, kind);
}

PriorMap estimate_haze_prior(const ImageF& image, const PriorParams& params) {
  const Plane dark = dark_channel(image, params.patch);
  const AtmosphericLight a = estimate_atmospheric_light(image, dark);
  PriorMap t = estimate_transmission(image, a, params.omega, params.patch);
  if (params.refine) t = refine_transmission(t, image, params.guided_radius, params.guided_eps);
  return t;
}

PriorMap estimate_prior(const ImageF& image, PriorKind kind, const PriorParams& params) {
  switch (kind) {
    case PriorKind::Haze: return estimate_haze_prior(image, params);
    case PriorKind::Rain:
    case PriorKind::Snow:
    case PriorKind::Generic:
      return extract_rain_residue(image, params.residue_blur_radius, params.residue_threshold, kind);
  }
  throw UsageError("estimate_prior: unknown kind");
}

PriorMap downscale_prior(const PriorMap& prior, int level) {
  if (prior.empty()) throw ShapeError("downscale_prior: empty map");
  if (level < prior.scale_level()) {
    throw UsageError("downscale_prior: target level " + std::to_string(level) + " is below the map's level " +
                     std::to_string(prior.scale_level()));
  }
  int h = prior.height(), w = prior.width();
  const int ch = prior.channels();
  std::vector<float> cur(prior.values().begin(), prior.values().end());
  for (int l = prior.scale_level(); l < level; ++l) {
    const int oh = (h + 1) / 2, ow = (w + 1) / 2;
    if (oh == 0 || ow == 0) throw ShapeError("downscale_prior: level " + std::to_string(level) + " gives an empty map");
    std::vector<float> next(static_cast<std::size_t>(oh) * ow * ch);
    auto at = [&](int y, int x, int c) {
      y = std::min(y, h - 1);
      x = std::min(x, w - 1);
      return cur[(static_cast<std::size_t>(y) * w + x) * ch + c];
    };
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x)
        for (int c = 0; c < ch; ++c) {
          const float s = (at(2 * y, 2 * x, c) + at(2 * y, 2 * x + 1, c)) + (at(2 * y + 1, 2 * x, c) + at(2 * y + 1, 2 * x + 1, c));
          next[(static_cast<std::size_t>(y) * ow + x) * ch + c] = s * 0.25f;
        }
    cur = std::move(next);
    h = oh;
    w = ow;
  }
  return PriorMap(h, w, ch, prior.kind(), level, std::move(cur));
}

PriorMap prior_for_sample(const DetectionSample& sample, PriorKind kind, PriorSource source,
                          const PriorParams& params) {
  switch (source) {
    case PriorSource::GroundTruth:
      if (!sample.synthetic || !sample.gt_prior) {
        throw UsageError("prior_for_sample: ground truth requested for a sample without synthesis ground truth");
      }
      return *sample.gt_prior;
    case PriorSource::Ideal:
      if (sample.clean) {
        const float v = kind == PriorKind::Haze ? 1.0f : 0.0f;
        return PriorMap::constant(sample.image.height, sample.image.width, v, kind);
      }
      [[fallthrough]];
    case PriorSource::Estimated:
      if (sample.estimated_prior && sample.estimated_prior->kind() == kind) return *sample.estimated_prior;
      return estimate_prior(sample.image, kind, params);
  }
  throw UsageError("prior_for_sample: unknown source");
}

double pearson(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size() || a.empty()) throw ShapeError("pearson: inputs must be equally sized and non-empty");
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= double(a.size());
  mb /= double(b.size());
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace wxa::priors
