#include <doctest.h>

#include <cmath>

#include "wxadapt/core/rng.hpp"
#include "wxadapt/kernels/filters.hpp"
#include "wxadapt/priors/priors.hpp"

using namespace wxa;
using namespace wxa::priors;

namespace {

ImageF random_image(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  ImageF img(h, w);
  for (auto& v : img.data) v = static_cast<float>(rng.uniform());
  return img;
}

Plane brute_dark(const ImageF& img, int patch) {
  const int r = patch / 2;
  Plane out(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      float m = 1e9f;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const int yy = std::clamp(y + dy, 0, img.height - 1), xx = std::clamp(x + dx, 0, img.width - 1);
          for (int c = 0; c < 3; ++c) m = std::min(m, img.at(yy, xx, c));
        }
      out.at(y, x) = m;
    }
  return out;
}

}  // namespace

TEST_CASE("dark channel closed forms") {
  ImageF white(9, 7, 1.0f);
  for (float v : dark_channel(white, 3).data) CHECK(v == 1.0f);

  ImageF zeroed = random_image(8, 8, 3);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) zeroed.at(y, x, (x + y) % 3) = 0.0f;
  for (float v : dark_channel(zeroed, 1).data) CHECK(v == 0.0f);

  ImageF one(5, 5, 0.8f);
  one.at(2, 3, 0) = one.at(2, 3, 1) = one.at(2, 3, 2) = 0.0f;
  const Plane d = dark_channel(one, 3);
  const Plane ref = brute_dark(one, 3);
  CHECK(d.data == ref.data);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x) {
      const bool near = std::abs(y - 2) <= 1 && std::abs(x - 3) <= 1;
      CHECK(d.at(y, x) == (near ? 0.0f : 0.8f));
    }

  CHECK_THROWS_AS(dark_channel(one, 4), UsageError);
}

TEST_CASE("dark channel matches brute force and is monotone") {
  for (std::uint64_t s = 0; s < 5; ++s) {
    ImageF img = random_image(13, 11, 100 + s);
    const Plane d = dark_channel(img, 5);
    CHECK(d.data == brute_dark(img, 5).data);
    Rng rng(s);
    ImageF brighter = img;
    for (int k = 0; k < 20; ++k) {
      auto& v = brighter.data[rng.uniform_int(0, int(brighter.data.size()) - 1)];
      v = std::min(1.0f, v + 0.3f);
    }
    const Plane d2 = dark_channel(brighter, 5);
    for (std::size_t i = 0; i < d.size(); ++i) CHECK(d2.data[i] >= d.data[i]);
  }
}

TEST_CASE("atmospheric light estimate") {
  ImageF gray(20, 20, 0.8f);
  const auto a = estimate_atmospheric_light(gray, dark_channel(gray, 15));
  for (float v : a.rgb) CHECK(v == doctest::Approx(0.8f).epsilon(1e-6));

  ImageF img = random_image(64, 64, 9);
  for (auto& v : img.data) v *= 0.5f;
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = 1.0f;
  const auto w = estimate_atmospheric_light(img, dark_channel(img, 1));
  for (float v : w.rgb) CHECK(v == doctest::Approx(1.0f).epsilon(0.02));

  ImageF black(10, 10, 0.0f);
  const auto floor = estimate_atmospheric_light(black, dark_channel(black, 3));
  for (float v : floor.rgb) CHECK(v == 0.05f);

  CHECK_THROWS_AS(AtmosphericLight(0.0f, 0.5f, 0.5f), UsageError);
}

TEST_CASE("transmission closed forms and anti-monotonicity") {
  ImageF zeroed = random_image(16, 16, 4);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) zeroed.at(y, x, 1) = 0.0f;
  const PriorMap t1 = estimate_transmission(zeroed, AtmosphericLight(0.7f, 0.9f, 0.8f), 0.95, 15);
  CHECK(t1.kind() == PriorKind::Haze);
  CHECK(t1.scale_level() == 0);
  for (float v : t1.values()) CHECK(v == 1.0f);

  const AtmosphericLight a(0.6f, 0.7f, 0.8f);
  ImageF eq(10, 10);
  for (std::size_t i = 0; i < eq.pixels(); ++i)
    for (int c = 0; c < 3; ++c) eq.data[i * 3 + c] = a.rgb[c];
  const PriorMap t95 = estimate_transmission(eq, a, 0.95, 3);
  for (float v : t95.values()) CHECK(v == doctest::Approx(0.05f).epsilon(1e-5));
  // omega below the floor boundary is not clamped
  const PriorMap t50 = estimate_transmission(eq, a, 0.5, 3);
  for (float v : t50.values()) CHECK(v == doctest::Approx(0.5f).epsilon(1e-5));

  ImageF img = random_image(12, 12, 8);
  const AtmosphericLight g = AtmosphericLight::gray(0.9f);
  const Plane d = dark_channel(img, 3);
  const PriorMap t = estimate_transmission(img, g, 0.95, 3);
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = 0; j < d.size(); ++j)
      if (d.data[i] / 0.9f > d.data[j] / 0.9f) CHECK(t.values()[i] <= t.values()[j]);

  CHECK_THROWS_AS(estimate_transmission(img, g, 0.0, 3), UsageError);
}

TEST_CASE("guided refinement") {
  ImageF guide = random_image(24, 24, 5);
  const PriorMap c = PriorMap::constant(24, 24, 0.42f, PriorKind::Haze);
  const PriorMap rc = refine_transmission(c, guide, 4, 1e-3);
  for (float v : rc.values()) CHECK(v == doctest::Approx(0.42f).epsilon(1e-6));

  // eps -> infinity: a = 0, b = mean(t), output = box(box(t))
  Rng rng(2);
  std::vector<float> vals(24 * 24);
  for (auto& v : vals) v = static_cast<float>(rng.uniform(0.1, 1.0));
  const PriorMap t(24, 24, 1, PriorKind::Haze, 0, vals);
  const PriorMap q = refine_transmission(t, guide, 3, 1e12);
  Plane p(24, 24);
  p.data = vals;
  const Plane bb = kernels::reference::box_mean(kernels::reference::box_mean(p, 3), 3);
  for (std::size_t i = 0; i < bb.size(); ++i) CHECK(q.values()[i] == doctest::Approx(bb.data[i]).epsilon(1e-5));

  // step edge in the guide and the map
  ImageF step(32, 32, 0.1f);
  std::vector<float> tv(32 * 32, 0.2f);
  for (int y = 0; y < 32; ++y)
    for (int x = 16; x < 32; ++x) {
      for (int ch = 0; ch < 3; ++ch) step.at(y, x, ch) = 0.9f;
      tv[y * 32 + x] = 0.9f;
    }
  const PriorMap ts(32, 32, 1, PriorKind::Haze, 0, tv);
  const PriorMap guided = refine_transmission(ts, step, 4, 1e-3);
  Plane tp(32, 32);
  tp.data = tv;
  const Plane boxed = kernels::box_mean(tp, 4);
  auto edge_width = [](auto value_at) {
    int n = 0;
    for (int x = 0; x < 32; ++x) {
      const float v = value_at(x);
      if (v > 0.2f + 0.07f && v < 0.9f - 0.07f) ++n;
    }
    return n;
  };
  const int w_guided = edge_width([&](int x) { return guided.at(16, x); });
  const int w_box = edge_width([&](int x) { return boxed.at(16, x); });
  CHECK(w_guided < w_box);
  CHECK(w_box >= 6);
}

TEST_CASE("rain residue") {
  ImageF flat(20, 20, 0.6f);
  const PriorMap rf = extract_rain_residue(flat, 2, 0.02f);
  for (float v : rf.values()) CHECK(v == 0.0f);
  CHECK_THROWS_AS(extract_rain_residue(flat, 0, 0.02f), UsageError);

  ImageF img(20, 20, 0.3f);
  img.at(10, 10, 0) = 0.9f;
  const PriorMap r = extract_rain_residue(img, 1, 0.02f);
  CHECK(r.kind() == PriorKind::Rain);
  CHECK(r.at(10, 10) == doctest::Approx(0.6f * 8.0f / 9.0f).epsilon(1e-5));
  CHECK(r.at(0, 0) == 0.0f);
  // neighbours see a negative high-pass and are clamped to zero
  CHECK(r.at(10, 11) == 0.0f);
}

TEST_CASE("downscale prior") {
  const PriorMap c = PriorMap::constant(37, 21, 0.7f, PriorKind::Generic);
  for (int l = 0; l <= 5; ++l) {
    const PriorMap d = downscale_prior(c, l);
    CHECK(d.height() == int(std::ceil(37.0 / (1 << l))));
    CHECK(d.width() == int(std::ceil(21.0 / (1 << l))));
    CHECK(d.scale_level() == l);
    for (float v : d.values()) CHECK(v == 0.7f);
  }

  std::vector<float> cb(16);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) cb[y * 4 + x] = float((x + y) % 2);
  const PriorMap d1 = downscale_prior(PriorMap(4, 4, 1, PriorKind::Rain, 0, cb), 1);
  CHECK(d1.height() == 2);
  for (float v : d1.values()) CHECK(v == 0.5f);

  Rng rng(77);
  std::vector<float> vals(64 * 64);
  for (auto& v : vals) v = static_cast<float>(rng.uniform());
  const PriorMap big(64, 64, 1, PriorKind::Haze, 0, vals);
  const PriorMap d4 = downscale_prior(big, 4);
  REQUIRE(d4.height() == 4);
  REQUIRE(d4.width() == 4);
  for (int by = 0; by < 4; ++by)
    for (int bx = 0; bx < 4; ++bx) {
      double s = 0;
      for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) s += vals[(by * 16 + y) * 64 + bx * 16 + x];
      CHECK(d4.at(by, bx) == doctest::Approx(s / 256.0).epsilon(1e-6));
    }
  CHECK(d4.mean() == doctest::Approx(big.mean()).epsilon(1e-6));

  CHECK_THROWS_AS(downscale_prior(d4, 2), UsageError);
}

TEST_CASE("prior for sample") {
  DetectionSample s;
  s.image = random_image(16, 16, 1);
  CHECK_THROWS_AS(prior_for_sample(s, PriorKind::Haze, PriorSource::GroundTruth), UsageError);

  s.synthetic = true;
  std::vector<float> tv(256);
  for (std::size_t i = 0; i < tv.size(); ++i) tv[i] = 0.2f + 0.003f * float(i);
  s.gt_prior = PriorMap(16, 16, 1, PriorKind::Haze, 0, tv);
  CHECK(prior_for_sample(s, PriorKind::Haze, PriorSource::GroundTruth) == *s.gt_prior);

  PriorParams params;
  params.patch = 3;
  params.guided_radius = 2;
  CHECK(prior_for_sample(s, PriorKind::Haze, PriorSource::Estimated, params) == estimate_haze_prior(s.image, params));

  DetectionSample clean;
  clean.clean = true;
  clean.image = ImageF(16, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      clean.image.at(y, x, 0) = 0.2f + 0.02f * x;
      clean.image.at(y, x, 1) = 0.5f;
      clean.image.at(y, x, 2) = 0.7f - 0.01f * y;
    }
  CHECK(prior_for_sample(clean, PriorKind::Rain, PriorSource::Estimated).mean() <= 0.05);
  CHECK(prior_for_sample(clean, PriorKind::Haze, PriorSource::Ideal).mean() == 1.0);
  CHECK(prior_for_sample(clean, PriorKind::Rain, PriorSource::Ideal).mean() == 0.0);
}

TEST_CASE("prior map construction clamps and validates") {
  const PriorMap p(1, 3, 1, PriorKind::Generic, 0, {-0.5f, 0.5f, 2.0f});
  CHECK(p.at(0, 0) == 0.0f);
  CHECK(p.at(0, 1) == 0.5f);
  CHECK(p.at(0, 2) == 1.0f);
  CHECK_THROWS(PriorMap(2, 2, 1, PriorKind::Generic, 0, {0.f, 0.f, 0.f}));
  CHECK_THROWS(PriorMap(1, 1, 1, PriorKind::Generic, 0, {std::nanf("")}));
  CHECK(prior_kind_from_string("haze") == PriorKind::Haze);
  CHECK_THROWS_AS(prior_kind_from_string("fog"), UsageError);
}

TEST_CASE("pearson") {
  const std::vector<float> a{1, 2, 3, 4}, b{2, 4, 6, 8}, c{4, 3, 2, 1};
  CHECK(pearson(a, b) == doctest::Approx(1.0));
  CHECK(pearson(a, c) == doctest::Approx(-1.0));
}
