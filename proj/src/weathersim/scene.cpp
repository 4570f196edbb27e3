#include "wxadapt/weathersim/scene.hpp"

#include <cmath>

#include "wxadapt/core/error.hpp"

namespace wxa::sim {

std::string class_name(int label) {
  switch (label) {
    case 0: return "circle";
    case 1: return "square";
    case 2: return "triangle";
    default: return "class" + std::to_string(label);
  }
}

Rgb hue_color(float hue_deg, float value) {
  const float h = std::fmod(std::fmod(hue_deg, 360.0f) + 360.0f, 360.0f) / 60.0f;
  const int sector = static_cast<int>(h) % 6;
  const float f = h - std::floor(h);
  const float rising = value * f, falling = value * (1.0f - f);
  switch (sector) {
    case 0: return {value, rising, 0};
    case 1: return {falling, value, 0};
    case 2: return {0, value, rising};
    case 3: return {0, falling, value};
    case 4: return {rising, 0, value};
    default: return {value, 0, falling};
  }
}

void SceneSpec::validate(const SceneLimits& limits) const {
  if (height <= 0 || width <= 0) throw UsageError("scene: canvas must be non-empty");
  if (static_cast<int>(objects.size()) > limits.max_objects) {
    throw UsageError("scene: " + std::to_string(objects.size()) + " objects exceed max_objects " +
                     std::to_string(limits.max_objects));
  }
  if (depth_far < 0 || depth_near < 0) throw UsageError("scene: depths must be non-negative");
  for (const auto& o : objects) {
    if (o.size < limits.min_size || o.size > limits.max_size) {
      throw UsageError("scene: object size " + std::to_string(o.size) + " outside [" + std::to_string(limits.min_size) +
                       ", " + std::to_string(limits.max_size) + "]");
    }
    const float h = o.size / 2;
    if (o.center_x - h < 0 || o.center_y - h < 0 || o.center_x + h > float(width) || o.center_y + h > float(height)) {
      throw UsageError("scene: object extends outside the canvas");
    }
    if (!(o.depth >= 0) || !std::isfinite(o.depth)) throw UsageError("scene: object depth must be finite and >= 0");
  }
}

float SceneSpec::background_depth(float y) const {
  const float f = height > 1 ? y / float(height - 1) : 0.0f;
  return depth_far + (depth_near - depth_far) * f;
}

namespace {

bool covers(const SceneObject& o, float px, float py) {
  const float h = o.size / 2;
  const float dx = px - o.center_x, dy = py - o.center_y;
  switch (o.shape) {
    case ShapeClass::Square: return std::abs(dx) < h && std::abs(dy) < h;
    case ShapeClass::Circle: return dx * dx + dy * dy < h * h;
    case ShapeClass::Triangle: {
      // apex at the top center, base along the bottom edge
      if (dy <= -h || dy >= h) return false;
      const float half_width = h * (dy + h) / (2 * h);
      return std::abs(dx) < half_width;
    }
  }
  return false;
}

}  // namespace

RenderedScene render_scene(const SceneSpec& spec) {
  if (spec.height <= 0 || spec.width <= 0) throw UsageError("render_scene: canvas must be non-empty");
  RenderedScene out{ImageF(spec.height, spec.width), {}, DepthMap(spec.height, spec.width)};
  for (int y = 0; y < spec.height; ++y) {
    const float f = spec.height > 1 ? float(y) / float(spec.height - 1) : 0.0f;
    const float d = spec.background_depth(float(y));
    for (int x = 0; x < spec.width; ++x) {
      for (int c = 0; c < 3; ++c)
        out.image.at(y, x, c) = spec.background_top[c] + (spec.background_bottom[c] - spec.background_top[c]) * f;
      out.depth.at(y, x) = d;
    }
  }
  for (const auto& o : spec.objects) {
    const int y0 = std::max(0, int(std::floor(o.center_y - o.size / 2)) - 1);
    const int y1 = std::min(spec.height - 1, int(std::ceil(o.center_y + o.size / 2)) + 1);
    const int x0 = std::max(0, int(std::floor(o.center_x - o.size / 2)) - 1);
    const int x1 = std::min(spec.width - 1, int(std::ceil(o.center_x + o.size / 2)) + 1);
    int bx0 = spec.width, by0 = spec.height, bx1 = -1, by1 = -1;
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        if (!covers(o, float(x) + 0.5f, float(y) + 0.5f)) continue;
        for (int c = 0; c < 3; ++c) out.image.at(y, x, c) = o.color[c];
        out.depth.at(y, x) = o.depth;
        bx0 = std::min(bx0, x);
        by0 = std::min(by0, y);
        bx1 = std::max(bx1, x);
        by1 = std::max(by1, y);
      }
    if (bx1 < 0) continue;
    out.objects.push_back({{float(bx0), float(by0), float(bx1 + 1), float(by1 + 1)}, static_cast<int>(o.shape)});
  }
  out.image.clamp01();
  return out;
}

SceneSpec random_scene(const SceneLimits& limits, std::uint64_t seed) {
  if (limits.min_objects < 0 || limits.max_objects < limits.min_objects) throw UsageError("scene: bad object count range");
  if (limits.min_size <= 0 || limits.max_size < limits.min_size) throw UsageError("scene: bad size range");
  if (limits.max_size > float(std::min(limits.height, limits.width))) throw UsageError("scene: max_size exceeds canvas");
  Rng rng(seed);
  SceneSpec spec;
  spec.height = limits.height;
  spec.width = limits.width;
  spec.seed = seed;
  const float hue_top = float(rng.uniform(0, 360));
  const float hue_bottom = hue_top + float(rng.uniform(-60, 60));
  spec.background_top = hue_color(hue_top, float(rng.uniform(0.55, 0.85)));
  spec.background_bottom = hue_color(hue_bottom, float(rng.uniform(0.55, 0.85)));
  spec.depth_near = float(rng.uniform(limits.depth_near_min, limits.depth_near_max));
  spec.depth_far = float(rng.uniform(limits.depth_far_min, limits.depth_far_max));

  const int count = rng.uniform_int(limits.min_objects, limits.max_objects);
  for (int attempt = 0; attempt < 200 && int(spec.objects.size()) < count; ++attempt) {
    SceneObject o;
    o.shape = static_cast<ShapeClass>(rng.uniform_int(0, kNumClasses - 1));
    o.size = float(std::round(rng.uniform(limits.min_size, limits.max_size)));
    const float h = o.size / 2;
    o.center_x = float(std::round(rng.uniform(h, float(spec.width) - h)));
    o.center_y = float(std::round(rng.uniform(h, float(spec.height) - h)));
    o.center_x = std::clamp(o.center_x, h, float(spec.width) - h);
    o.center_y = std::clamp(o.center_y, h, float(spec.height) - h);
    // object hue kept well away from the local background hue
    const float bg_hue = hue_top + (hue_bottom - hue_top) * (o.center_y / float(spec.height));
    o.color = hue_color(bg_hue + float(rng.uniform(100, 260)), float(rng.uniform(0.7, 1.0)));
    const float jitter = 1.0f + limits.depth_jitter * float(rng.uniform(-1, 1));
    o.depth = std::max(0.0f, spec.background_depth(std::min(o.center_y + h, float(spec.height - 1))) * jitter);
    bool clear = true;
    for (const auto& p : spec.objects) {
      const float gap = 2.0f;
      if (std::abs(p.center_x - o.center_x) < (p.size + o.size) / 2 + gap &&
          std::abs(p.center_y - o.center_y) < (p.size + o.size) / 2 + gap) {
        clear = false;
        break;
      }
    }
    if (clear) spec.objects.push_back(o);
  }
  return spec;
}

}  // namespace wxa::sim
