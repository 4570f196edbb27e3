#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "wxadapt/core/image.hpp"
#include "wxadapt/core/rng.hpp"
#include "wxadapt/core/sample.hpp"

namespace wxa::sim {

enum class ShapeClass : int { Circle = 0, Square = 1, Triangle = 2 };
inline constexpr int kNumClasses = 3;
std::string class_name(int label);

using Rgb = std::array<float, 3>;

struct SceneObject {
  ShapeClass shape = ShapeClass::Square;
  float center_x = 0, center_y = 0;
  float size = 0;  // side of the bounding square
  Rgb color{1, 0, 0};
  float depth = 1;
};

/// Limits used both to sample scenes and to validate explicit specs.
struct SceneLimits {
  int height = 128;
  int width = 128;
  int min_objects = 3;
  int max_objects = 8;
  float min_size = 16;
  float max_size = 48;
  float depth_near_min = 0.3f, depth_near_max = 0.8f;
  float depth_far_min = 2.0f, depth_far_max = 4.0f;
  float depth_jitter = 0.1f;  // relative, applied to object depth
};

struct SceneSpec {
  int height = 128;
  int width = 128;
  std::vector<SceneObject> objects;
  Rgb background_top{0.1f, 0.4f, 0.9f};
  Rgb background_bottom{0.2f, 0.8f, 0.1f};
  float depth_far = 3.0f;   // background depth at the top row
  float depth_near = 0.5f;  // background depth at the bottom row
  std::uint64_t seed = 0;

  /// Throws UsageError if an object leaves the canvas, has a size outside
  /// [min_size, max_size], or there are more than max_objects.
  void validate(const SceneLimits& limits) const;
  /// Background depth of row y (linear ramp, far at the top).
  [[nodiscard]] float background_depth(float y) const;
};

struct RenderedScene {
  ImageF image;
  std::vector<LabeledBox> objects;  // tight bounds of the rendered pixels
  DepthMap depth;
};

/// Random non-overlapping scene with saturated colours.
SceneSpec random_scene(const SceneLimits& limits, std::uint64_t seed);

/// Pixel (x, y) is covered when its center (x + 0.5, y + 0.5) lies inside the
/// shape. Objects are drawn in order; boxes bound each object's own pixels.
RenderedScene render_scene(const SceneSpec& spec);

/// Fully saturated colour of the given hue (degrees) and value.
Rgb hue_color(float hue_deg, float value);

}  // namespace wxa::sim
