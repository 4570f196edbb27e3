#pragma once

#include "wxadapt/core/image.hpp"

namespace wxa::kernels {

// Square (2r+1)^2 window filters over a plane. Windows are truncated at the
// border (equivalently: edge-clamped for the minimum, valid-count normalized
// for the mean).

/// Separable running minimum, rows then columns, OpenMP over lines.
Plane min_filter(const Plane& in, int radius);

/// Separable box mean with per-pixel valid counts, OpenMP over lines.
Plane box_mean(const Plane& in, int radius);

namespace reference {
Plane min_filter(const Plane& in, int radius);
Plane box_mean(const Plane& in, int radius);
}  // namespace reference

}  // namespace wxa::kernels
