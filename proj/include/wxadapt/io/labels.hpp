#pragma once

#include <filesystem>
#include <vector>

#include "wxadapt/core/sample.hpp"

namespace wxa::io {

/// JSON lines, one object per line: {"class": int, "bbox": [x_min, y_min, x_max, y_max]}.
void write_labels(const std::filesystem::path& path, const std::vector<LabeledBox>& objects);
std::vector<LabeledBox> read_labels(const std::filesystem::path& path);

}  // namespace wxa::io
