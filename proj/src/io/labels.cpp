#include "wxadapt/io/labels.hpp"

#include <json.hpp>
#include <sstream>

#include "wxadapt/io/image_io.hpp"

namespace wxa::io {

void write_labels(const std::filesystem::path& path, const std::vector<LabeledBox>& objects) {
  std::ostringstream os;
  for (const auto& o : objects) {
    nlohmann::ordered_json j;
    j["class"] = o.label;
    j["bbox"] = {o.box.x_min, o.box.y_min, o.box.x_max, o.box.y_max};
    os << j.dump() << '\n';
  }
  write_text(path, os.str());
}

std::vector<LabeledBox> read_labels(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::vector<LabeledBox> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto& b = j.at("bbox");
      if (b.size() != 4) throw IoError("bbox needs 4 values");
      out.push_back({{b[0].get<float>(), b[1].get<float>(), b[2].get<float>(), b[3].get<float>()},
                     j.at("class").get<int>()});
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": malformed label line (" + e.what() + ")");
    }
  }
  return out;
}

}  // namespace wxa::io
