#include "wxadapt/models/checkpoint.hpp"

#include <cstring>
#include <json.hpp>

#include "wxadapt/io/image_io.hpp"

namespace wxa::models {

using nlohmann::ordered_json;

std::vector<std::uint8_t> encode_checkpoint(Detector<float>& model, const CheckpointMeta& meta) {
  ordered_json header;
  header["format"] = "WXA1";
  io::KeyValueConfig mkv;
  model.config().to_kv(mkv);
  ordered_json mj = ordered_json::object();
  for (const auto& [k, v] : mkv.entries()) mj[k] = v;
  header["model"] = mj;
  header["iteration"] = meta.iteration;
  header["rng_state"] = meta.rng_state;
  ordered_json tj = ordered_json::object();
  for (const auto& [k, v] : meta.train_config.entries()) tj[k] = v;
  header["train"] = tj;

  std::vector<float> blob;
  ordered_json table = ordered_json::array();
  for (const auto& p : model.parameters()) {
    table.push_back({{"name", p.name}, {"shape", p.tensor.shape()}, {"offset", blob.size()}});
    blob.insert(blob.end(), p.tensor.data().begin(), p.tensor.data().end());
  }
  for (const auto& b : model.buffers()) {
    table.push_back({{"name", b.name}, {"shape", {b.values->size()}}, {"offset", blob.size()}});
    blob.insert(blob.end(), b.values->begin(), b.values->end());
  }
  header["tensors"] = table;
  header["floats"] = blob.size();

  const std::string text = header.dump();
  const auto len = static_cast<std::uint32_t>(text.size());
  std::vector<std::uint8_t> out(8 + text.size() + blob.size() * sizeof(float));
  std::memcpy(out.data(), "WXA1", 4);
  std::memcpy(out.data() + 4, &len, 4);
  std::memcpy(out.data() + 8, text.data(), text.size());
  if (!blob.empty()) std::memcpy(out.data() + 8 + text.size(), blob.data(), blob.size() * sizeof(float));
  return out;
}

void save_checkpoint(const std::filesystem::path& path, Detector<float>& model, const CheckpointMeta& meta) {
  io::write_bytes(path, encode_checkpoint(model, meta));
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = io::read_bytes(path);
  if (bytes.size() < 8 || std::memcmp(bytes.data(), "WXA1", 4) != 0) throw IoError(path.string() + ": not a WXA1 checkpoint");
  std::uint32_t len = 0;
  std::memcpy(&len, bytes.data() + 4, 4);
  if (8ull + len > bytes.size()) throw IoError(path.string() + ": truncated header");
  ordered_json header;
  try {
    header = ordered_json::parse(bytes.begin() + 8, bytes.begin() + 8 + len);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": malformed header: " + e.what());
  }
  io::KeyValueConfig mkv;
  CheckpointMeta meta;
  try {
    for (const auto& [k, v] : header.at("model").items()) mkv.set(k, v.get<std::string>());
    meta.iteration = header.at("iteration").get<long>();
    meta.rng_state = header.at("rng_state").get<std::string>();
    for (const auto& [k, v] : header.at("train").items()) meta.train_config.set(k, v.get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": malformed header: " + e.what());
  }
  LoadedCheckpoint ck{Detector<float>(ModelConfig::from_kv(mkv), 0), meta};

  const std::size_t floats = header.at("floats").get<std::size_t>();
  if (bytes.size() != 8ull + len + floats * sizeof(float)) throw IoError(path.string() + ": parameter blob size mismatch");
  const std::uint8_t* blob = bytes.data() + 8 + len;
  const auto& table = header.at("tensors");
  std::size_t k = 0, offset = 0;
  auto take = [&](const std::string& name, std::span<float> dst) {
    if (k >= table.size() || table[k].at("name").get<std::string>() != name) {
      throw IoError(path.string() + ": tensor table does not match the architecture at '" + name + "'");
    }
    if (offset + dst.size() > floats) throw IoError(path.string() + ": tensor '" + name + "' overruns the blob");
    std::memcpy(dst.data(), blob + offset * sizeof(float), dst.size() * sizeof(float));
    offset += dst.size();
    ++k;
  };
  for (auto& p : ck.model.parameters()) {
    Tensor<float> t = p.tensor;
    take(p.name, t.data());
  }
  for (auto& b : ck.model.buffers()) take(b.name, *b.values);
  if (k != table.size() || offset != floats) throw IoError(path.string() + ": extra tensors in checkpoint");
  return ck;
}

}  // namespace wxa::models
