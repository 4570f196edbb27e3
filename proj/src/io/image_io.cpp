#include "wxadapt/io/image_io.hpp"

#include <png.h>

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "wxadapt/core/error.hpp"

namespace wxa::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace {

std::uint8_t to_byte(float v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)); }

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  std::uint8_t buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

template <typename T>
T get(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw IoError("truncated binary data");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
  auto bytes = read_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

void write_png(const fs::path& path, const ImageF& image) {
  std::vector<std::uint8_t> rgb(image.data.size());
  for (std::size_t i = 0; i < rgb.size(); ++i) rgb[i] = to_byte(image.data[i]);
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, rgb.data(), 0, nullptr)) {
    throw IoError("cannot write PNG " + path.string() + ": " + img.message);
  }
}

ImageF quantize_8bit(const ImageF& image) {
  ImageF out = image;
  for (auto& v : out.data) v = to_byte(v) / 255.0f;
  return out;
}

ImageF read_png(const fs::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw IoError("cannot read PNG " + path.string() + ": " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> rgb(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, rgb.data(), 0, nullptr)) {
    png_image_free(&img);
    throw IoError("cannot decode PNG " + path.string() + ": " + img.message);
  }
  ImageF out(static_cast<int>(img.height), static_cast<int>(img.width));
  for (std::size_t i = 0; i < rgb.size(); ++i) out.data[i] = rgb[i] / 255.0f;
  return out;
}

std::vector<std::uint8_t> encode_prior(const PriorMap& prior) {
  std::vector<std::uint8_t> out{'P', 'R', 'I', '1'};
  put<std::uint32_t>(out, static_cast<std::uint32_t>(prior.height()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(prior.width()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(prior.channels()));
  put<std::uint8_t>(out, static_cast<std::uint8_t>(prior.kind()));
  put<std::uint8_t>(out, static_cast<std::uint8_t>(prior.scale_level()));
  for (float v : prior.values()) put<float>(out, v);
  return out;
}

PriorMap decode_prior(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 18 || std::memcmp(bytes.data(), "PRI1", 4) != 0) throw IoError("not a PRI1 prior file");
  std::size_t pos = 4;
  const auto h = get<std::uint32_t>(bytes, pos);
  const auto w = get<std::uint32_t>(bytes, pos);
  const auto c = get<std::uint32_t>(bytes, pos);
  const auto kind = get<std::uint8_t>(bytes, pos);
  const auto level = get<std::uint8_t>(bytes, pos);
  if (kind > 3) throw IoError("PRI1: unknown kind code " + std::to_string(kind));
  const std::size_t n = std::size_t(h) * w * c;
  if (bytes.size() != pos + n * 4) throw IoError("PRI1: payload size does not match header");
  std::vector<float> values(n);
  std::memcpy(values.data(), bytes.data() + pos, n * 4);
  return PriorMap(int(h), int(w), int(c), static_cast<PriorKind>(kind), level, std::move(values));
}

void write_prior(const fs::path& path, const PriorMap& prior) { write_bytes(path, encode_prior(prior)); }
PriorMap read_prior(const fs::path& path) { return decode_prior(read_bytes(path)); }

void write_pgm(const fs::path& path, const Plane& plane, float lo, float hi) {
  std::ostringstream header;
  header << "P5\n" << plane.width << ' ' << plane.height << "\n255\n";
  const std::string h = header.str();
  std::vector<std::uint8_t> out(h.begin(), h.end());
  const float span = hi > lo ? hi - lo : 1.0f;
  for (float v : plane.data) out.push_back(to_byte((v - lo) / span));
  write_bytes(path, out);
}

void write_pgm(const fs::path& path, const PriorMap& prior) {
  Plane p(prior.height(), prior.width());
  for (int y = 0; y < prior.height(); ++y)
    for (int x = 0; x < prior.width(); ++x) p.at(y, x) = prior.at(y, x, 0);
  write_pgm(path, p);
}

void write_pfm(const fs::path& path, const Plane& plane) {
  std::ostringstream header;
  header << "Pf\n" << plane.width << ' ' << plane.height << "\n-1.0\n";
  const std::string h = header.str();
  std::vector<std::uint8_t> out(h.begin(), h.end());
  for (int y = plane.height - 1; y >= 0; --y)
    for (int x = 0; x < plane.width; ++x) put<float>(out, plane.at(y, x));
  write_bytes(path, out);
}

Plane read_pfm(const fs::path& path) {
  const auto bytes = read_bytes(path);
  std::string text(bytes.begin(), bytes.begin() + std::min<std::size_t>(bytes.size(), 64));
  std::istringstream is(text);
  std::string magic;
  int w = 0, h = 0;
  double scale = 0;
  is >> magic >> w >> h >> scale;
  if (!is || magic != "Pf" || w <= 0 || h <= 0) throw IoError("not a greyscale PFM: " + path.string());
  if (scale >= 0) throw IoError("PFM: only little-endian files are supported");
  // header is three lines; payload starts after the third newline
  std::size_t pos = 0;
  for (int lines = 0; lines < 3; ++pos)
    if (pos >= bytes.size()) throw IoError("PFM: truncated header");
    else if (bytes[pos] == '\n') ++lines;
  if (bytes.size() != pos + std::size_t(w) * h * 4) throw IoError("PFM: payload size mismatch in " + path.string());
  Plane p(h, w);
  for (int y = h - 1; y >= 0; --y)
    for (int x = 0; x < w; ++x) p.at(y, x) = get<float>(bytes, pos);
  return p;
}

std::string bytes_digest(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t hsh = 0xcbf29ce484222325ULL;
  for (auto b : bytes) {
    hsh ^= b;
    hsh *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hsh));
  return buf;
}

std::string file_digest(const fs::path& path) { return bytes_digest(read_bytes(path)); }

}  // namespace wxa::io
