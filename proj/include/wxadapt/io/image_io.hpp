#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wxadapt/core/image.hpp"
#include "wxadapt/priors/prior_map.hpp"

namespace wxa::io {

namespace fs = std::filesystem;

/// 8-bit RGB PNG. Values are quantized with round(v * 255).
void write_png(const fs::path& path, const ImageF& image);
ImageF read_png(const fs::path& path);
/// The values write_png followed by read_png would produce.
ImageF quantize_8bit(const ImageF& image);

/// "PRI1" prior file: magic, u32 height, width, channels, u8 kind, u8
/// scale_level, then height*width*channels f32 values (row-major,
/// channel-last). All integers and floats little-endian.
void write_prior(const fs::path& path, const PriorMap& prior);
PriorMap read_prior(const fs::path& path);
std::vector<std::uint8_t> encode_prior(const PriorMap& prior);
PriorMap decode_prior(const std::vector<std::uint8_t>& bytes);

/// Binary 8-bit PGM heatmap of the first channel, [0,1] -> [0,255].
void write_pgm(const fs::path& path, const PriorMap& prior);
void write_pgm(const fs::path& path, const Plane& plane, float lo = 0.0f, float hi = 1.0f);

/// Greyscale PFM ("Pf", little-endian, rows stored bottom-to-top).
void write_pfm(const fs::path& path, const Plane& plane);
Plane read_pfm(const fs::path& path);

/// FNV-1a 64-bit digest of a file's bytes, as 16 hex digits.
std::string file_digest(const fs::path& path);
std::string bytes_digest(const std::vector<std::uint8_t>& bytes);

std::vector<std::uint8_t> read_bytes(const fs::path& path);
void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes);
void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);

}  // namespace wxa::io
