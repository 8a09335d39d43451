#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ctview/volume.hpp"

namespace ctview::render {

// 8-bit gray (1 channel) or RGBA (4 channels), non-interlaced.
std::vector<std::uint8_t> encode_png(const SliceImage& image);

// Decodes any PNG to 8-bit RGBA.
SliceImage decode_png(std::span<const std::uint8_t> bytes);

void write_png_file(const SliceImage& image, const std::filesystem::path& path);

}  // namespace ctview::render
