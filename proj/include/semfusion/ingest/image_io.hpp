#pragma once

#include <filesystem>

#include "semfusion/core/image.hpp"

namespace semfusion::ingest {

// PNG read/write. All throw DataError with the path on failure.

void write_png16(const std::filesystem::path& path, const Image<uint16_t>& img);
Image<uint16_t> read_png16(const std::filesystem::path& path);

void write_png8(const std::filesystem::path& path, const MaskImage& img);
MaskImage read_png8(const std::filesystem::path& path);

void write_png_rgb(const std::filesystem::path& path, const ColorImage& img);
ColorImage read_png_rgb(const std::filesystem::path& path);

}  // namespace semfusion::ingest
