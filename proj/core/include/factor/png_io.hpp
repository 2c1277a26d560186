#pragma once

#include <filesystem>

#include "factor/image.hpp"

namespace factor {

/// Reads an 8-bit PNG. Gray, palette and alpha variants are converted to RGB
/// (alpha is dropped). Throws IoError on failure.
Image read_png(const std::filesystem::path& path);

/// Writes an 8-bit RGB PNG with fixed compression settings, so identical
/// images produce identical files.
void write_png(const std::filesystem::path& path, const Image& image);

}  // namespace factor
