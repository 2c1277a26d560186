#include "factor/png_io.hpp"

#include <png.h>

#include <cstring>
#include <string>
#include <vector>

#include "factor/errors.hpp"

namespace factor {

namespace {

struct PngImageGuard {
  png_image* image;
  ~PngImageGuard() { png_image_free(image); }
};

}  // namespace

Image read_png(const std::filesystem::path& path) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  PngImageGuard guard{&png};

  if (png_image_begin_read_from_file(&png, path.string().c_str()) == 0) {
    throw IoError("read_png: " + path.string() + ": " + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  if (png.width == 0 || png.height == 0) {
    throw IoError("read_png: " + path.string() + ": empty image");
  }
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(png));
  if (png_image_finish_read(&png, nullptr, pixels.data(), 0, nullptr) == 0) {
    throw IoError("read_png: " + path.string() + ": " + png.message);
  }
  return Image(static_cast<int>(png.width), static_cast<int>(png.height),
               std::move(pixels));
}

void write_png(const std::filesystem::path& path, const Image& image) {
  if (image.empty()) throw IoError("write_png: empty image");
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width());
  png.height = static_cast<png_uint_32>(image.height());
  png.format = PNG_FORMAT_RGB;
  PngImageGuard guard{&png};

  if (png_image_write_to_file(&png, path.string().c_str(), 0,
                              image.pixels().data(), 0, nullptr) == 0) {
    throw IoError("write_png: " + path.string() + ": " + png.message);
  }
}

}  // namespace factor
