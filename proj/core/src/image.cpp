#include "factor/image.hpp"

#include <cmath>
#include <string>

#include "factor/errors.hpp"

namespace factor {

namespace {

void check_dims(int width, int height) {
  if (width <= 0 || height <= 0) {
    throw InvariantViolation("image: width and height must be positive, got " +
                             std::to_string(width) + "x" +
                             std::to_string(height));
  }
}

}  // namespace

Image::Image(int width, int height, std::uint8_t fill)
    : width_(width), height_(height) {
  check_dims(width, height);
  pixels_.assign(static_cast<std::size_t>(width) *
                     static_cast<std::size_t>(height) * kChannels,
                 fill);
}

Image::Image(int width, int height, std::vector<std::uint8_t> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
  check_dims(width, height);
  const auto expected = static_cast<std::size_t>(width) *
                        static_cast<std::size_t>(height) * kChannels;
  if (pixels_.size() != expected) {
    throw InvariantViolation("image.pixels: length " +
                             std::to_string(pixels_.size()) + " != " +
                             std::to_string(expected));
  }
}

std::uint8_t saturate_u8(double value) noexcept {
  if (!(value > 0.0)) return 0;  // also maps NaN to 0
  const double r = std::round(value);
  if (r >= 255.0) return 255;
  return static_cast<std::uint8_t>(r);
}

}  // namespace factor
