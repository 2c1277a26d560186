#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace factor {

/// Interleaved 8-bit RGB raster, row-major, three channels per pixel.
class Image {
 public:
  static constexpr int kChannels = 3;

  Image() = default;
  Image(int width, int height, std::uint8_t fill = 0);
  /// Takes ownership of `pixels`; throws InvariantViolation when the length
  /// is not width * height * 3 or a dimension is not positive.
  Image(int width, int height, std::vector<std::uint8_t> pixels);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool empty() const noexcept { return pixels_.empty(); }
  std::size_t size() const noexcept { return pixels_.size(); }

  std::span<const std::uint8_t> pixels() const noexcept { return pixels_; }
  std::span<std::uint8_t> pixels() noexcept { return pixels_; }

  std::uint8_t at(int x, int y, int c) const noexcept {
    return pixels_[index(x, y, c)];
  }
  std::uint8_t& at(int x, int y, int c) noexcept {
    return pixels_[index(x, y, c)];
  }

  bool same_shape(const Image& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_;
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t index(int x, int y, int c) const noexcept {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(x)) *
               kChannels +
           static_cast<std::size_t>(c);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

/// Round half away from zero, then clamp to [0, 255].
std::uint8_t saturate_u8(double value) noexcept;

}  // namespace factor
