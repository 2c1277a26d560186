#include "factor/transforms.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <string>

#include "factor/errors.hpp"

namespace factor {

namespace {

template <typename F>
Image map_channels(const Image& image, F&& f) {
  Image out = image;
  for (auto& v : out.pixels()) v = f(v);
  return out;
}

// Per-value lookup table for point operators.
template <typename F>
Image apply_lut(const Image& image, F&& f) {
  std::array<std::uint8_t, 256> lut{};
  for (int v = 0; v < 256; ++v) lut[v] = saturate_u8(f(static_cast<double>(v)));
  return map_channels(image, [&](std::uint8_t v) { return lut[v]; });
}

int reflect101(int i, int n) noexcept {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

void TransformParams::validate() const {
  if (!(gamma_prime > 0.0) || !std::isfinite(gamma_prime)) {
    throw ParameterError("transform_params.gamma_prime must be > 0");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ParameterError("transform_params.alpha must lie in (0, 1)");
  }
  if (kernel_size < 1 || kernel_size % 2 == 0) {
    throw ParameterError("transform_params.kernel_size must be odd and >= 1");
  }
  if (!(sigma_noise >= 0.0) || !std::isfinite(sigma_noise)) {
    throw ParameterError("transform_params.sigma_noise must be >= 0");
  }
  if (!(theta > 0.0 && theta <= 1.0)) {
    throw ParameterError("transform_params.theta must lie in (0, 1]");
  }
  if (!(beta >= 0.0 && beta < 1.0)) {
    throw ParameterError("transform_params.beta must lie in [0, 1)");
  }
}

TransformParams parameter_setting(ParameterSetting setting) {
  TransformParams p;
  switch (setting) {
    case ParameterSetting::kExtremelyWeak:
      p = {0.9, 0.98, 1, 0.5, 0.98, 0.03, 0};
      break;
    case ParameterSetting::kBalanced:
      p = {0.3, 0.90, 3, 2.0, 0.95, 0.10, 0};
      break;
    case ParameterSetting::kStrongInterference:
      p = {0.15, 0.75, 5, 5.0, 0.85, 0.25, 0};
      break;
    case ParameterSetting::kLowLevelIsolation:
      p = {1.0, 1.0, 5, 4.0, 0.85, 0.0, 0};
      break;
    case ParameterSetting::kRealWorldShift:
      p = {0.25, 0.85, 3, 1.0, 1.0, 0.20, 0};
      break;
  }
  return p;
}

Image apply_brightness(const Image& image, double gamma_prime) {
  if (!(gamma_prime > 0.0) || !std::isfinite(gamma_prime)) {
    throw ParameterError("brightness: gamma_prime must be > 0");
  }
  const double exponent = 1.0 / gamma_prime;
  return apply_lut(image, [&](double v) {
    return 255.0 * std::pow(v / 255.0, exponent);
  });
}

Image apply_contrast(const Image& image, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ParameterError("contrast: alpha must lie in (0, 1)");
  }
  return apply_lut(image, [&](double v) { return alpha * v; });
}

std::vector<double> gaussian_kernel_1d(int kernel_size) {
  if (kernel_size < 1 || kernel_size % 2 == 0) {
    throw ParameterError("blur: kernel_size must be odd and >= 1");
  }
  const int radius = kernel_size / 2;
  const double sigma = static_cast<double>(kernel_size) / 3.0;
  std::vector<double> weights(static_cast<std::size_t>(kernel_size));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double w = std::exp(-(i * i) / (2.0 * sigma * sigma));
    weights[static_cast<std::size_t>(i + radius)] = w;
    sum += w;
  }
  for (auto& w : weights) w /= sum;
  return weights;
}

Image apply_blur(const Image& image, int kernel_size) {
  const auto kernel = gaussian_kernel_1d(kernel_size);
  if (kernel_size > std::min(image.width(), image.height())) {
    throw ParameterError("blur: kernel_size " + std::to_string(kernel_size) +
                         " exceeds image size");
  }
  if (kernel_size == 1) return image;

  const int w = image.width();
  const int h = image.height();
  const int radius = kernel_size / 2;
  constexpr int ch = Image::kChannels;

  // Horizontal pass kept in double; rounding happens once at the end.
  std::vector<double> tmp(image.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          acc += kernel[static_cast<std::size_t>(k + radius)] *
                 image.at(reflect101(x + k, w), y, c);
        }
        tmp[(static_cast<std::size_t>(y) * w + x) * ch + c] = acc;
      }
    }
  }

  Image out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          const int yy = reflect101(y + k, h);
          acc += kernel[static_cast<std::size_t>(k + radius)] *
                 tmp[(static_cast<std::size_t>(yy) * w + x) * ch + c];
        }
        out.at(x, y, c) = saturate_u8(acc);
      }
    }
  }
  return out;
}

std::uint64_t stable_hash(std::string_view text) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Image apply_noise(const Image& image, double sigma, std::uint64_t seed,
                  std::string_view image_key) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    throw ParameterError("noise: sigma must be >= 0");
  }
  if (sigma == 0.0) return image;

  std::mt19937_64 rng(splitmix64(seed ^ splitmix64(stable_hash(image_key))));
  std::normal_distribution<double> dist(0.0, sigma);
  Image out = image;
  for (auto& v : out.pixels()) {
    v = saturate_u8(static_cast<double>(v) + dist(rng));
  }
  return out;
}

Image resize_bilinear(const Image& image, int width, int height) {
  if (width <= 0 || height <= 0) {
    throw ParameterError("resize: target size must be positive");
  }
  if (width == image.width() && height == image.height()) return image;

  const int sw = image.width();
  const int sh = image.height();
  const double scale_x = static_cast<double>(sw) / width;
  const double scale_y = static_cast<double>(sh) / height;

  struct Tap {
    int i0, i1;
    double f;
  };
  auto taps = [](int dst, int src, double scale) {
    std::vector<Tap> t(static_cast<std::size_t>(dst));
    for (int d = 0; d < dst; ++d) {
      double s = (d + 0.5) * scale - 0.5;
      s = std::clamp(s, 0.0, static_cast<double>(src - 1));
      const int i0 = static_cast<int>(std::floor(s));
      const int i1 = std::min(i0 + 1, src - 1);
      t[static_cast<std::size_t>(d)] = {i0, i1, s - i0};
    }
    return t;
  };
  const auto tx = taps(width, sw, scale_x);
  const auto ty = taps(height, sh, scale_y);

  Image out(width, height);
  for (int y = 0; y < height; ++y) {
    const Tap& vy = ty[static_cast<std::size_t>(y)];
    for (int x = 0; x < width; ++x) {
      const Tap& vx = tx[static_cast<std::size_t>(x)];
      for (int c = 0; c < Image::kChannels; ++c) {
        const double top = (1.0 - vx.f) * image.at(vx.i0, vy.i0, c) +
                           vx.f * image.at(vx.i1, vy.i0, c);
        const double bottom = (1.0 - vx.f) * image.at(vx.i0, vy.i1, c) +
                              vx.f * image.at(vx.i1, vy.i1, c);
        out.at(x, y, c) = saturate_u8((1.0 - vy.f) * top + vy.f * bottom);
      }
    }
  }
  return out;
}

Image apply_texture(const Image& image, double theta) {
  if (!(theta > 0.0 && theta <= 1.0)) {
    throw ParameterError("texture: theta must lie in (0, 1]");
  }
  const int dw = static_cast<int>(std::floor(theta * image.width()));
  const int dh = static_cast<int>(std::floor(theta * image.height()));
  if (dw < 1 || dh < 1) {
    throw ParameterError("texture: theta gives a degenerate intermediate size");
  }
  return resize_bilinear(resize_bilinear(image, dw, dh), image.width(),
                         image.height());
}

Image apply_weather(const Image& image, double beta) {
  if (!(beta >= 0.0 && beta < 1.0)) {
    throw ParameterError("weather: beta must lie in [0, 1)");
  }
  if (beta == 0.0) return image;
  return apply_lut(image,
                   [&](double v) { return (1.0 - beta) * v + beta * 255.0; });
}

Image compose_counterfactual(const Image& image, const TransformParams& params,
                             std::string_view image_key) {
  params.validate();
  Image out = apply_brightness(image, params.gamma_prime);
  out = apply_contrast(out, params.alpha);
  out = apply_blur(out, params.kernel_size);
  out = apply_noise(out, params.sigma_noise, params.noise_seed, image_key);
  out = apply_texture(out, params.theta);
  out = apply_weather(out, params.beta);
  return out;
}

PixelDiffReport pixel_diff_report(const Image& original,
                                  const Image& counterfactual) {
  if (!original.same_shape(counterfactual)) {
    throw InputError("pixel_diff_report: image dimensions differ");
  }
  const auto a = original.pixels();
  const auto b = counterfactual.pixels();
  PixelDiffReport r;
  if (a.empty()) return r;

  double sum = 0.0;
  double max_diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::abs(static_cast<double>(a[i]) - b[i]);
    sum += d;
    max_diff = std::max(max_diff, d);
  }
  const double n = static_cast<double>(a.size());
  const double mean = sum / n;
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::abs(static_cast<double>(a[i]) - b[i]) - mean;
    sq += d * d;
  }
  r.delta_mu = mean;
  r.delta_std = std::sqrt(sq / n);
  r.delta_max = max_diff;
  r.relative_change_pct = mean / 255.0 * 100.0;
  return r;
}

}  // namespace factor
