#pragma once

// Attribute-level counterfactual operators and pixel discrepancy metrics.
//
// Every operator is a pure function of its inputs and preserves the image
// dimensions. Float results are converted back to 8 bits by rounding half
// away from zero and clamping (see saturate_u8).

#include <cstdint>
#include <string_view>
#include <vector>

#include "factor/image.hpp"

namespace factor {

struct TransformParams {
  double gamma_prime = 0.3;  // brightness; effective exponent is 1/gamma_prime
  double alpha = 0.9;        // contrast scale, (0, 1)
  int kernel_size = 3;       // Gaussian blur size, odd
  double sigma_noise = 2.0;  // additive noise std in 8-bit units
  double theta = 0.95;       // texture resampling density, (0, 1]
  double beta = 0.1;         // haze blend weight, [0, 1)
  std::uint64_t noise_seed = 0;

  /// Throws ParameterError naming the first out-of-domain field.
  void validate() const;

  friend bool operator==(const TransformParams&,
                         const TransformParams&) = default;
};

/// Appendix-style parameter settings, in (gamma', alpha, k, sigma, theta,
/// beta) order. Setting 2 is the default.
enum class ParameterSetting {
  kExtremelyWeak = 1,
  kBalanced = 2,
  kStrongInterference = 3,
  kLowLevelIsolation = 4,
  kRealWorldShift = 5,
};

/// Parameters of a named setting. Setting 4 specifies alpha = 1, which lies
/// outside the operator domain; such tuples are usable as shift fields (see
/// synthetic.hpp) but fail TransformParams::validate().
TransformParams parameter_setting(ParameterSetting setting);

struct PixelDiffReport {
  double delta_mu = 0.0;
  double delta_std = 0.0;
  double delta_max = 0.0;
  double relative_change_pct = 0.0;
};

/// out = round(255 * (in / 255)^(1 / gamma_prime)).
Image apply_brightness(const Image& image, double gamma_prime);

/// out = round(alpha * in), alpha in (0, 1).
Image apply_contrast(const Image& image, double alpha);

/// Separable Gaussian convolution with standard deviation kernel_size / 3,
/// truncated to the kernel and renormalised; reflect-101 borders.
Image apply_blur(const Image& image, int kernel_size);

/// Adds i.i.d. N(0, sigma^2) noise per channel. The generator is seeded
/// from (seed, image_key) so distinct images draw distinct noise.
Image apply_noise(const Image& image, double sigma, std::uint64_t seed,
                  std::string_view image_key = {});

/// Bilinear resize to (floor(theta * W), floor(theta * H)) and back.
Image apply_texture(const Image& image, double theta);

/// out = round((1 - beta) * in + beta * 255).
Image apply_weather(const Image& image, double beta);

/// Brightness, contrast, blur, noise, texture, weather, in that order.
Image compose_counterfactual(const Image& image, const TransformParams& params,
                             std::string_view image_key = {});

/// Bilinear resampling with half-pixel centres and edge clamping.
Image resize_bilinear(const Image& image, int width, int height);

/// Normalised 1-D Gaussian weights of length kernel_size.
std::vector<double> gaussian_kernel_1d(int kernel_size);

/// Mean, population std and max of |original - counterfactual| over all
/// H * W * 3 values, plus the mean expressed as a percentage of 255.
PixelDiffReport pixel_diff_report(const Image& original,
                                  const Image& counterfactual);

/// Stable 64-bit FNV-1a, used to derive per-image seeds.
std::uint64_t stable_hash(std::string_view text) noexcept;

}  // namespace factor
