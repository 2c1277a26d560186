#include "factor/synthetic.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "factor/calibration.hpp"
#include "factor/errors.hpp"
#include "factor/parallel.hpp"
#include "json_util.hpp"

namespace factor {

using detail::Json;

namespace {

struct Rgb {
  double r, g, b;
};

// Causal colour of each category at full luminance.
constexpr std::array<Rgb, kMaxSyntheticCategories> kPalette = {{
    {205, 55, 45},   // red
    {55, 175, 65},   // green
    {55, 85, 205},   // blue
    {200, 185, 45},  // yellow
    {185, 55, 175},  // magenta
    {45, 175, 190},  // cyan
}};

constexpr std::array<std::string_view, kMaxSyntheticCategories> kCategoryNames =
    {"red block", "green block", "blue block",
     "yellow block", "magenta block", "cyan block"};

constexpr int kStripeHalfPeriod = 2;
constexpr int kStripePeriod = 2 * kStripeHalfPeriod;
constexpr double kStripeAmplitude = 18.0;

std::uint64_t mix(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double clamp01(double v) noexcept { return std::clamp(v, 0.0, 1.0); }

PixelRect to_pixels(const Image& image, const BoundingBox& box) {
  const int w = image.width();
  const int h = image.height();
  PixelRect r;
  r.x0 = std::clamp(static_cast<int>(std::floor(box.x1 * w)), 0, w - 1);
  r.y0 = std::clamp(static_cast<int>(std::floor(box.y1 * h)), 0, h - 1);
  r.x1 = std::clamp(static_cast<int>(std::ceil(box.x2 * w)), r.x0 + 1, w);
  r.y1 = std::clamp(static_cast<int>(std::ceil(box.y2 * h)), r.y0 + 1, h);
  return r;
}

// Central part of the box, where object statistics dominate.
PixelRect measured_rect(const Image& image, const BoundingBox& box) {
  PixelRect r = to_pixels(image, box);
  const int ix = (r.x1 - r.x0) * 15 / 100;
  const int iy = (r.y1 - r.y0) * 15 / 100;
  if (r.x1 - r.x0 - 2 * ix >= 1) {
    r.x0 += ix;
    r.x1 -= ix;
  }
  if (r.y1 - r.y0 - 2 * iy >= 1) {
    r.y0 += iy;
    r.y1 -= iy;
  }
  return r;
}

double luma(const Image& image, int x, int y) {
  return (image.at(x, y, 0) + image.at(x, y, 1) + image.at(x, y, 2)) / 3.0;
}

bool overlaps(const PixelRect& a, const PixelRect& b, int margin) {
  return a.x0 < b.x1 + margin && b.x0 < a.x1 + margin &&
         a.y0 < b.y1 + margin && b.y0 < a.y1 + margin;
}

void paint_striped(Image& image, const PixelRect& r, Rgb color) {
  for (int y = r.y0; y < r.y1; ++y) {
    for (int x = r.x0; x < r.x1; ++x) {
      const double s = ((x - r.x0) / kStripeHalfPeriod) % 2 == 0
                           ? kStripeAmplitude
                           : -kStripeAmplitude;
      image.at(x, y, 0) = saturate_u8(color.r + s);
      image.at(x, y, 1) = saturate_u8(color.g + s);
      image.at(x, y, 2) = saturate_u8(color.b + s);
    }
  }
}

double prototype_radius_sq(const Matrix& prototypes) {
  double sum = 0.0;
  for (std::size_t k = 0; k < prototypes.rows; ++k) {
    for (double v : prototypes.row(k)) sum += v * v;
  }
  return prototypes.rows ? sum / static_cast<double>(prototypes.rows) : 1.0;
}

void normalize(std::vector<double>& v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  if (n > 0.0) {
    for (double& x : v) x /= n;
  }
}

}  // namespace

std::string_view category_name(std::size_t category) {
  if (category >= kMaxSyntheticCategories) {
    throw ParameterError("synthetic: category index out of range");
  }
  return kCategoryNames[category];
}

std::string_view to_string(ShiftSeverity severity) noexcept {
  switch (severity) {
    case ShiftSeverity::kNone: return "none";
    case ShiftSeverity::kLow: return "low";
    case ShiftSeverity::kMedium: return "medium";
    case ShiftSeverity::kHigh: return "high";
    case ShiftSeverity::kRealistic: return "realistic";
    case ShiftSeverity::kLowLevel: return "low_level";
  }
  return "none";
}

ShiftSeverity severity_from_string(std::string_view text) {
  for (auto s : {ShiftSeverity::kNone, ShiftSeverity::kLow,
                 ShiftSeverity::kMedium, ShiftSeverity::kHigh,
                 ShiftSeverity::kRealistic, ShiftSeverity::kLowLevel}) {
    if (to_string(s) == text) return s;
  }
  throw ParameterError("unknown shift severity '" + std::string(text) + "'");
}

TransformParams severity_field(ShiftSeverity severity) {
  switch (severity) {
    case ShiftSeverity::kNone:
      return {1.0, 1.0, 1, 0.0, 1.0, 0.0, 0};
    case ShiftSeverity::kLow:
      return parameter_setting(ParameterSetting::kExtremelyWeak);
    case ShiftSeverity::kMedium:
      return parameter_setting(ParameterSetting::kBalanced);
    case ShiftSeverity::kHigh:
      return parameter_setting(ParameterSetting::kStrongInterference);
    case ShiftSeverity::kRealistic:
      return parameter_setting(ParameterSetting::kRealWorldShift);
    case ShiftSeverity::kLowLevel:
      return parameter_setting(ParameterSetting::kLowLevelIsolation);
  }
  return {};
}

void SceneConfig::validate() const {
  if (width < 64 || height < 64) {
    throw ParameterError("scene: image must be at least 64x64");
  }
  if (min_objects < 1 || max_objects > 6 || min_objects > max_objects) {
    throw ParameterError("scene: object count range must lie within [1, 6]");
  }
  if (min_distractors < 0 || min_distractors > max_distractors) {
    throw ParameterError("scene: invalid distractor range");
  }
  if (num_categories < 2 || num_categories > kMaxSyntheticCategories) {
    throw ParameterError("scene: num_categories must lie in [2, 6]");
  }
  if (!(attribute_probability >= 0.0 && attribute_probability <= 1.0)) {
    throw ParameterError("scene: attribute_probability must lie in [0, 1]");
  }
  if (!(min_intensity >= 0.0 && min_intensity <= max_intensity &&
        max_intensity <= 1.0)) {
    throw ParameterError("scene: intensity range must lie in [0, 1]");
  }
  if (max_layout_attempts < 1) {
    throw ParameterError("scene: max_layout_attempts must be positive");
  }
  const auto& f = shift_field;
  if (!(f.gamma_prime > 0.0 && f.gamma_prime <= 1.0) ||
      !(f.alpha > 0.0 && f.alpha <= 1.0) || f.kernel_size < 1 ||
      f.kernel_size % 2 == 0 || !(f.sigma_noise >= 0.0) ||
      !(f.theta > 0.0 && f.theta <= 1.0) || !(f.beta >= 0.0 && f.beta < 1.0)) {
    throw ParameterError("scene: shift_field out of range");
  }
}

std::vector<BoundingBox> SyntheticScene::proposals() const {
  std::vector<BoundingBox> out;
  out.reserve(objects.size() + distractors.size());
  for (const auto& o : objects) out.push_back(o.box);
  out.insert(out.end(), distractors.begin(), distractors.end());
  return out;
}

std::array<double, 3> chroma_of(double r, double g, double b) noexcept {
  const double l = (r + g + b) / 3.0;
  return {(r - l) / (l + 16.0), (g - l) / (l + 16.0), (b - l) / (l + 16.0)};
}

Image apply_shift_field(const Image& clean, std::span<const double> intensity,
                        const TransformParams& field,
                        std::string_view image_key) {
  if (intensity.size() != kNumAttributes) {
    throw ParameterError("shift field: expected 6 attribute levels");
  }
  Image out = clean;
  const double z_bright = clamp01(intensity[0]);
  const double z_contrast = clamp01(intensity[1]);
  const double z_blur = clamp01(intensity[2]);
  const double z_noise = clamp01(intensity[3]);
  const double z_texture = clamp01(intensity[4]);
  const double z_weather = clamp01(intensity[5]);

  const double gamma = 1.0 - z_bright * (1.0 - field.gamma_prime);
  if (gamma != 1.0) out = apply_brightness(out, gamma);
  const double alpha = 1.0 - z_contrast * (1.0 - field.alpha);
  if (alpha < 1.0) out = apply_contrast(out, alpha);
  const int half = static_cast<int>(
      std::lround(z_blur * (field.kernel_size - 1) / 2.0));
  const int kernel = 1 + 2 * half;
  if (kernel > 1) out = apply_blur(out, kernel);
  const double sigma = z_noise * field.sigma_noise;
  if (sigma > 0.0) {
    out = apply_noise(out, sigma, field.noise_seed,
                      std::string(image_key) + "#shift");
  }
  const double theta = 1.0 - z_texture * (1.0 - field.theta);
  if (theta < 1.0) out = apply_texture(out, theta);
  const double beta = z_weather * field.beta;
  if (beta > 0.0) out = apply_weather(out, beta);
  return out;
}

SyntheticScene generate_scene(const SceneConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(mix(seed));
  auto uniform = [&](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  auto uniform_int = [&](int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  };

  const int w = config.width;
  const int h = config.height;
  SyntheticScene scene;
  scene.image_id = fmt::format("scene-{}", seed);

  // Low-chroma background with a gentle gradient and dither.
  Image img(w, h);
  const double base = uniform(105.0, 140.0);
  const double gx = uniform(-15.0, 15.0);
  const double gy = uniform(-10.0, 10.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double v = base + gx * (static_cast<double>(x) / w - 0.5) +
                       gy * (static_cast<double>(y) / h - 0.5) +
                       uniform_int(-2, 2);
      for (int c = 0; c < Image::kChannels; ++c) img.at(x, y, c) = saturate_u8(v);
    }
  }

  const int n_objects = uniform_int(config.min_objects, config.max_objects);
  const int n_distractors =
      uniform_int(config.min_distractors, config.max_distractors);
  const int min_side = std::max(12, std::min(w, h) / 8);
  const int max_side = std::max(min_side + 1, std::min(w, h) / 3);

  std::vector<PixelRect> placed;
  auto place = [&]() {
    for (int attempt = 0; attempt < config.max_layout_attempts; ++attempt) {
      const int rw = uniform_int(min_side, max_side);
      const int rh = uniform_int(min_side, max_side);
      const int x0 = uniform_int(1, w - rw - 1);
      const int y0 = uniform_int(1, h - rh - 1);
      const PixelRect r{x0, y0, x0 + rw, y0 + rh};
      const bool clash = std::any_of(placed.begin(), placed.end(),
                                     [&](const PixelRect& o) {
                                       return overlaps(r, o, 3);
                                     });
      if (!clash) {
        placed.push_back(r);
        return r;
      }
    }
    throw GenerationError("generate_scene: could not place object after " +
                          std::to_string(config.max_layout_attempts) +
                          " attempts (seed " + std::to_string(seed) + ")");
  };
  auto to_box = [&](const PixelRect& r) {
    return BoundingBox{static_cast<double>(r.x0) / w,
                       static_cast<double>(r.y0) / h,
                       static_cast<double>(r.x1) / w,
                       static_cast<double>(r.y1) / h};
  };

  scene.truth.image_id = scene.image_id;
  for (std::size_t c = 0; c < config.num_categories; ++c) {
    scene.truth.categories.emplace_back(category_name(c));
  }

  for (int i = 0; i < n_objects; ++i) {
    const auto category = static_cast<std::size_t>(
        uniform_int(0, static_cast<int>(config.num_categories) - 1));
    const PixelRect r = place();
    const Rgb p = kPalette[category];
    const double s = uniform(0.8, 1.05);
    const Rgb color{p.r * s + uniform(-8, 8), p.g * s + uniform(-8, 8),
                    p.b * s + uniform(-8, 8)};
    paint_striped(img, r, color);
    const auto chroma = chroma_of(p.r, p.g, p.b);
    ObjectSpec spec;
    spec.category = category;
    spec.causal_signature.assign(chroma.begin(), chroma.end());
    spec.rect = r;
    spec.box = to_box(r);
    scene.objects.push_back(spec);
    scene.truth.objects.push_back({spec.box, category, false});
  }
  for (int i = 0; i < n_distractors; ++i) {
    const PixelRect r = place();
    const double v = uniform(95.0, 175.0);
    paint_striped(img, r, {v, v, v});
    scene.distractors.push_back(to_box(r));
  }

  scene.attribute_intensity.assign(kNumAttributes, 0.0);
  for (auto& z : scene.attribute_intensity) {
    const bool active = uniform(0.0, 1.0) < config.attribute_probability;
    const double level = uniform(config.min_intensity, config.max_intensity);
    if (active) z = level;
  }

  scene.clean = img;
  scene.image = apply_shift_field(img, scene.attribute_intensity,
                                  config.shift_field, scene.image_id);
  return scene;
}

std::array<double, 3> measure_chroma(const Image& image,
                                     const BoundingBox& box) {
  const PixelRect r = measured_rect(image, box);
  double sr = 0.0, sg = 0.0, sb = 0.0;
  for (int y = r.y0; y < r.y1; ++y) {
    for (int x = r.x0; x < r.x1; ++x) {
      sr += image.at(x, y, 0);
      sg += image.at(x, y, 1);
      sb += image.at(x, y, 2);
    }
  }
  const double n = static_cast<double>((r.x1 - r.x0) * (r.y1 - r.y0));
  return chroma_of(sr / n, sg / n, sb / n);
}

std::array<double, kNumAttributes> measure_attributes(const Image& image,
                                                      const BoundingBox& box) {
  const PixelRect r = measured_rect(image, box);
  const int rw = r.x1 - r.x0;
  const int rh = r.y1 - r.y0;

  double sum = 0.0, sum_sq = 0.0;
  double ch_sum[3] = {0.0, 0.0, 0.0};
  for (int y = r.y0; y < r.y1; ++y) {
    for (int x = r.x0; x < r.x1; ++x) {
      const double l = luma(image, x, y);
      sum += l;
      sum_sq += l * l;
      for (int c = 0; c < 3; ++c) ch_sum[c] += image.at(x, y, c);
    }
  }
  const double n = static_cast<double>(rw * rh);
  const double mean = sum / n;
  const double stddev = std::sqrt(std::max(0.0, sum_sq / n - mean * mean));
  const double min_channel =
      std::min({ch_sum[0], ch_sum[1], ch_sum[2]}) / n;

  // First and second horizontal differences (stripes run along x).
  double d1 = 0.0, d2 = 0.0;
  std::size_t n1 = 0, n2 = 0;
  // Vertical differences: the clean pattern is constant along y.
  double dv = 0.0;
  std::size_t nv = 0;
  // Lag-one-period correlation along x.
  double sa = 0.0, sb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
  std::size_t np = 0;
  for (int y = r.y0; y < r.y1; ++y) {
    for (int x = r.x0; x < r.x1; ++x) {
      const double l = luma(image, x, y);
      if (x + 1 < r.x1) {
        d1 += std::abs(luma(image, x + 1, y) - l);
        ++n1;
      }
      if (x + 1 < r.x1 && x - 1 >= r.x0) {
        d2 += std::abs(luma(image, x + 1, y) - 2.0 * l + luma(image, x - 1, y));
        ++n2;
      }
      if (y + 1 < r.y1) {
        dv += std::abs(luma(image, x, y + 1) - l);
        ++nv;
      }
      if (x + kStripePeriod < r.x1) {
        const double m = luma(image, x + kStripePeriod, y);
        sa += l;
        sb += m;
        saa += l * l;
        sbb += m * m;
        sab += l * m;
        ++np;
      }
    }
  }

  std::array<double, kNumAttributes> h{};
  h[0] = clamp01((110.0 - mean) / 100.0);
  h[1] = clamp01(1.0 - stddev / 16.0);
  const double ratio = n1 && n2 && d1 > 1e-9 ? (d2 / n2) / (d1 / n1) : 1.0;
  h[2] = clamp01(2.0 - ratio);
  h[3] = nv ? clamp01((dv / nv) / 4.0) : 0.0;
  double corr = 0.0;
  if (np > 1) {
    const double k = static_cast<double>(np);
    const double cov = sab / k - (sa / k) * (sb / k);
    const double va = saa / k - (sa / k) * (sa / k);
    const double vb = sbb / k - (sb / k) * (sb / k);
    corr = va > 1e-9 && vb > 1e-9 ? cov / std::sqrt(va * vb) : 0.0;
  }
  h[4] = clamp01(1.0 - corr);
  h[5] = clamp01((min_channel - 45.0) / 110.0);
  return h;
}

void MockDetectorParams::validate() const {
  if (causal_weights.rows == 0 || causal_weights.cols != 3) {
    throw ParameterError("mock detector: causal_weights must be C x 3");
  }
  if (spurious_weights.rows != causal_weights.rows ||
      spurious_weights.cols != kNumAttributes) {
    throw ParameterError("mock detector: spurious_weights must be C x 6");
  }
  if (!(spurious_strength >= 0.0)) {
    throw ParameterError("mock detector: spurious_strength must be >= 0");
  }
  if (!(localization_noise >= 0.0)) {
    throw ParameterError("mock detector: localization_noise must be >= 0");
  }
}

MockDetectorParams default_detector_params(std::size_t num_categories,
                                           double spurious_strength,
                                           double localization_noise,
                                           std::uint64_t seed) {
  if (num_categories < 2 || num_categories > kMaxSyntheticCategories) {
    throw ParameterError("mock detector: num_categories must lie in [2, 6]");
  }
  MockDetectorParams p;
  p.causal_weights = Matrix(num_categories, 3);
  for (std::size_t c = 0; c < num_categories; ++c) {
    const auto chroma = chroma_of(kPalette[c].r, kPalette[c].g, kPalette[c].b);
    std::copy(chroma.begin(), chroma.end(), p.causal_weights.row(c).begin());
  }
  const double off = -1.0 / static_cast<double>(num_categories - 1);
  p.spurious_weights = Matrix(num_categories, kNumAttributes, off);
  for (std::size_t a = 0; a < kNumAttributes; ++a) {
    p.spurious_weights(a % num_categories, a) = 1.0;
  }
  p.spurious_strength = spurious_strength;
  p.localization_noise = localization_noise;
  p.seed = seed;
  return p;
}

TextEmbeddingTable synthetic_embeddings(std::size_t num_categories,
                                        std::size_t dim, std::uint64_t seed) {
  if (num_categories < 2 || num_categories > kMaxSyntheticCategories) {
    throw ParameterError("synthetic embeddings: num_categories in [2, 6]");
  }
  if (dim < num_categories + 1) {
    throw ParameterError("synthetic embeddings: dim too small");
  }
  constexpr double kNorm = 2.0;
  std::mt19937_64 rng(mix(seed ^ 0x5eedULL));
  std::normal_distribution<double> normal(0.0, 1.0);
  auto random_unit = [&] {
    std::vector<double> v(dim);
    for (auto& x : v) x = normal(rng);
    normalize(v);
    return v;
  };

  TextEmbeddingTable t;
  t.dim = dim;
  t.category_embeddings = Matrix(num_categories, dim);
  std::vector<std::vector<double>> cls_unit;
  for (std::size_t c = 0; c < num_categories; ++c) {
    t.category_names.emplace_back(category_name(c));
    cls_unit.push_back(random_unit());
    for (std::size_t d = 0; d < dim; ++d) {
      t.category_embeddings(c, d) = kNorm * cls_unit.back()[d];
    }
  }
  std::vector<double> cls_mean(dim, 0.0);
  for (const auto& u : cls_unit) {
    for (std::size_t d = 0; d < dim; ++d) {
      cls_mean[d] += u[d] / static_cast<double>(num_categories);
    }
  }

  t.attribute_embeddings = Matrix(kNumAttributes, dim);
  for (std::size_t a = 0; a < kNumAttributes; ++a) {
    t.attribute_names.emplace_back(kAttributeNames[a]);
    const auto& target = cls_unit[a % num_categories];
    const auto noise = random_unit();
    std::vector<double> v(dim);
    for (std::size_t d = 0; d < dim; ++d) {
      v[d] = target[d] - cls_mean[d] + 0.5 * noise[d];
    }
    normalize(v);
    for (std::size_t d = 0; d < dim; ++d) {
      t.attribute_embeddings(a, d) = kNorm * v[d];
    }
  }
  t.metadata["encoder"] = "synthetic";
  t.metadata["seed"] = std::to_string(seed);
  return t;
}

DetectionSet mock_detect(const Image& image,
                         std::span<const BoundingBox> proposals,
                         std::string_view image_id, View view,
                         const MockDetectorParams& params,
                         const TextEmbeddingTable& embeddings) {
  params.validate();
  const std::size_t num_categories = params.causal_weights.rows;
  if (embeddings.category_names.size() != num_categories ||
      embeddings.attribute_names.size() != kNumAttributes) {
    throw InputError("mock detector: embedding table does not match the "
                     "detector vocabulary");
  }

  DetectionSet set;
  set.image_id = std::string(image_id);
  set.view = view;
  set.categories = embeddings.category_names;

  const std::uint64_t stream =
      mix(params.seed ^ mix(stable_hash(image_id)) ^
          (view == View::kCounterfactual ? 0xcf0cf0cf0ULL : 0ULL));
  std::mt19937_64 rng(stream);
  std::normal_distribution<double> jitter(0.0, 1.0);

  // Unit attribute directions for the feature projection.
  std::vector<std::vector<double>> attr_dirs;
  for (std::size_t a = 0; a < kNumAttributes; ++a) {
    const auto row = embeddings.attribute_embeddings.row(a);
    attr_dirs.emplace_back(row.begin(), row.end());
    normalize(attr_dirs.back());
  }
  const double radius_sq = prototype_radius_sq(params.causal_weights);

  for (const auto& proposal : proposals) {
    validate(proposal, "proposal");
    BoundingBox box = proposal;
    if (params.localization_noise > 0.0) {
      const double s = params.localization_noise;
      BoundingBox j{std::clamp(box.x1 + s * jitter(rng), 0.0, 1.0),
                    std::clamp(box.y1 + s * jitter(rng), 0.0, 1.0),
                    std::clamp(box.x2 + s * jitter(rng), 0.0, 1.0),
                    std::clamp(box.y2 + s * jitter(rng), 0.0, 1.0)};
      if (j.x2 - j.x1 > 0.01 && j.y2 - j.y1 > 0.01) box = j;
    }

    const auto chroma = measure_chroma(image, box);
    const auto h = measure_attributes(image, box);

    RegionPrediction region;
    region.box = box;
    region.logits.resize(num_categories);
    for (std::size_t c = 0; c < num_categories; ++c) {
      double dist = 0.0;
      for (std::size_t k = 0; k < 3; ++k) {
        const double d = chroma[k] - params.causal_weights(c, k);
        dist += d * d;
      }
      double spurious = 0.0;
      for (std::size_t a = 0; a < kNumAttributes; ++a) {
        spurious += params.spurious_weights(c, a) * h[a];
      }
      region.logits[c] = params.logit_bias +
                         params.causal_scale * (1.0 - dist / radius_sq) +
                         params.spurious_strength * spurious;
    }
    region.feature.assign(embeddings.dim, 0.0);
    for (std::size_t a = 0; a < kNumAttributes; ++a) {
      const double w = params.feature_gain * (h[a] - 0.5);
      for (std::size_t d = 0; d < embeddings.dim; ++d) {
        region.feature[d] += w * attr_dirs[a][d];
      }
    }
    region.label = argmax(region.logits);
    region.score = sigmoid(region.logits[region.label]);
    set.regions.push_back(std::move(region));
  }
  return set;
}

// --- experiment -------------------------------------------------------------

void ExperimentConfig::validate() const {
  if (num_scenes == 0) throw ParameterError("experiment: num_scenes must be > 0");
  if (severities.empty()) {
    throw ParameterError("experiment: at least one severity is required");
  }
  SceneConfig probe = scene;
  probe.shift_field = severity_field(ShiftSeverity::kNone);
  probe.validate();
  if (!(spurious_strength >= 0.0)) {
    throw ParameterError("experiment: spurious_strength must be >= 0");
  }
  if (!(localization_noise >= 0.0)) {
    throw ParameterError("experiment: localization_noise must be >= 0");
  }
  if (embedding_dim < scene.num_categories + 1) {
    throw ParameterError("experiment: embedding_dim too small");
  }
  calibration.validate();
  for (double l : lambda_grid) {
    if (!(l >= 0.0)) throw ParameterError("experiment: lambda grid must be >= 0");
  }
  if (workers == 0) throw ParameterError("experiment: workers must be > 0");
}

double SeverityResult::lambda_spread() const {
  if (lambda_curve.empty()) return 0.0;
  auto [lo, hi] = std::minmax_element(
      lambda_curve.begin(), lambda_curve.end(),
      [](const LambdaPoint& a, const LambdaPoint& b) { return a.map50 < b.map50; });
  return hi->map50 - lo->map50;
}

namespace {

struct SceneOutcome {
  GroundTruthSet truth;
  DetectionSet baseline;
  DetectionSet counterfactual;
  ImageCalibration calibrated;
  std::vector<DetectionSet> sweep;  // one per lambda
  double pixel_change_pct = 0.0;
};

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& config) {
  config.validate();
  const std::size_t num_categories = config.scene.num_categories;
  const TextEmbeddingTable embeddings =
      synthetic_embeddings(num_categories, config.embedding_dim, config.seed);
  const MockDetectorParams detector =
      default_detector_params(num_categories, config.spurious_strength,
                              config.localization_noise, config.seed);
  const Calibrator calibrator(embeddings, config.calibration);

  ExperimentReport report;
  report.config = config;

  for (const ShiftSeverity severity : config.severities) {
    SceneConfig scene_config = config.scene;
    scene_config.shift_field = severity_field(severity);
    if (severity == ShiftSeverity::kNone) scene_config.attribute_probability = 0.0;

    std::vector<SceneOutcome> outcomes(config.num_scenes);
    parallel_for(config.num_scenes, config.workers, [&](std::size_t i) {
      const std::uint64_t seed = config.seed + i;
      const SyntheticScene scene = generate_scene(scene_config, seed);
      const auto proposals = scene.proposals();
      SceneOutcome& out = outcomes[i];
      out.truth = scene.truth;
      out.baseline = mock_detect(scene.image, proposals, scene.image_id,
                                 View::kOriginal, detector, embeddings);
      const Image cf = compose_counterfactual(
          scene.image, config.calibration.transform_params, scene.image_id);
      out.pixel_change_pct = pixel_diff_report(scene.image, cf).relative_change_pct;
      out.counterfactual = mock_detect(cf, proposals, scene.image_id,
                                       View::kCounterfactual, detector,
                                       embeddings);
      out.calibrated = calibrator.run(out.baseline, out.counterfactual);
      for (double lambda : config.lambda_grid) {
        out.sweep.push_back(
            calibrator.run(out.baseline, out.counterfactual, lambda).calibrated);
      }
    });

    SeverityResult result;
    result.severity = severity;
    std::vector<GroundTruthSet> truth;
    std::vector<DetectionSet> baseline;
    std::vector<DetectionSet> calibrated;
    std::size_t object_regions = 0, base_correct = 0, cal_correct = 0;
    std::size_t agree = 0;
    double pixel_change = 0.0;
    for (const auto& o : outcomes) {
      truth.push_back(o.truth);
      baseline.push_back(o.baseline);
      calibrated.push_back(o.calibrated.calibrated);
      result.num_regions += o.baseline.regions.size();
      result.num_pairs += o.calibrated.num_pairs;
      result.num_passthrough += o.calibrated.num_passthrough;
      if (o.calibrated.num_pairs == 0) ++result.images_without_pairs;
      pixel_change += o.pixel_change_pct;
      for (std::size_t r = 0; r < o.baseline.regions.size(); ++r) {
        const std::size_t base_label = o.baseline.regions[r].label;
        const std::size_t cal_label = o.calibrated.calibrated.regions[r].label;
        if (base_label == cal_label) ++agree;
        if (r < o.truth.objects.size()) {
          ++object_regions;
          if (base_label == o.truth.objects[r].category) ++base_correct;
          if (cal_label == o.truth.objects[r].category) ++cal_correct;
        }
      }
    }
    result.baseline = evaluate(baseline, truth);
    result.calibrated = evaluate(calibrated, truth);
    for (std::size_t k = 0; k < config.lambda_grid.size(); ++k) {
      std::vector<DetectionSet> sweep;
      sweep.reserve(outcomes.size());
      for (const auto& o : outcomes) sweep.push_back(o.sweep[k]);
      result.lambda_curve.push_back(
          {config.lambda_grid[k], evaluate(sweep, truth).map50});
    }
    if (object_regions) {
      result.baseline_label_accuracy =
          static_cast<double>(base_correct) / static_cast<double>(object_regions);
      result.calibrated_label_accuracy =
          static_cast<double>(cal_correct) / static_cast<double>(object_regions);
    }
    if (result.num_regions) {
      result.label_agreement =
          static_cast<double>(agree) / static_cast<double>(result.num_regions);
    }
    result.mean_pixel_change_pct =
        pixel_change / static_cast<double>(config.num_scenes);
    report.results.push_back(std::move(result));
  }
  return report;
}

// --- (de)serialization ------------------------------------------------------

namespace {

template <typename T>
void read_number(const Json& obj, std::string_view key, T& dst) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  if constexpr (std::is_floating_point_v<T>) {
    dst = detail::as_real(*it, key);
  } else if constexpr (std::is_unsigned_v<T>) {
    dst = static_cast<T>(detail::as_uint(*it, key));
  } else {
    dst = static_cast<T>(detail::as_int(*it, key));
  }
}

}  // namespace

ExperimentConfig deserialize_experiment_config(std::string_view document) {
  const Json doc = detail::parse_document(document, "experiment config");
  if (!doc.is_object()) {
    throw MalformedDocument("experiment config: expected an object");
  }
  ExperimentConfig c;
  read_number(doc, "num_scenes", c.num_scenes);
  read_number(doc, "seed", c.seed);
  read_number(doc, "spurious_strength", c.spurious_strength);
  read_number(doc, "localization_noise", c.localization_noise);
  read_number(doc, "embedding_dim", c.embedding_dim);
  read_number(doc, "workers", c.workers);
  if (auto it = doc.find("severities"); it != doc.end()) {
    c.severities.clear();
    for (const auto& s : detail::as_strings(*it, "severities")) {
      c.severities.push_back(severity_from_string(s));
    }
  }
  if (auto it = doc.find("lambda_grid"); it != doc.end()) {
    c.lambda_grid = detail::as_reals(*it, "lambda_grid");
  }
  if (auto it = doc.find("scene"); it != doc.end()) {
    const Json& s = *it;
    if (!s.is_object()) throw MalformedDocument("scene: expected an object");
    read_number(s, "width", c.scene.width);
    read_number(s, "height", c.scene.height);
    read_number(s, "min_objects", c.scene.min_objects);
    read_number(s, "max_objects", c.scene.max_objects);
    read_number(s, "min_distractors", c.scene.min_distractors);
    read_number(s, "max_distractors", c.scene.max_distractors);
    read_number(s, "num_categories", c.scene.num_categories);
    read_number(s, "attribute_probability", c.scene.attribute_probability);
    read_number(s, "min_intensity", c.scene.min_intensity);
    read_number(s, "max_intensity", c.scene.max_intensity);
    read_number(s, "max_layout_attempts", c.scene.max_layout_attempts);
  }
  if (auto it = doc.find("calibration"); it != doc.end()) {
    c.calibration = deserialize_config(it->dump());
  }
  c.validate();
  return c;
}

std::string serialize_experiment_config(const ExperimentConfig& c) {
  std::string out = "{";
  auto key = [&](std::string_view k) {
    if (out.size() > 1 && out.back() != '{') out += ',';
    detail::append_key(out, k);
  };
  key("num_scenes");
  detail::append_uint(out, c.num_scenes);
  key("seed");
  detail::append_uint(out, c.seed);
  key("severities");
  std::vector<std::string> names;
  for (auto s : c.severities) names.emplace_back(to_string(s));
  detail::append_strings(out, names);
  key("spurious_strength");
  detail::append_real(out, c.spurious_strength);
  key("localization_noise");
  detail::append_real(out, c.localization_noise);
  key("embedding_dim");
  detail::append_uint(out, c.embedding_dim);
  key("workers");
  detail::append_uint(out, c.workers);
  key("lambda_grid");
  detail::append_reals(out, c.lambda_grid);
  key("scene");
  out += '{';
  auto skey = [&](std::string_view k) {
    if (out.back() != '{') out += ',';
    detail::append_key(out, k);
  };
  skey("width");
  detail::append_uint(out, static_cast<std::uint64_t>(c.scene.width));
  skey("height");
  detail::append_uint(out, static_cast<std::uint64_t>(c.scene.height));
  skey("min_objects");
  detail::append_uint(out, static_cast<std::uint64_t>(c.scene.min_objects));
  skey("max_objects");
  detail::append_uint(out, static_cast<std::uint64_t>(c.scene.max_objects));
  skey("min_distractors");
  detail::append_uint(out, static_cast<std::uint64_t>(c.scene.min_distractors));
  skey("max_distractors");
  detail::append_uint(out, static_cast<std::uint64_t>(c.scene.max_distractors));
  skey("num_categories");
  detail::append_uint(out, c.scene.num_categories);
  skey("attribute_probability");
  detail::append_real(out, c.scene.attribute_probability);
  skey("min_intensity");
  detail::append_real(out, c.scene.min_intensity);
  skey("max_intensity");
  detail::append_real(out, c.scene.max_intensity);
  skey("max_layout_attempts");
  detail::append_uint(out,
                      static_cast<std::uint64_t>(c.scene.max_layout_attempts));
  out += '}';
  key("calibration");
  out += serialize_config(c.calibration);
  out += '}';
  return out;
}

std::string serialize_experiment_report(const ExperimentReport& report) {
  std::string out = "{";
  detail::append_key(out, "config");
  out += serialize_experiment_config(report.config);
  out += ',';
  detail::append_key(out, "results");
  out += '[';
  for (std::size_t i = 0; i < report.results.size(); ++i) {
    const auto& r = report.results[i];
    if (i) out += ',';
    out += '{';
    detail::append_key(out, "severity");
    detail::append_string(out, to_string(r.severity));
    out += ',';
    detail::append_key(out, "baseline_map50");
    detail::append_real(out, r.baseline.map50);
    out += ',';
    detail::append_key(out, "factor_map50");
    detail::append_real(out, r.calibrated.map50);
    out += ',';
    detail::append_key(out, "gain");
    detail::append_real(out, r.calibrated.map50 - r.baseline.map50);
    out += ',';
    detail::append_key(out, "baseline");
    out += serialize_eval_report(r.baseline);
    out += ',';
    detail::append_key(out, "factor");
    out += serialize_eval_report(r.calibrated);
    out += ',';
    detail::append_key(out, "lambda_curve");
    out += '[';
    for (std::size_t k = 0; k < r.lambda_curve.size(); ++k) {
      if (k) out += ',';
      out += '{';
      detail::append_key(out, "lambda");
      detail::append_real(out, r.lambda_curve[k].lambda);
      out += ',';
      detail::append_key(out, "map50");
      detail::append_real(out, r.lambda_curve[k].map50);
      out += '}';
    }
    out += ']';
    out += ',';
    detail::append_key(out, "lambda_spread");
    detail::append_real(out, r.lambda_spread());
    out += ',';
    detail::append_key(out, "regions");
    detail::append_uint(out, r.num_regions);
    out += ',';
    detail::append_key(out, "pairs");
    detail::append_uint(out, r.num_pairs);
    out += ',';
    detail::append_key(out, "passthrough");
    detail::append_uint(out, r.num_passthrough);
    out += ',';
    detail::append_key(out, "images_without_pairs");
    detail::append_uint(out, r.images_without_pairs);
    out += ',';
    detail::append_key(out, "baseline_label_accuracy");
    detail::append_real(out, r.baseline_label_accuracy);
    out += ',';
    detail::append_key(out, "factor_label_accuracy");
    detail::append_real(out, r.calibrated_label_accuracy);
    out += ',';
    detail::append_key(out, "label_agreement");
    detail::append_real(out, r.label_agreement);
    out += ',';
    detail::append_key(out, "mean_counterfactual_rc_pct");
    detail::append_real(out, r.mean_pixel_change_pct);
    out += '}';
  }
  out += "]}";
  return out;
}

}  // namespace factor
