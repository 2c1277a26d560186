#pragma once

// Spurious-correlation testbed: a scene generator whose objects carry a
// causal colour signature, global appearance fields that play the role of
// non-causal attributes, and a mock detector whose logits mix both.
//
// The mock detector scores category c as
//   bias + causal_scale * (1 - |chroma - causal_weights[c]|^2 / r^2)
//        + spurious_strength * sum_a spurious_weights[c][a] * h_a
// where chroma is the region's mean normalised colour and h in [0,1]^6 are
// attribute levels estimated from local image statistics (darkness, loss of
// contrast, blur, noise, texture disruption, haze).

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "factor/evaluation.hpp"
#include "factor/image.hpp"
#include "factor/interchange.hpp"
#include "factor/transforms.hpp"

namespace factor {

inline constexpr std::size_t kNumAttributes = 6;
inline constexpr std::array<std::string_view, kNumAttributes> kAttributeNames = {
    "brightness", "contrast", "blur", "noise", "texture", "weather"};

/// Maximum number of categories the generator palette supports.
inline constexpr std::size_t kMaxSyntheticCategories = 6;

std::string_view category_name(std::size_t category);

enum class ShiftSeverity { kNone, kLow, kMedium, kHigh, kRealistic, kLowLevel };

std::string_view to_string(ShiftSeverity severity) noexcept;
ShiftSeverity severity_from_string(std::string_view text);

/// Shift field at full intensity. kNone is the identity; the others are the
/// parameter settings 1, 2, 3, 5 and 4 respectively.
TransformParams severity_field(ShiftSeverity severity);

struct SceneConfig {
  int width = 128;
  int height = 128;
  int min_objects = 2;
  int max_objects = 5;
  int min_distractors = 0;
  int max_distractors = 2;
  std::size_t num_categories = 4;
  TransformParams shift_field = severity_field(ShiftSeverity::kHigh);
  double attribute_probability = 0.5;  // chance an attribute is active
  double min_intensity = 0.5;          // active attribute level range
  double max_intensity = 1.0;
  int max_layout_attempts = 200;

  void validate() const;
};

struct PixelRect {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;  // exclusive
  int y1 = 0;  // exclusive
};

struct ObjectSpec {
  std::size_t category = 0;
  std::vector<double> causal_signature;  // normalised chroma of the colour
  PixelRect rect;
  BoundingBox box;
};

struct SyntheticScene {
  std::string image_id;
  Image clean;  // render before the attribute field
  Image image;
  GroundTruthSet truth;
  std::vector<double> attribute_intensity;  // z_s, length 6, in [0,1]
  std::vector<ObjectSpec> objects;
  std::vector<BoundingBox> distractors;  // clutter, not in truth

  /// Object boxes followed by distractor boxes.
  std::vector<BoundingBox> proposals() const;
};

/// Deterministic in (config, seed). Throws GenerationError when the layout
/// cannot be placed within max_layout_attempts per object.
SyntheticScene generate_scene(const SceneConfig& config, std::uint64_t seed);

/// Applies the six attribute operators, each interpolated between identity
/// (level 0) and `field` (level 1). Level-0 operators are skipped.
Image apply_shift_field(const Image& clean, std::span<const double> intensity,
                        const TransformParams& field,
                        std::string_view image_key);

/// Normalised chroma (mean - luma) / (luma + 16) of an RGB colour.
std::array<double, 3> chroma_of(double r, double g, double b) noexcept;

/// Estimated attribute levels h in [0,1]^6 for a box of the image.
std::array<double, kNumAttributes> measure_attributes(const Image& image,
                                                      const BoundingBox& box);

/// Mean normalised chroma inside the measured part of a box.
std::array<double, 3> measure_chroma(const Image& image, const BoundingBox& box);

struct MockDetectorParams {
  Matrix causal_weights;    // C x 3 chroma prototypes
  Matrix spurious_weights;  // C x 6
  double spurious_strength = 0.0;
  double localization_noise = 0.0;  // box jitter std, normalised units
  std::uint64_t seed = 0;
  double causal_scale = 3.0;
  double logit_bias = -1.0;
  double feature_gain = 3.0;  // scale of the attribute projection

  void validate() const;
};

/// Prototypes from the palette and the planted spurious associations:
/// attribute a favours category a mod C.
MockDetectorParams default_detector_params(std::size_t num_categories,
                                           double spurious_strength,
                                           double localization_noise,
                                           std::uint64_t seed);

/// Random embeddings with planted affinity: attribute a points towards the
/// category it is spuriously associated with. Metadata records the seed.
TextEmbeddingTable synthetic_embeddings(std::size_t num_categories,
                                        std::size_t dim, std::uint64_t seed);

/// One region per proposal, in proposal order. Deterministic in all inputs;
/// the view selects an independent localisation-noise stream.
DetectionSet mock_detect(const Image& image,
                         std::span<const BoundingBox> proposals,
                         std::string_view image_id, View view,
                         const MockDetectorParams& params,
                         const TextEmbeddingTable& embeddings);

struct ExperimentConfig {
  std::size_t num_scenes = 200;
  std::uint64_t seed = 0;
  std::vector<ShiftSeverity> severities = {ShiftSeverity::kHigh};
  SceneConfig scene;
  double spurious_strength = 5.0;
  double localization_noise = 0.02;
  std::size_t embedding_dim = 16;
  CalibrationConfig calibration;
  std::vector<double> lambda_grid = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6,
                                     0.7, 0.8, 0.9, 1.0, 1.1};
  std::size_t workers = 1;

  void validate() const;
};

struct LambdaPoint {
  double lambda = 0.0;
  double map50 = 0.0;
};

struct SeverityResult {
  ShiftSeverity severity = ShiftSeverity::kNone;
  EvalReport baseline;
  EvalReport calibrated;
  std::vector<LambdaPoint> lambda_curve;
  std::size_t num_regions = 0;
  std::size_t num_pairs = 0;
  std::size_t num_passthrough = 0;
  std::size_t images_without_pairs = 0;
  double baseline_label_accuracy = 0.0;  // over regions covering an object
  double calibrated_label_accuracy = 0.0;
  double label_agreement = 0.0;  // calibrated label == baseline label
  double mean_pixel_change_pct = 0.0;  // counterfactual RC averaged

  double lambda_spread() const;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<SeverityResult> results;
};

/// Pure function of the config: scenes are processed in seed order (possibly
/// on several workers) and merged in that order.
ExperimentReport run_experiment(const ExperimentConfig& config);

ExperimentConfig deserialize_experiment_config(std::string_view document);
std::string serialize_experiment_config(const ExperimentConfig& config);
std::string serialize_experiment_report(const ExperimentReport& report);

}  // namespace factor
