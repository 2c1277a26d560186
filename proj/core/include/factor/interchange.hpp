#pragma once

// Canonical data model shared by detectors and the calibration engine, and
// its line-structured JSON serialization.
//
// Detection documents look like
//   {"format":"factor.detections","version":"v1","image_id":"...",
//    "view":"original","categories":[...],"regions":[{"box":[x1,y1,x2,y2],
//    "score":s,"label":l,"logits":[...],"feature":[...]}]}
// on a single line. Keys are always emitted in that order and reals are
// written with 17 significant digits, so serialization is canonical and
// round-trips bit-exactly.

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "factor/transforms.hpp"

namespace factor {

inline constexpr std::string_view kSchemaVersion = "v1";
inline constexpr std::string_view kDetectionsFormat = "factor.detections";
inline constexpr std::string_view kEmbeddingsFormat = "factor.embeddings";
inline constexpr std::string_view kGroundTruthFormat = "factor.groundtruth";

/// Normalised box; valid boxes have 0 <= x1 < x2 <= 1 and 0 <= y1 < y2 <= 1.
struct BoundingBox {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double area() const noexcept { return (x2 - x1) * (y2 - y1); }
  bool valid() const noexcept;

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct RegionPrediction {
  BoundingBox box;
  std::vector<double> logits;   // pre-activation category scores, length C
  std::vector<double> feature;  // region visual feature, length D
  double score = 0.0;           // detector confidence in [0, 1]
  std::size_t label = 0;        // argmax of logits

  friend bool operator==(const RegionPrediction&,
                         const RegionPrediction&) = default;
};

enum class View { kOriginal, kCounterfactual };

std::string_view to_string(View view) noexcept;
View view_from_string(std::string_view text);

struct DetectionSet {
  std::string image_id;
  std::vector<RegionPrediction> regions;
  std::vector<std::string> categories;
  View view = View::kOriginal;

  friend bool operator==(const DetectionSet&, const DetectionSet&) = default;
};

/// Row-major dense matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data[r * cols + c];
  }
  std::span<const double> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

struct TextEmbeddingTable {
  std::size_t dim = 0;
  std::vector<std::string> attribute_names;
  Matrix attribute_embeddings;  // |A| x D
  std::vector<std::string> category_names;
  Matrix category_embeddings;   // C x D
  std::map<std::string, std::string> metadata;

  friend bool operator==(const TextEmbeddingTable&,
                         const TextEmbeddingTable&) = default;
};

struct CalibrationConfig {
  double lambda = 0.5;
  double iou_threshold = 0.3;
  TransformParams transform_params;
  double epsilon = 1e-12;

  void validate() const;

  friend bool operator==(const CalibrationConfig&,
                         const CalibrationConfig&) = default;
};

/// Index of the largest value; the lowest index wins ties.
std::size_t argmax(std::span<const double> values);

// Validation throws InvariantViolation with the offending field path.
void validate(const BoundingBox& box, std::string_view field = "box");
void validate(const RegionPrediction& region, std::size_t num_categories,
              std::string_view field = "region");
void validate(const DetectionSet& set);
void validate(const TextEmbeddingTable& table);

/// Throws InputError unless both sets describe the same image with the same
/// category order.
void check_pair_consistency(const DetectionSet& original,
                            const DetectionSet& counterfactual);

std::string serialize_detection_set(const DetectionSet& set);
DetectionSet deserialize_detection_set(std::string_view document);

std::string serialize_embedding_table(const TextEmbeddingTable& table);
TextEmbeddingTable deserialize_embedding_table(std::string_view document);

std::string serialize_config(const CalibrationConfig& config);
/// Absent fields take their defaults; unknown fields are ignored.
CalibrationConfig deserialize_config(std::string_view document);
std::string serialize_transform_params(const TransformParams& params);
TransformParams deserialize_transform_params(std::string_view document);

// File helpers. jsonl files carry one document per line; blank lines are
// skipped on read and every written line ends in '\n'.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);
std::vector<DetectionSet> read_detections_jsonl(
    const std::filesystem::path& path);
void write_detections_jsonl(const std::filesystem::path& path,
                            std::span<const DetectionSet> sets);
TextEmbeddingTable read_embedding_table(const std::filesystem::path& path);
CalibrationConfig read_config(const std::filesystem::path& path);

}  // namespace factor
