#pragma once

// AP50 / mAP50 over detection sets.
//
// Per category, detections labelled with that category are ranked by score
// (ties keep input order: image order, then region order). Each detection
// claims the unmatched ground-truth box of its category with the highest
// IoU >= 0.5 in the same image; otherwise it is a false positive. Matching a
// difficult box is neither a true nor a false positive, and difficult boxes
// are excluded from the recall denominator. AP is the area under the
// monotone precision envelope (all-points interpolation).

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "factor/interchange.hpp"

namespace factor {

struct GroundTruthObject {
  BoundingBox box;
  std::size_t category = 0;
  bool difficult = false;

  friend bool operator==(const GroundTruthObject&,
                         const GroundTruthObject&) = default;
};

struct GroundTruthSet {
  std::string image_id;
  std::vector<std::string> categories;
  std::vector<GroundTruthObject> objects;

  friend bool operator==(const GroundTruthSet&, const GroundTruthSet&) = default;
};

struct CategoryCounts {
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t ground_truth = 0;  // non-difficult boxes
};

struct PrCurve {
  std::vector<double> recall;
  std::vector<double> precision;
};

struct EvalReport {
  std::vector<std::string> categories;
  std::vector<double> per_category_ap50;
  std::vector<CategoryCounts> counts;
  std::vector<PrCurve> curves;
  double map50 = 0.0;  // mean over categories with at least one ground truth
};

void validate(const GroundTruthSet& truth);

/// All-points interpolated AP from a PR curve ordered by descending score.
double average_precision(std::span<const double> recall,
                         std::span<const double> precision);

/// Throws InputError when the image id sets or vocabularies differ.
EvalReport evaluate(std::span<const DetectionSet> detections,
                    std::span<const GroundTruthSet> truth,
                    double iou_threshold = 0.5);

std::string serialize_ground_truth(const GroundTruthSet& truth);
GroundTruthSet deserialize_ground_truth(std::string_view document);
std::vector<GroundTruthSet> read_ground_truth_jsonl(
    const std::filesystem::path& path);
void write_ground_truth_jsonl(const std::filesystem::path& path,
                              std::span<const GroundTruthSet> truth);

/// Report as a JSON object (without trailing newline).
std::string serialize_eval_report(const EvalReport& report);

}  // namespace factor
