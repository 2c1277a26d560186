#pragma once

#include <cstddef>
#include <vector>

#include "factor/interchange.hpp"

namespace factor {

/// Intersection over union; 0 for disjoint boxes.
double iou(const BoundingBox& a, const BoundingBox& b) noexcept;

struct PairedRegion {
  RegionPrediction original;
  RegionPrediction counterfactual;
  double iou = 0.0;
  std::size_t original_index = 0;
  std::size_t counterfactual_index = 0;
};

struct UnmatchedRegion {
  std::size_t index = 0;
  RegionPrediction region;
};

struct PairingResult {
  std::vector<PairedRegion> pairs;  // ordered by original_index
  std::vector<UnmatchedRegion> unmatched_original;
  std::vector<UnmatchedRegion> unmatched_counterfactual;
};

/// Greedy one-to-one matching between the two views of an image.
///
/// Every (original, counterfactual) candidate with IoU >= threshold is
/// visited in descending IoU order, ties broken by lower original index and
/// then lower counterfactual index; a candidate is accepted when neither
/// side is already matched. Each original therefore receives its best
/// still-available counterfactual.
///
/// Throws InputError on image id or vocabulary mismatch and ParameterError
/// when threshold is outside (0, 1].
PairingResult align(const DetectionSet& original,
                    const DetectionSet& counterfactual, double threshold);

}  // namespace factor
