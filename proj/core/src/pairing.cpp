#include "factor/pairing.hpp"

#include <algorithm>

#include "factor/errors.hpp"

namespace factor {

double iou(const BoundingBox& a, const BoundingBox& b) noexcept {
  const double ix = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double iy = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

PairingResult align(const DetectionSet& original,
                    const DetectionSet& counterfactual, double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw ParameterError("align: threshold must lie in (0, 1]");
  }
  check_pair_consistency(original, counterfactual);

  const auto& ro = original.regions;
  const auto& rc = counterfactual.regions;

  struct Candidate {
    double iou;
    std::size_t i;
    std::size_t j;
  };
  std::vector<Candidate> candidates;
  for (std::size_t i = 0; i < ro.size(); ++i) {
    for (std::size_t j = 0; j < rc.size(); ++j) {
      const double v = iou(ro[i].box, rc[j].box);
      if (v >= threshold) candidates.push_back({v, i, j});
    }
  }
  std::sort(candidates.begin(), candidates.end(),
            [](const Candidate& a, const Candidate& b) {
              if (a.iou != b.iou) return a.iou > b.iou;
              if (a.i != b.i) return a.i < b.i;
              return a.j < b.j;
            });

  std::vector<bool> used_o(ro.size(), false);
  std::vector<bool> used_c(rc.size(), false);
  PairingResult result;
  for (const auto& cand : candidates) {
    if (used_o[cand.i] || used_c[cand.j]) continue;
    used_o[cand.i] = used_c[cand.j] = true;
    result.pairs.push_back({ro[cand.i], rc[cand.j], cand.iou, cand.i, cand.j});
  }
  std::sort(result.pairs.begin(), result.pairs.end(),
            [](const PairedRegion& a, const PairedRegion& b) {
              return a.original_index < b.original_index;
            });
  for (std::size_t i = 0; i < ro.size(); ++i) {
    if (!used_o[i]) result.unmatched_original.push_back({i, ro[i]});
  }
  for (std::size_t j = 0; j < rc.size(); ++j) {
    if (!used_c[j]) result.unmatched_counterfactual.push_back({j, rc[j]});
  }
  return result;
}

}  // namespace factor
