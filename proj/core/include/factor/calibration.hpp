#pragma once

// Invariance-guided calibration of region predictions.
//
// For every region paired across the original and counterfactual views:
//
//   kl_i      = sum_c p_i(c) ln(p_i(c) / p~_i(c))      p = softmax(logits)
//   css_i     = sigmoid(kl_i - mu)                    mu = mean kl over pairs
//   ass_i,a   = sigmoid(<f_i, T_attr[a]>)
//   acr_a,c   = sigmoid(<T_attr[a], T_cls[c]>)        once per embedding table
//   delta_i(c)= (1/|A|) sum_a ass_i,a * acr_a,c * css_i
//   logits'_i = logits_i - lambda * delta_i
//   p'_i      = sigmoid(logits'_i)
//   s'_i      = s_i * exp(-sum_c p'_i(c) delta_i(c))
//
// Regions without a counterfactual partner pass through unchanged.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "factor/interchange.hpp"
#include "factor/pairing.hpp"

namespace factor {

/// Numerically stable logistic function.
double sigmoid(double x) noexcept;

/// softmax(logits); the distribution compared by kl_divergence.
std::vector<double> region_probabilities(std::span<const double> logits);

/// Forward KL(p || q) with both arguments clamped to [epsilon, 1] inside the
/// log; terms with p(c) = 0 contribute nothing. Negative round-off is
/// clipped to 0. Throws InputError on length mismatch.
double kl_divergence(std::span<const double> p, std::span<const double> q,
                     double epsilon);

/// sigmoid(kl_i - mean(kl)); empty input gives empty output.
std::vector<double> counterfactual_sensitivity(std::span<const double> kl);

/// sigmoid(<feature, row_a>) for every attribute row. Raw inner products.
std::vector<double> attribute_sensitivity(std::span<const double> feature,
                                          const Matrix& attribute_embeddings);

/// |A| x C attribute-category relevance; image independent.
class AcrMatrix {
 public:
  AcrMatrix() = default;
  explicit AcrMatrix(const TextEmbeddingTable& embeddings);

  std::size_t num_attributes() const noexcept { return values_.rows; }
  std::size_t num_categories() const noexcept { return values_.cols; }
  double operator()(std::size_t a, std::size_t c) const {
    return values_(a, c);
  }
  const Matrix& values() const noexcept { return values_; }

 private:
  Matrix values_;
};

/// delta(c) = mean_a ass[a] * acr(a, c) * css.
std::vector<double> correction_term(std::span<const double> ass,
                                    const AcrMatrix& acr, double css);

struct SensitivityScores {
  double kl = 0.0;
  double css = 0.0;
  std::vector<double> ass;    // |A|
  std::vector<double> delta;  // C
};

struct CalibratedRegion {
  RegionPrediction base;
  std::vector<double> adjusted_logits;
  std::vector<double> adjusted_probs;
  std::size_t label = 0;
  double delta_bar = 0.0;
  double adjusted_score = 0.0;
  std::optional<SensitivityScores> scores;  // empty for unpaired regions

  /// The calibrated prediction in interchange form.
  RegionPrediction to_prediction() const;
};

/// Applies the logit adjustment and score refinement. Without scores the
/// region passes through with delta = 0.
CalibratedRegion calibrate_region(const RegionPrediction& region,
                                  const std::optional<SensitivityScores>& scores,
                                  double lambda);

struct ImageCalibration {
  DetectionSet calibrated;  // view = original, input region order
  std::vector<CalibratedRegion> regions;
  std::size_t num_pairs = 0;
  std::size_t num_passthrough = 0;
  double mean_kl = 0.0;  // mu; 0 when there are no pairs
};

/// Holds the cached ACR matrix for one embedding table and calibrates images
/// against it. Immutable after construction; safe to share across threads.
class Calibrator {
 public:
  Calibrator(TextEmbeddingTable embeddings, CalibrationConfig config);

  ImageCalibration run(const DetectionSet& original,
                       const DetectionSet& counterfactual) const;

  /// Same as run() with a different lambda; the rest of the config is kept.
  ImageCalibration run(const DetectionSet& original,
                       const DetectionSet& counterfactual, double lambda) const;

  const AcrMatrix& acr() const noexcept { return acr_; }
  const CalibrationConfig& config() const noexcept { return config_; }
  const TextEmbeddingTable& embeddings() const noexcept { return embeddings_; }

 private:
  TextEmbeddingTable embeddings_;
  CalibrationConfig config_;
  AcrMatrix acr_;
};

/// One-shot convenience wrapper around Calibrator.
DetectionSet calibrate_image(const DetectionSet& original,
                             const DetectionSet& counterfactual,
                             const TextEmbeddingTable& embeddings,
                             const CalibrationConfig& config);

}  // namespace factor
