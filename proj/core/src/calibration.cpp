#include "factor/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "factor/errors.hpp"

namespace factor {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

}  // namespace

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<double> region_probabilities(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double m = *std::max_element(p.begin(), p.end());
  double sum = 0.0;
  for (auto& v : p) {
    v = std::exp(v - m);
    sum += v;
  }
  for (auto& v : p) v /= sum;
  return p;
}

double kl_divergence(std::span<const double> p, std::span<const double> q,
                     double epsilon) {
  if (p.size() != q.size()) {
    throw InputError("kl_divergence: length mismatch");
  }
  double kl = 0.0;
  for (std::size_t c = 0; c < p.size(); ++c) {
    if (p[c] <= 0.0) continue;
    const double pc = std::clamp(p[c], epsilon, 1.0);
    const double qc = std::clamp(q[c], epsilon, 1.0);
    kl += p[c] * std::log(pc / qc);
  }
  return std::max(kl, 0.0);
}

namespace {

// Mean taken relative to the first element, so equal inputs give exactly
// that value back and the sigmoid argument is exactly zero.
double mean_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double offset = 0.0;
  for (double x : v) offset += x - v.front();
  return v.front() + offset / static_cast<double>(v.size());
}

}  // namespace

std::vector<double> counterfactual_sensitivity(std::span<const double> kl) {
  std::vector<double> css;
  if (kl.empty()) return css;
  const double mu = mean_of(kl);
  css.reserve(kl.size());
  for (double v : kl) css.push_back(sigmoid(v - mu));
  return css;
}

std::vector<double> attribute_sensitivity(std::span<const double> feature,
                                          const Matrix& attribute_embeddings) {
  if (feature.size() != attribute_embeddings.cols) {
    throw InputError("attribute_sensitivity: feature dimension " +
                     std::to_string(feature.size()) +
                     " != embedding dimension " +
                     std::to_string(attribute_embeddings.cols));
  }
  std::vector<double> ass(attribute_embeddings.rows);
  for (std::size_t a = 0; a < ass.size(); ++a) {
    ass[a] = sigmoid(dot(feature, attribute_embeddings.row(a)));
  }
  return ass;
}

AcrMatrix::AcrMatrix(const TextEmbeddingTable& embeddings) {
  validate(embeddings);
  const auto& attr = embeddings.attribute_embeddings;
  const auto& cls = embeddings.category_embeddings;
  values_ = Matrix(attr.rows, cls.rows);
  for (std::size_t a = 0; a < attr.rows; ++a) {
    for (std::size_t c = 0; c < cls.rows; ++c) {
      values_(a, c) = sigmoid(dot(attr.row(a), cls.row(c)));
    }
  }
}

std::vector<double> correction_term(std::span<const double> ass,
                                    const AcrMatrix& acr, double css) {
  if (ass.size() != acr.num_attributes()) {
    throw InputError("correction_term: |ass| != number of attributes");
  }
  std::vector<double> delta(acr.num_categories(), 0.0);
  if (ass.empty()) return delta;
  const double inv = 1.0 / static_cast<double>(ass.size());
  for (std::size_t c = 0; c < delta.size(); ++c) {
    double sum = 0.0;
    for (std::size_t a = 0; a < ass.size(); ++a) sum += ass[a] * acr(a, c) * css;
    delta[c] = sum * inv;
  }
  return delta;
}

RegionPrediction CalibratedRegion::to_prediction() const {
  RegionPrediction r = base;
  r.logits = adjusted_logits;
  r.label = label;
  r.score = adjusted_score;
  return r;
}

CalibratedRegion calibrate_region(const RegionPrediction& region,
                                  const std::optional<SensitivityScores>& scores,
                                  double lambda) {
  if (!(lambda >= 0.0)) throw ParameterError("lambda must be >= 0");
  CalibratedRegion out;
  out.base = region;
  out.scores = scores;
  out.adjusted_logits = region.logits;
  if (scores && scores->delta.size() != region.logits.size()) {
    throw InputError("calibrate_region: delta length != logits length");
  }
  if (scores) {
    for (std::size_t c = 0; c < region.logits.size(); ++c) {
      out.adjusted_logits[c] = region.logits[c] - lambda * scores->delta[c];
    }
  }
  out.adjusted_probs.reserve(out.adjusted_logits.size());
  for (double z : out.adjusted_logits) out.adjusted_probs.push_back(sigmoid(z));
  // sigmoid is monotone, so this is argmax of adjusted_probs; ranking the
  // logits avoids ties created by saturation at 1.0.
  out.label = argmax(out.adjusted_logits);
  if (scores) {
    out.delta_bar = std::inner_product(out.adjusted_probs.begin(),
                                       out.adjusted_probs.end(),
                                       scores->delta.begin(), 0.0);
    out.adjusted_score = region.score * std::exp(-out.delta_bar);
  } else {
    out.adjusted_score = region.score;
  }
  return out;
}

Calibrator::Calibrator(TextEmbeddingTable embeddings, CalibrationConfig config)
    : embeddings_(std::move(embeddings)), config_(config), acr_(embeddings_) {
  config_.validate();
}

ImageCalibration Calibrator::run(const DetectionSet& original,
                                 const DetectionSet& counterfactual) const {
  return run(original, counterfactual, config_.lambda);
}

ImageCalibration Calibrator::run(const DetectionSet& original,
                                 const DetectionSet& counterfactual,
                                 double lambda) const {
  if (!(lambda >= 0.0)) throw ParameterError("lambda must be >= 0");
  if (original.categories.size() != acr_.num_categories()) {
    throw InputError("image '" + original.image_id +
                     "': vocabulary size differs from embedding table");
  }
  for (const auto* set : {&original, &counterfactual}) {
    for (const auto& r : set->regions) {
      if (r.feature.size() != embeddings_.dim) {
        throw InputError("image '" + set->image_id +
                         "': region feature dimension " +
                         std::to_string(r.feature.size()) +
                         " != embedding dim " + std::to_string(embeddings_.dim));
      }
    }
  }

  const PairingResult pairing =
      align(original, counterfactual, config_.iou_threshold);

  // Phase 1: divergence for every pair; mu is a barrier before phase 2.
  std::vector<double> kl;
  kl.reserve(pairing.pairs.size());
  for (const auto& pair : pairing.pairs) {
    kl.push_back(kl_divergence(region_probabilities(pair.original.logits),
                               region_probabilities(pair.counterfactual.logits),
                               config_.epsilon));
  }
  const std::vector<double> css = counterfactual_sensitivity(kl);

  std::vector<std::optional<SensitivityScores>> scores(original.regions.size());
  for (std::size_t k = 0; k < pairing.pairs.size(); ++k) {
    const auto& pair = pairing.pairs[k];
    SensitivityScores s;
    s.kl = kl[k];
    s.css = css[k];
    s.ass = attribute_sensitivity(pair.original.feature,
                                  embeddings_.attribute_embeddings);
    s.delta = correction_term(s.ass, acr_, s.css);
    scores[pair.original_index] = std::move(s);
  }

  ImageCalibration out;
  out.num_pairs = pairing.pairs.size();
  out.num_passthrough = pairing.unmatched_original.size();
  out.mean_kl = mean_of(kl);
  out.calibrated.image_id = original.image_id;
  out.calibrated.categories = original.categories;
  out.calibrated.view = View::kOriginal;
  out.regions.reserve(original.regions.size());
  out.calibrated.regions.reserve(original.regions.size());
  for (std::size_t i = 0; i < original.regions.size(); ++i) {
    out.regions.push_back(calibrate_region(original.regions[i], scores[i], lambda));
    out.calibrated.regions.push_back(out.regions.back().to_prediction());
  }
  return out;
}

DetectionSet calibrate_image(const DetectionSet& original,
                             const DetectionSet& counterfactual,
                             const TextEmbeddingTable& embeddings,
                             const CalibrationConfig& config) {
  return Calibrator(embeddings, config).run(original, counterfactual).calibrated;
}

}  // namespace factor
