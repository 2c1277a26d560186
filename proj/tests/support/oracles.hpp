#pragma once

// Reference implementations used as test oracles. They share only the data
// types with the library and are written for clarity, not speed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "factor/image.hpp"
#include "factor/interchange.hpp"
#include "factor/transforms.hpp"

namespace oracle {

using Match = std::pair<std::size_t, std::size_t>;

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double box_iou(const factor::BoundingBox& a, const factor::BoundingBox& b) {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (w <= 0 || h <= 0) return 0.0;
  const double inter = w * h;
  return inter / ((a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) -
                  inter);
}

namespace detail {

inline void enumerate(const std::vector<std::vector<double>>& iou, double thr,
                      std::size_t i, std::vector<bool>& used,
                      std::vector<Match>& cur,
                      const std::function<void(const std::vector<Match>&)>& visit) {
  if (i == iou.size()) {
    visit(cur);
    return;
  }
  enumerate(iou, thr, i + 1, used, cur, visit);
  for (std::size_t j = 0; j < used.size(); ++j) {
    if (used[j] || iou[i][j] < thr) continue;
    used[j] = true;
    cur.emplace_back(i, j);
    enumerate(iou, thr, i + 1, used, cur, visit);
    cur.pop_back();
    used[j] = false;
  }
}

inline std::vector<std::vector<double>> iou_table(
    const std::vector<factor::BoundingBox>& a,
    const std::vector<factor::BoundingBox>& b) {
  std::vector<std::vector<double>> t(a.size(), std::vector<double>(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) t[i][j] = box_iou(a[i], b[j]);
  return t;
}

}  // namespace detail

/// Every one-to-one matching over pairs with IoU >= thr is enumerated; the
/// winner has the lexicographically largest descending list of IoUs.
inline std::vector<Match> best_matching_lex(
    const std::vector<factor::BoundingBox>& a,
    const std::vector<factor::BoundingBox>& b, double thr) {
  const auto iou = detail::iou_table(a, b);
  std::vector<bool> used(b.size(), false);
  std::vector<Match> cur, best;
  std::vector<double> best_key;
  bool have = false;
  detail::enumerate(iou, thr, 0, used, cur, [&](const std::vector<Match>& m) {
    std::vector<double> key;
    for (auto [i, j] : m) key.push_back(iou[i][j]);
    std::sort(key.rbegin(), key.rend());
    if (!have || best_key < key) {
      best_key = key;
      best = m;
      have = true;
    }
  });
  std::sort(best.begin(), best.end());
  return best;
}

/// Matching maximising the summed IoU.
inline std::vector<Match> best_matching_sum(
    const std::vector<factor::BoundingBox>& a,
    const std::vector<factor::BoundingBox>& b, double thr) {
  const auto iou = detail::iou_table(a, b);
  std::vector<bool> used(b.size(), false);
  std::vector<Match> cur, best;
  double best_sum = -1.0;
  detail::enumerate(iou, thr, 0, used, cur, [&](const std::vector<Match>& m) {
    double s = 0.0;
    for (auto [i, j] : m) s += iou[i][j];
    if (s > best_sum) {
      best_sum = s;
      best = m;
    }
  });
  std::sort(best.begin(), best.end());
  return best;
}

struct Region {
  std::vector<double> logits;
  double score = 0.0;
  std::size_t label = 0;
};

/// Straight-line calibration of one image: pairing, softmax KL, CSS, ASS,
/// ACR, correction, logit shift and score refinement.
inline std::vector<Region> calibrate(const factor::DetectionSet& orig,
                                     const factor::DetectionSet& cf,
                                     const factor::TextEmbeddingTable& emb,
                                     double lambda, double thr, double eps) {
  std::vector<factor::BoundingBox> ob, cb;
  for (const auto& r : orig.regions) ob.push_back(r.box);
  for (const auto& r : cf.regions) cb.push_back(r.box);
  const auto matches = best_matching_lex(ob, cb, thr);

  const std::size_t C = orig.categories.size();
  const std::size_t A = emb.attribute_names.size();
  const std::size_t D = emb.dim;

  std::vector<double> kl;
  for (auto [i, j] : matches) {
    const auto& zo = orig.regions[i].logits;
    const auto& zc = cf.regions[j].logits;
    double mo = zo[0], mc = zc[0];
    for (std::size_t c = 0; c < C; ++c) {
      mo = std::max(mo, zo[c]);
      mc = std::max(mc, zc[c]);
    }
    double so = 0.0, sc = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      so += std::exp(zo[c] - mo);
      sc += std::exp(zc[c] - mc);
    }
    double d = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      const double p = std::exp(zo[c] - mo) / so;
      const double q = std::exp(zc[c] - mc) / sc;
      if (p == 0.0) continue;
      d += p * std::log(std::max(p, eps) / std::max(q, eps));
    }
    kl.push_back(std::max(d, 0.0));
  }
  double mu = 0.0;
  for (double v : kl) mu += v;
  if (!kl.empty()) mu /= static_cast<double>(kl.size());

  std::vector<Region> out;
  for (const auto& r : orig.regions) out.push_back({r.logits, r.score, 0});

  for (std::size_t k = 0; k < matches.size(); ++k) {
    const std::size_t i = matches[k].first;
    const auto& f = orig.regions[i].feature;
    const double css = logistic(kl[k] - mu);
    std::vector<double> delta(C, 0.0);
    for (std::size_t a = 0; a < A; ++a) {
      double fa = 0.0;
      for (std::size_t d = 0; d < D; ++d) fa += f[d] * emb.attribute_embeddings(a, d);
      const double ass = logistic(fa);
      for (std::size_t c = 0; c < C; ++c) {
        double ac = 0.0;
        for (std::size_t d = 0; d < D; ++d)
          ac += emb.attribute_embeddings(a, d) * emb.category_embeddings(c, d);
        delta[c] += ass * logistic(ac) * css / static_cast<double>(A);
      }
    }
    double dbar = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      out[i].logits[c] -= lambda * delta[c];
      dbar += logistic(out[i].logits[c]) * delta[c];
    }
    out[i].score *= std::exp(-dbar);
  }
  for (auto& r : out) {
    r.label = 0;
    for (std::size_t c = 1; c < r.logits.size(); ++c)
      if (r.logits[c] > r.logits[r.label]) r.label = c;
  }
  return out;
}

/// Direct summation of the pixel discrepancy statistics.
inline factor::PixelDiffReport pixel_diff(const factor::Image& a,
                                          const factor::Image& b) {
  const auto pa = a.pixels();
  const auto pb = b.pixels();
  const double n = static_cast<double>(pa.size());
  double sum = 0.0, mx = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const double d = std::abs(double(pa[i]) - double(pb[i]));
    sum += d;
    mx = std::max(mx, d);
  }
  const double mean = sum / n;
  double var = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const double d = std::abs(double(pa[i]) - double(pb[i])) - mean;
    var += d * d;
  }
  return {mean, std::sqrt(var / n), mx, mean / 255.0 * 100.0};
}

// --- random fixtures --------------------------------------------------------

inline factor::BoundingBox random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double w = 0.1 + 0.4 * u(rng);
  const double h = 0.1 + 0.4 * u(rng);
  const double x = u(rng) * (1.0 - w);
  const double y = u(rng) * (1.0 - h);
  return {x, y, x + w, y + h};
}

inline factor::BoundingBox jitter_box(const factor::BoundingBox& b, double s,
                                      std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, s);
  factor::BoundingBox j{std::clamp(b.x1 + n(rng), 0.0, 1.0),
                        std::clamp(b.y1 + n(rng), 0.0, 1.0),
                        std::clamp(b.x2 + n(rng), 0.0, 1.0),
                        std::clamp(b.y2 + n(rng), 0.0, 1.0)};
  return j.x2 - j.x1 > 0.02 && j.y2 - j.y1 > 0.02 ? j : b;
}

inline factor::RegionPrediction random_region(std::size_t C, std::size_t D,
                                              std::mt19937_64& rng,
                                              const factor::BoundingBox& box) {
  std::normal_distribution<double> n(0.0, 1.5);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  factor::RegionPrediction r;
  r.box = box;
  for (std::size_t c = 0; c < C; ++c) r.logits.push_back(n(rng));
  for (std::size_t d = 0; d < D; ++d) r.feature.push_back(n(rng));
  r.score = u(rng);
  r.label = factor::argmax(r.logits);
  return r;
}

inline factor::TextEmbeddingTable random_table(std::size_t A, std::size_t C,
                                               std::size_t D,
                                               std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 0.6);
  factor::TextEmbeddingTable t;
  t.dim = D;
  t.attribute_embeddings = factor::Matrix(A, D);
  t.category_embeddings = factor::Matrix(C, D);
  for (std::size_t a = 0; a < A; ++a) {
    t.attribute_names.push_back("attr" + std::to_string(a));
    for (std::size_t d = 0; d < D; ++d) t.attribute_embeddings(a, d) = n(rng);
  }
  for (std::size_t c = 0; c < C; ++c) {
    t.category_names.push_back("cat" + std::to_string(c));
    for (std::size_t d = 0; d < D; ++d) t.category_embeddings(c, d) = n(rng);
  }
  return t;
}

struct Fixture {
  factor::TextEmbeddingTable table;
  factor::DetectionSet original;
  factor::DetectionSet counterfactual;
};

/// Up to max_regions regions per view; the counterfactual view holds
/// jittered, re-scored copies of some originals plus occasional extras.
inline Fixture random_fixture(std::mt19937_64& rng, std::size_t max_regions,
                              std::size_t max_categories, std::size_t A) {
  std::uniform_int_distribution<std::size_t> nc(2, max_categories);
  std::uniform_int_distribution<std::size_t> nr(0, max_regions);
  std::uniform_int_distribution<std::size_t> nd(2, 8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> shift(0.0, 0.8);
  Fixture fx;
  const std::size_t C = nc(rng);
  const std::size_t D = nd(rng);
  fx.table = random_table(A, C, D, rng);
  fx.original.image_id = "img";
  fx.original.categories = fx.table.category_names;
  fx.counterfactual = fx.original;
  fx.counterfactual.view = factor::View::kCounterfactual;
  const std::size_t n = nr(rng);
  for (std::size_t i = 0; i < n; ++i) {
    fx.original.regions.push_back(random_region(C, D, rng, random_box(rng)));
  }
  for (const auto& r : fx.original.regions) {
    if (fx.counterfactual.regions.size() >= max_regions) break;
    if (u(rng) < 0.2) continue;
    auto copy = r;
    copy.box = jitter_box(r.box, 0.03, rng);
    for (auto& z : copy.logits) z += shift(rng);
    for (auto& f : copy.feature) f += 0.3 * shift(rng);
    copy.label = factor::argmax(copy.logits);
    fx.counterfactual.regions.push_back(copy);
  }
  if (fx.counterfactual.regions.size() < max_regions && u(rng) < 0.3) {
    fx.counterfactual.regions.push_back(random_region(C, D, rng, random_box(rng)));
  }
  std::shuffle(fx.counterfactual.regions.begin(),
               fx.counterfactual.regions.end(), rng);
  return fx;
}

inline factor::Image random_image(int w, int h, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> u(0, 255);
  std::vector<std::uint8_t> px(static_cast<std::size_t>(w * h * 3));
  for (auto& v : px) v = static_cast<std::uint8_t>(u(rng));
  return factor::Image(w, h, std::move(px));
}

}  // namespace oracle
