#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "factor/calibration.hpp"
#include "factor/errors.hpp"
#include "oracles.hpp"

using namespace factor;

namespace {

TextEmbeddingTable diagonal_table() {
  TextEmbeddingTable t;
  t.dim = 2;
  t.attribute_names = {"blur", "noise"};
  t.category_names = {"a", "b"};
  t.attribute_embeddings = Matrix(2, 2);
  t.attribute_embeddings(0, 0) = 2.0;
  t.attribute_embeddings(1, 1) = 2.0;
  t.category_embeddings = Matrix(2, 2);
  t.category_embeddings(0, 0) = 2.0;
  t.category_embeddings(1, 1) = 2.0;
  return t;
}

RegionPrediction region(BoundingBox box, std::vector<double> logits,
                        std::vector<double> feature, double score) {
  RegionPrediction r{box, logits, feature, score, 0};
  r.label = argmax(r.logits);
  return r;
}

}  // namespace

TEST_SUITE("calibration") {
  TEST_CASE("softmax") {
    const auto u = region_probabilities(std::vector<double>{0.0, 0.0});
    CHECK(u[0] == 0.5);
    CHECK(u[1] == 0.5);
    const auto p = region_probabilities(std::vector<double>{std::log(2.0), 0.0});
    CHECK(p[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    const auto shifted = region_probabilities(std::vector<double>{std::log(2.0) + 50, 50});
    CHECK(shifted[0] == doctest::Approx(p[0]).epsilon(1e-12));
    const auto big = region_probabilities(std::vector<double>{1000.0, 0.0});
    CHECK(big[0] == 1.0);
    CHECK(big[1] == 0.0);
  }

  TEST_CASE("kl divergence") {
    const std::vector<double> p{0.9, 0.1}, q{0.6, 0.4};
    CHECK(kl_divergence(p, p, 1e-12) == 0.0);
    CHECK(kl_divergence(p, q, 1e-12) == doctest::Approx(0.226289).epsilon(1e-6));
    const std::vector<double> one{1.0, 0.0}, half{0.5, 0.5};
    CHECK(kl_divergence(one, half, 1e-12) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
    // q(c) = 0 is clamped rather than producing infinity.
    CHECK(std::isfinite(kl_divergence(half, one, 1e-12)));
    CHECK_THROWS_AS(kl_divergence(p, std::vector<double>{1.0}, 1e-12), InputError);
  }

  TEST_CASE("counterfactual sensitivity") {
    CHECK(counterfactual_sensitivity(std::vector<double>{}).empty());
    for (double v : counterfactual_sensitivity(std::vector<double>{0.3, 0.3, 0.3}))
      CHECK(v == 0.5);
    CHECK(counterfactual_sensitivity(std::vector<double>{7.0})[0] == 0.5);
    const auto c = counterfactual_sensitivity(std::vector<double>{0.0, 2.0});
    CHECK(c[0] == doctest::Approx(0.268941).epsilon(1e-6));
    CHECK(c[1] == doctest::Approx(0.731059).epsilon(1e-6));
  }

  TEST_CASE("attribute sensitivity") {
    Matrix rows(2, 3);
    rows(0, 0) = std::log(3.0);
    rows(1, 1) = -1.0;
    rows(1, 2) = 4.0;
    for (double v : attribute_sensitivity(std::vector<double>{0, 0, 0}, rows))
      CHECK(v == 0.5);
    const std::vector<double> e1{1, 0, 0};
    CHECK(attribute_sensitivity(e1, rows)[0] == doctest::Approx(0.75).epsilon(1e-12));
    const std::vector<double> f{0.3, -0.2, 0.7}, neg{-0.3, 0.2, -0.7};
    const auto a = attribute_sensitivity(f, rows);
    const auto b = attribute_sensitivity(neg, rows);
    for (std::size_t i = 0; i < a.size(); ++i)
      CHECK(a[i] + b[i] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(attribute_sensitivity(std::vector<double>{1.0}, rows), InputError);
  }

  TEST_CASE("acr matrix") {
    TextEmbeddingTable t;
    t.dim = 2;
    t.attribute_names = {"x"};
    t.category_names = {"orth", "aligned"};
    t.attribute_embeddings = Matrix(1, 2);
    t.attribute_embeddings(0, 0) = std::sqrt(std::log(4.0));
    t.category_embeddings = Matrix(2, 2);
    t.category_embeddings(0, 1) = 5.0;
    t.category_embeddings(1, 0) = std::sqrt(std::log(4.0));
    const AcrMatrix acr(t);
    CHECK(acr.num_attributes() == 1);
    CHECK(acr.num_categories() == 2);
    CHECK(acr(0, 0) == 0.5);
    CHECK(acr(0, 1) == doctest::Approx(0.8).epsilon(1e-12));
  }

  TEST_CASE("correction term") {
    TextEmbeddingTable t;
    t.dim = 1;
    t.attribute_names = {"a1", "a2", "a3", "a4", "a5", "a6"};
    t.category_names = {"x", "y", "z"};
    t.attribute_embeddings = Matrix(6, 1);
    t.category_embeddings = Matrix(3, 1);
    const AcrMatrix half(t);
    for (double d : correction_term(std::vector<double>(6, 0.5), half, 0.5))
      CHECK(d == 0.125);
    for (double d : correction_term(std::vector<double>(6, 0.5), half, 1e-300))
      CHECK(d < 1e-299);

    // |A| = 2 with ACR column (0.2, 0.6): sigmoid(ln(1/4)) and sigmoid(ln(3/2)).
    TextEmbeddingTable u;
    u.dim = 1;
    u.attribute_names = {"p", "q"};
    u.category_names = {"c"};
    u.attribute_embeddings = Matrix(2, 1);
    u.attribute_embeddings(0, 0) = std::log(0.25);
    u.attribute_embeddings(1, 0) = std::log(1.5);
    u.category_embeddings = Matrix(1, 1, 1.0);
    const AcrMatrix acr(u);
    CHECK(acr(0, 0) == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(acr(1, 0) == doctest::Approx(0.6).epsilon(1e-12));
    const double near_one = 1.0 - 1e-12;
    const auto d = correction_term(std::vector<double>{near_one, near_one}, acr, near_one);
    CHECK(d[0] == doctest::Approx(0.4).epsilon(1e-9));
    CHECK_THROWS_AS(correction_term(std::vector<double>{0.5}, acr, 0.5), InputError);
  }

  TEST_CASE("calibrate_region scalar chain") {
    RegionPrediction r = region({0, 0, 1, 1}, {2.0, 1.0}, {0.0}, 0.9);
    SensitivityScores s;
    s.delta = {0.8, 0.1};
    const auto out = calibrate_region(r, s, 0.5);
    CHECK(out.adjusted_logits[0] == doctest::Approx(1.6).epsilon(1e-12));
    CHECK(out.adjusted_logits[1] == doctest::Approx(0.95).epsilon(1e-12));
    CHECK(out.adjusted_probs[0] == doctest::Approx(0.832018).epsilon(1e-6));
    CHECK(out.adjusted_probs[1] == doctest::Approx(0.721115).epsilon(1e-6));
    CHECK(out.delta_bar == doctest::Approx(0.737726).epsilon(1e-6));
    CHECK(out.adjusted_score == doctest::Approx(0.430380).epsilon(1e-6));
    CHECK(out.label == 0);
  }

  TEST_CASE("lambda zero and passthrough") {
    RegionPrediction r = region({0, 0, 1, 1}, {0.4, 1.0, -2.0}, {0.0}, 0.7);
    SensitivityScores s;
    s.delta = {0.3, 0.2, 0.1};
    const auto zero = calibrate_region(r, s, 0.0);
    CHECK(zero.adjusted_logits == r.logits);
    CHECK(zero.label == r.label);
    CHECK(zero.adjusted_score < r.score);

    const auto pass = calibrate_region(r, std::nullopt, 0.5);
    CHECK(pass.adjusted_logits == r.logits);
    CHECK(pass.adjusted_score == r.score);
    CHECK(pass.delta_bar == 0.0);
    CHECK(pass.to_prediction() == r);
    CHECK_THROWS_AS(calibrate_region(r, s, -0.1), ParameterError);
  }

  TEST_CASE("identical counterfactual") {
    std::mt19937_64 rng(5);
    auto t = oracle::random_table(6, 3, 4, rng);
    // Equal category rows make every ACR column identical.
    for (std::size_t c = 1; c < 3; ++c)
      for (std::size_t d = 0; d < 4; ++d)
        t.category_embeddings(c, d) = t.category_embeddings(0, d);
    DetectionSet orig;
    orig.image_id = "same";
    orig.categories = t.category_names;
    for (int i = 0; i < 4; ++i)
      orig.regions.push_back(oracle::random_region(3, 4, rng, oracle::random_box(rng)));
    DetectionSet cf = orig;
    cf.view = View::kCounterfactual;
    const auto out = Calibrator(t, {}).run(orig, cf);
    CHECK(out.num_pairs == 4);
    CHECK(out.mean_kl == 0.0);
    for (std::size_t i = 0; i < out.regions.size(); ++i) {
      REQUIRE(out.regions[i].scores);
      CHECK(out.regions[i].scores->kl == 0.0);
      CHECK(out.regions[i].scores->css == 0.5);
      CHECK(out.regions[i].label == orig.regions[i].label);
    }
  }

  TEST_CASE("empty views") {
    std::mt19937_64 rng(6);
    const auto t = oracle::random_table(6, 2, 3, rng);
    DetectionSet e;
    e.image_id = "empty";
    e.categories = t.category_names;
    const auto out = Calibrator(t, {}).run(e, e);
    CHECK(out.calibrated.regions.empty());
    CHECK(out.num_pairs == 0);
  }

  TEST_CASE("no pairs leaves the image untouched") {
    std::mt19937_64 rng(7);
    const auto t = oracle::random_table(6, 2, 3, rng);
    DetectionSet orig;
    orig.image_id = "np";
    orig.categories = t.category_names;
    orig.regions.push_back(oracle::random_region(2, 3, rng, {0.0, 0.0, 0.2, 0.2}));
    DetectionSet cf = orig;
    cf.regions[0].box = {0.6, 0.6, 0.9, 0.9};
    const auto out = Calibrator(t, {}).run(orig, cf);
    CHECK(out.num_passthrough == 1);
    CHECK(out.calibrated.regions == orig.regions);
  }

  TEST_CASE("spurious region falls below robust region") {
    const auto t = diagonal_table();
    DetectionSet orig;
    orig.image_id = "two";
    orig.categories = t.category_names;
    // Spurious region: high score, features aligned with both attributes.
    orig.regions.push_back(region({0.0, 0.0, 0.4, 0.4}, {2.0, -1.0}, {3.0, 3.0}, 0.9));
    // Robust region: lower score, features away from the attributes.
    orig.regions.push_back(region({0.5, 0.5, 0.9, 0.9}, {2.0, -1.0}, {-3.0, -3.0}, 0.8));
    DetectionSet cf = orig;
    cf.view = View::kCounterfactual;
    cf.regions[0].logits = {-1.0, 2.0};  // prediction flips under the counterfactual
    cf.regions[0].label = 1;
    const auto out = Calibrator(t, {}).run(orig, cf);
    const double spurious = out.calibrated.regions[0].score;
    const double robust = out.calibrated.regions[1].score;
    CHECK(orig.regions[0].score > orig.regions[1].score);
    CHECK(spurious < robust);
    const auto want = oracle::calibrate(orig, cf, t, 0.5, 0.3, 1e-12);
    CHECK(spurious == doctest::Approx(want[0].score).epsilon(1e-12));
    CHECK(robust == doctest::Approx(want[1].score).epsilon(1e-12));
  }

  TEST_CASE("matches the straight-line oracle") {
    std::mt19937_64 rng(99);
    for (int t = 0; t < 30; ++t) {
      const auto fx = oracle::random_fixture(rng, 5, 4, 6);
      CalibrationConfig cfg;
      cfg.lambda = 0.7;
      const auto got = Calibrator(fx.table, cfg).run(fx.original, fx.counterfactual);
      const auto want = oracle::calibrate(fx.original, fx.counterfactual, fx.table,
                                          0.7, cfg.iou_threshold, cfg.epsilon);
      REQUIRE(got.calibrated.regions.size() == want.size());
      for (std::size_t i = 0; i < want.size(); ++i) {
        const auto& g = got.calibrated.regions[i];
        CHECK(std::abs(g.score - want[i].score) <= 1e-9);
        CHECK(g.label == want[i].label);
        for (std::size_t c = 0; c < want[i].logits.size(); ++c)
          CHECK(std::abs(g.logits[c] - want[i].logits[c]) <= 1e-9);
      }
    }
  }

  TEST_CASE("opening the gate never lowers the penalty mass") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 200; ++t) {
      const auto table = oracle::random_table(6, 3, 4, rng);
      const AcrMatrix acr(table);
      std::vector<double> ass(6);
      for (auto& a : ass) a = u(rng);
      const double css = u(rng);
      const auto gated = correction_term(ass, acr, css);
      const auto open = correction_term(ass, acr, 1.0);
      CHECK(std::accumulate(open.begin(), open.end(), 0.0) >=
            std::accumulate(gated.begin(), gated.end(), 0.0));
    }
  }

  TEST_CASE("dimension checks") {
    std::mt19937_64 rng(13);
    const auto t = oracle::random_table(6, 2, 3, rng);
    DetectionSet orig;
    orig.image_id = "d";
    orig.categories = t.category_names;
    orig.regions.push_back(oracle::random_region(2, 4, rng, {0, 0, 0.5, 0.5}));
    CHECK_THROWS_AS(Calibrator(t, {}).run(orig, orig), InputError);
    orig.categories = {"a", "b", "c"};
    orig.regions[0] = oracle::random_region(3, 3, rng, {0, 0, 0.5, 0.5});
    CHECK_THROWS_AS(Calibrator(t, {}).run(orig, orig), InputError);
  }
}
