#include <doctest.h>

#include "factor/errors.hpp"
#include "factor/evaluation.hpp"

using namespace factor;

namespace {

GroundTruthSet truth(std::string id, std::vector<GroundTruthObject> objects) {
  return {std::move(id), {"a", "b"}, std::move(objects)};
}

DetectionSet dets(std::string id, std::vector<std::tuple<BoundingBox, std::size_t, double>> items) {
  DetectionSet s;
  s.image_id = std::move(id);
  s.categories = {"a", "b"};
  for (auto& [box, label, score] : items) {
    std::vector<double> logits(2, 0.0);
    logits[label] = 1.0;
    s.regions.push_back({box, logits, {}, score, label});
  }
  return s;
}

const BoundingBox kBox{0.1, 0.1, 0.4, 0.4};
const BoundingBox kFar{0.6, 0.6, 0.9, 0.9};

}  // namespace

TEST_SUITE("evaluation") {
  TEST_CASE("average precision envelope") {
    const std::vector<double> r{0.5, 0.5, 1.0}, p{1.0, 0.5, 2.0 / 3.0};
    CHECK(average_precision(r, p) == doctest::Approx(0.5 + 0.5 * 2.0 / 3.0));
    CHECK(average_precision(std::vector<double>{}, std::vector<double>{}) == 0.0);
    CHECK_THROWS_AS(average_precision(r, std::vector<double>{1.0}), InputError);
  }

  TEST_CASE("perfect detections") {
    std::vector<GroundTruthSet> gt = {truth("i", {{kBox, 0, false}, {kFar, 1, false}})};
    std::vector<DetectionSet> d = {dets("i", {{kBox, 0, 0.9}, {kFar, 1, 0.8}})};
    const auto r = evaluate(d, gt);
    CHECK(r.per_category_ap50[0] == 1.0);
    CHECK(r.per_category_ap50[1] == 1.0);
    CHECK(r.map50 == 1.0);
  }

  TEST_CASE("no detections") {
    std::vector<GroundTruthSet> gt = {truth("i", {{kBox, 0, false}})};
    std::vector<DetectionSet> d = {dets("i", {})};
    CHECK(evaluate(d, gt).map50 == 0.0);
  }

  TEST_CASE("hit then miss, and miss then hit") {
    std::vector<GroundTruthSet> gt = {truth("i", {{kBox, 0, false}})};
    std::vector<DetectionSet> hit_first = {dets("i", {{kBox, 0, 0.9}, {kFar, 0, 0.8}})};
    const auto r1 = evaluate(hit_first, gt);
    CHECK(r1.curves[0].precision == std::vector<double>{1.0, 0.5});
    CHECK(r1.curves[0].recall == std::vector<double>{1.0, 1.0});
    CHECK(r1.per_category_ap50[0] == 1.0);
    std::vector<DetectionSet> miss_first = {dets("i", {{kBox, 0, 0.8}, {kFar, 0, 0.9}})};
    CHECK(evaluate(miss_first, gt).per_category_ap50[0] == 0.5);
  }

  TEST_CASE("duplicates count as false positives") {
    std::vector<GroundTruthSet> gt = {truth("i", {{kBox, 0, false}})};
    std::vector<DetectionSet> d = {dets("i", {{kBox, 0, 0.9}, {kBox, 0, 0.8}})};
    const auto r = evaluate(d, gt);
    CHECK(r.counts[0].true_positives == 1);
    CHECK(r.counts[0].false_positives == 1);
  }

  TEST_CASE("wrong label does not match") {
    std::vector<GroundTruthSet> gt = {truth("i", {{kBox, 0, false}})};
    std::vector<DetectionSet> d = {dets("i", {{kBox, 1, 0.9}})};
    const auto r = evaluate(d, gt);
    CHECK(r.map50 == 0.0);
    CHECK(r.counts[1].false_positives == 1);
  }

  TEST_CASE("difficult objects are ignored") {
    std::vector<GroundTruthSet> gt = {truth("i", {{kBox, 0, true}, {kFar, 0, false}})};
    std::vector<DetectionSet> d = {dets("i", {{kBox, 0, 0.9}, {kFar, 0, 0.8}})};
    const auto r = evaluate(d, gt);
    CHECK(r.counts[0].ground_truth == 1);
    CHECK(r.counts[0].true_positives == 1);
    CHECK(r.counts[0].false_positives == 0);
    CHECK(r.per_category_ap50[0] == 1.0);
  }

  TEST_CASE("mean over populated categories only") {
    std::vector<GroundTruthSet> gt = {truth("i", {{kBox, 0, false}})};
    std::vector<DetectionSet> d = {dets("i", {{kBox, 0, 0.9}, {kFar, 1, 0.9}})};
    CHECK(evaluate(d, gt).map50 == 1.0);
  }

  TEST_CASE("multi-image ranking") {
    std::vector<GroundTruthSet> gt = {truth("i", {{kBox, 0, false}}),
                                      truth("j", {{kBox, 0, false}})};
    std::vector<DetectionSet> d = {dets("i", {{kBox, 0, 0.5}}),
                                   dets("j", {{kFar, 0, 0.9}, {kBox, 0, 0.4}})};
    // Ranked: miss(0.9), hit(0.5), hit(0.4) -> P = 0, 1/2, 2/3 at R = 0, .5, 1.
    CHECK(evaluate(d, gt).map50 == doctest::Approx(2.0 / 3.0));
  }

  TEST_CASE("image set mismatches") {
    std::vector<GroundTruthSet> gt = {truth("i", {})};
    std::vector<DetectionSet> other = {dets("j", {})};
    CHECK_THROWS_AS(evaluate(other, gt), InputError);
    std::vector<DetectionSet> none;
    CHECK_THROWS_AS(evaluate(none, gt), InputError);
    auto vocab = dets("i", {});
    vocab.categories = {"b", "a"};
    std::vector<DetectionSet> v = {vocab};
    CHECK_THROWS_AS(evaluate(v, gt), InputError);
  }

  TEST_CASE("ground truth round-trip") {
    const auto t = truth("i", {{kBox, 0, false}, {kFar, 1, true}});
    CHECK(deserialize_ground_truth(serialize_ground_truth(t)) == t);
    auto bad = t;
    bad.objects[0].category = 5;
    CHECK_THROWS_AS(serialize_ground_truth(bad), InvariantViolation);
  }
}
