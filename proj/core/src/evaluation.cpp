#include "factor/evaluation.hpp"

#include <algorithm>
#include <map>

#include "factor/errors.hpp"
#include "factor/pairing.hpp"
#include "json_util.hpp"

namespace factor {

using detail::Json;

void validate(const GroundTruthSet& truth) {
  for (std::size_t i = 0; i < truth.objects.size(); ++i) {
    const std::string f = "objects[" + std::to_string(i) + "]";
    validate(truth.objects[i].box, f + ".box");
    if (truth.objects[i].category >= truth.categories.size()) {
      throw InvariantViolation(f + ".category: out of range");
    }
  }
}

double average_precision(std::span<const double> recall,
                         std::span<const double> precision) {
  if (recall.size() != precision.size()) {
    throw InputError("average_precision: curve length mismatch");
  }
  std::vector<double> envelope(precision.begin(), precision.end());
  for (std::size_t i = envelope.size(); i-- > 1;) {
    envelope[i - 1] = std::max(envelope[i - 1], envelope[i]);
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < recall.size(); ++i) {
    ap += (recall[i] - prev_recall) * envelope[i];
    prev_recall = recall[i];
  }
  return ap;
}

EvalReport evaluate(std::span<const DetectionSet> detections,
                    std::span<const GroundTruthSet> truth,
                    double iou_threshold) {
  std::map<std::string, std::size_t> truth_index;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    validate(truth[i]);
    if (!truth_index.emplace(truth[i].image_id, i).second) {
      throw InputError("evaluate: duplicate ground-truth image '" +
                       truth[i].image_id + "'");
    }
  }
  if (detections.size() != truth.size()) {
    throw InputError("evaluate: detection and ground-truth image sets differ");
  }

  EvalReport report;
  if (!truth.empty()) report.categories = truth.front().categories;
  const std::size_t num_categories = report.categories.size();

  struct Entry {
    double score;
    std::size_t image;   // index into truth
    std::size_t region;  // index into detections[d].regions
    std::size_t det;     // index into detections
  };
  std::vector<std::vector<Entry>> per_category(num_categories);
  std::vector<bool> seen(truth.size(), false);

  for (std::size_t d = 0; d < detections.size(); ++d) {
    const auto& set = detections[d];
    auto it = truth_index.find(set.image_id);
    if (it == truth_index.end()) {
      throw InputError("evaluate: image '" + set.image_id +
                       "' has no ground truth");
    }
    if (seen[it->second]) {
      throw InputError("evaluate: duplicate detections for image '" +
                       set.image_id + "'");
    }
    seen[it->second] = true;
    if (set.categories != truth[it->second].categories ||
        set.categories != report.categories) {
      throw InputError("evaluate: vocabulary mismatch for image '" +
                       set.image_id + "'");
    }
    for (std::size_t r = 0; r < set.regions.size(); ++r) {
      const auto& region = set.regions[r];
      if (region.label >= num_categories) {
        throw InputError("evaluate: label out of range in '" + set.image_id +
                         "'");
      }
      per_category[region.label].push_back({region.score, it->second, r, d});
    }
  }

  report.per_category_ap50.assign(num_categories, 0.0);
  report.counts.assign(num_categories, {});
  report.curves.assign(num_categories, {});

  double ap_sum = 0.0;
  std::size_t populated = 0;
  for (std::size_t c = 0; c < num_categories; ++c) {
    auto& counts = report.counts[c];
    // Ground-truth boxes of this category, per image.
    std::vector<std::vector<std::size_t>> gt_of_image(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
      for (std::size_t o = 0; o < truth[i].objects.size(); ++o) {
        const auto& obj = truth[i].objects[o];
        if (obj.category != c) continue;
        gt_of_image[i].push_back(o);
        if (!obj.difficult) ++counts.ground_truth;
      }
    }

    auto& entries = per_category[c];
    std::stable_sort(entries.begin(), entries.end(),
                     [](const Entry& a, const Entry& b) {
                       return a.score > b.score;
                     });

    std::vector<std::vector<bool>> matched(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
      matched[i].assign(truth[i].objects.size(), false);
    }

    auto& curve = report.curves[c];
    for (const auto& e : entries) {
      const auto& box = detections[e.det].regions[e.region].box;
      double best = -1.0;
      std::size_t best_obj = 0;
      for (std::size_t o : gt_of_image[e.image]) {
        if (matched[e.image][o]) continue;
        const double v = iou(box, truth[e.image].objects[o].box);
        if (v >= iou_threshold && v > best) {
          best = v;
          best_obj = o;
        }
      }
      if (best < 0.0) {
        ++counts.false_positives;
      } else {
        matched[e.image][best_obj] = true;
        if (truth[e.image].objects[best_obj].difficult) continue;
        ++counts.true_positives;
      }
      const double tp = static_cast<double>(counts.true_positives);
      const double fp = static_cast<double>(counts.false_positives);
      curve.precision.push_back(tp / (tp + fp));
      curve.recall.push_back(
          counts.ground_truth ? tp / static_cast<double>(counts.ground_truth)
                              : 0.0);
    }

    if (counts.ground_truth > 0) {
      report.per_category_ap50[c] =
          average_precision(curve.recall, curve.precision);
      ap_sum += report.per_category_ap50[c];
      ++populated;
    }
  }
  report.map50 = populated ? ap_sum / static_cast<double>(populated) : 0.0;
  return report;
}

std::string serialize_ground_truth(const GroundTruthSet& truth) {
  validate(truth);
  std::string out = "{";
  detail::append_key(out, "format");
  detail::append_string(out, kGroundTruthFormat);
  out += ',';
  detail::append_key(out, "version");
  detail::append_string(out, kSchemaVersion);
  out += ',';
  detail::append_key(out, "image_id");
  detail::append_string(out, truth.image_id);
  out += ',';
  detail::append_key(out, "categories");
  detail::append_strings(out, truth.categories);
  out += ',';
  detail::append_key(out, "objects");
  out += '[';
  for (std::size_t i = 0; i < truth.objects.size(); ++i) {
    const auto& o = truth.objects[i];
    if (i) out += ',';
    out += '{';
    detail::append_key(out, "box");
    const double b[4] = {o.box.x1, o.box.y1, o.box.x2, o.box.y2};
    detail::append_reals(out, b);
    out += ',';
    detail::append_key(out, "category");
    detail::append_uint(out, o.category);
    out += ',';
    detail::append_key(out, "difficult");
    out += o.difficult ? "true" : "false";
    out += '}';
  }
  out += "]}";
  return out;
}

GroundTruthSet deserialize_ground_truth(std::string_view document) {
  constexpr std::string_view what = "ground truth";
  const Json doc = detail::parse_document(document, what);
  detail::check_header(doc, kGroundTruthFormat, kSchemaVersion, what);
  GroundTruthSet t;
  t.image_id = detail::as_string(detail::require(doc, "image_id", what), what);
  t.categories =
      detail::as_strings(detail::require(doc, "categories", what), what);
  const Json& objects =
      detail::as_array(detail::require(doc, "objects", what), what);
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const std::string ow = "objects[" + std::to_string(i) + "]";
    GroundTruthObject o;
    const auto b = detail::as_reals(detail::require(objects[i], "box", ow), ow);
    if (b.size() != 4) throw MalformedDocument(ow + ".box: expected 4 values");
    o.box = {b[0], b[1], b[2], b[3]};
    o.category = static_cast<std::size_t>(
        detail::as_uint(detail::require(objects[i], "category", ow), ow));
    if (auto it = objects[i].find("difficult"); it != objects[i].end()) {
      if (!it->is_boolean()) throw MalformedDocument(ow + ".difficult: bool");
      o.difficult = it->get<bool>();
    }
    t.objects.push_back(o);
  }
  validate(t);
  return t;
}

std::vector<GroundTruthSet> read_ground_truth_jsonl(
    const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  std::vector<GroundTruthSet> out;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    ++line_no;
    std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      out.push_back(deserialize_ground_truth(line));
    } catch (const MalformedDocument& e) {
      throw MalformedDocument(path.string() + ":" + std::to_string(line_no) +
                              ": " + e.what());
    }
  }
  return out;
}

void write_ground_truth_jsonl(const std::filesystem::path& path,
                              std::span<const GroundTruthSet> truth) {
  std::string text;
  for (const auto& t : truth) {
    text += serialize_ground_truth(t);
    text += '\n';
  }
  write_text_file(path, text);
}

std::string serialize_eval_report(const EvalReport& report) {
  std::string out = "{";
  detail::append_key(out, "map50");
  detail::append_real(out, report.map50);
  out += ',';
  detail::append_key(out, "categories");
  out += '[';
  for (std::size_t c = 0; c < report.categories.size(); ++c) {
    if (c) out += ',';
    const auto& k = report.counts[c];
    out += '{';
    detail::append_key(out, "name");
    detail::append_string(out, report.categories[c]);
    out += ',';
    detail::append_key(out, "ap50");
    detail::append_real(out, report.per_category_ap50[c]);
    out += ',';
    detail::append_key(out, "true_positives");
    detail::append_uint(out, k.true_positives);
    out += ',';
    detail::append_key(out, "false_positives");
    detail::append_uint(out, k.false_positives);
    out += ',';
    detail::append_key(out, "ground_truth");
    detail::append_uint(out, k.ground_truth);
    out += '}';
  }
  out += "]}";
  return out;
}

}  // namespace factor
