#include "factor/interchange.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "factor/errors.hpp"
#include "json_util.hpp"

namespace factor {

using detail::Json;

namespace {

std::string indexed(std::string_view base, std::size_t i) {
  return std::string(base) + "[" + std::to_string(i) + "]";
}

void check_finite(std::span<const double> values, const std::string& field) {
  for (double v : values) {
    if (!std::isfinite(v)) throw InvariantViolation(field + ": non-finite value");
  }
}

void validate_matrix(const Matrix& m, std::size_t rows, std::size_t cols,
                     const std::string& field) {
  if (m.rows != rows || m.cols != cols || m.data.size() != rows * cols) {
    throw InvariantViolation(field + ": expected " + std::to_string(rows) +
                             "x" + std::to_string(cols) + " matrix");
  }
  check_finite(m.data, field);
}

void append_box(std::string& out, const BoundingBox& b) {
  const double v[4] = {b.x1, b.y1, b.x2, b.y2};
  detail::append_reals(out, v);
}

BoundingBox parse_box(const Json& v, const std::string& what) {
  const auto vals = detail::as_reals(v, what);
  if (vals.size() != 4) {
    throw MalformedDocument(what + ": box must have 4 coordinates");
  }
  return {vals[0], vals[1], vals[2], vals[3]};
}

}  // namespace

bool BoundingBox::valid() const noexcept {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  return unit(x1) && unit(y1) && unit(x2) && unit(y2) && x1 < x2 && y1 < y2;
}

std::string_view to_string(View view) noexcept {
  return view == View::kOriginal ? "original" : "counterfactual";
}

View view_from_string(std::string_view text) {
  if (text == "original") return View::kOriginal;
  if (text == "counterfactual") return View::kCounterfactual;
  throw MalformedDocument("view: unknown value '" + std::string(text) + "'");
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

void validate(const BoundingBox& box, std::string_view field) {
  if (!box.valid()) {
    throw InvariantViolation(std::string(field) +
                             ": box must satisfy 0 <= x1 < x2 <= 1 and "
                             "0 <= y1 < y2 <= 1");
  }
}

void validate(const RegionPrediction& region, std::size_t num_categories,
              std::string_view field) {
  const std::string f(field);
  validate(region.box, f + ".box");
  if (region.logits.size() != num_categories) {
    throw InvariantViolation(f + ".logits: logits length mismatch (" +
                             std::to_string(region.logits.size()) +
                             " != " + std::to_string(num_categories) + ")");
  }
  check_finite(region.logits, f + ".logits");
  check_finite(region.feature, f + ".feature");
  if (!(region.score >= 0.0 && region.score <= 1.0)) {
    throw InvariantViolation(f + ".score: must lie in [0, 1]");
  }
  if (region.label >= num_categories) {
    throw InvariantViolation(f + ".label: out of range");
  }
  if (region.label != argmax(region.logits)) {
    throw InvariantViolation(f + ".label: does not match argmax of logits");
  }
}

void validate(const DetectionSet& set) {
  if (set.categories.empty()) {
    throw InvariantViolation("categories: vocabulary must not be empty");
  }
  const std::size_t c = set.categories.size();
  for (std::size_t i = 0; i < set.regions.size(); ++i) {
    validate(set.regions[i], c, indexed("regions", i));
    if (set.regions[i].feature.size() != set.regions.front().feature.size()) {
      throw InvariantViolation(indexed("regions", i) +
                               ".feature: feature length mismatch");
    }
  }
}

void validate(const TextEmbeddingTable& table) {
  if (table.dim == 0) throw InvariantViolation("dim: must be positive");
  if (table.attribute_names.empty()) {
    throw InvariantViolation("attributes: must not be empty");
  }
  if (table.category_names.empty()) {
    throw InvariantViolation("categories: must not be empty");
  }
  validate_matrix(table.attribute_embeddings, table.attribute_names.size(),
                  table.dim, "attribute_embeddings");
  validate_matrix(table.category_embeddings, table.category_names.size(),
                  table.dim, "category_embeddings");
}

void CalibrationConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw ParameterError("lambda must be >= 0");
  }
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
    throw ParameterError("iou_threshold must lie in (0, 1]");
  }
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw ParameterError("epsilon must be > 0");
  }
  transform_params.validate();
}

void check_pair_consistency(const DetectionSet& original,
                            const DetectionSet& counterfactual) {
  if (original.image_id != counterfactual.image_id) {
    throw InputError("image_id mismatch: '" + original.image_id + "' vs '" +
                     counterfactual.image_id + "'");
  }
  if (original.categories != counterfactual.categories) {
    throw InputError("category list mismatch for image '" + original.image_id +
                     "'");
  }
}

// --- detection sets ---------------------------------------------------------

std::string serialize_detection_set(const DetectionSet& set) {
  validate(set);
  std::string out;
  out.reserve(128 + set.regions.size() * 64);
  out += '{';
  detail::append_key(out, "format");
  detail::append_string(out, kDetectionsFormat);
  out += ',';
  detail::append_key(out, "version");
  detail::append_string(out, kSchemaVersion);
  out += ',';
  detail::append_key(out, "image_id");
  detail::append_string(out, set.image_id);
  out += ',';
  detail::append_key(out, "view");
  detail::append_string(out, to_string(set.view));
  out += ',';
  detail::append_key(out, "categories");
  detail::append_strings(out, set.categories);
  out += ',';
  detail::append_key(out, "regions");
  out += '[';
  for (std::size_t i = 0; i < set.regions.size(); ++i) {
    const auto& r = set.regions[i];
    if (i) out += ',';
    out += '{';
    detail::append_key(out, "box");
    append_box(out, r.box);
    out += ',';
    detail::append_key(out, "score");
    detail::append_real(out, r.score);
    out += ',';
    detail::append_key(out, "label");
    detail::append_uint(out, r.label);
    out += ',';
    detail::append_key(out, "logits");
    detail::append_reals(out, r.logits);
    out += ',';
    detail::append_key(out, "feature");
    detail::append_reals(out, r.feature);
    out += '}';
  }
  out += "]}";
  return out;
}

DetectionSet deserialize_detection_set(std::string_view document) {
  constexpr std::string_view what = "detection set";
  const Json doc = detail::parse_document(document, what);
  detail::check_header(doc, kDetectionsFormat, kSchemaVersion, what);

  DetectionSet set;
  set.image_id = detail::as_string(detail::require(doc, "image_id", what), what);
  set.view = view_from_string(
      detail::as_string(detail::require(doc, "view", what), what));
  set.categories =
      detail::as_strings(detail::require(doc, "categories", what), what);
  const Json& regions =
      detail::as_array(detail::require(doc, "regions", what), what);
  set.regions.reserve(regions.size());
  for (std::size_t i = 0; i < regions.size(); ++i) {
    const std::string rw = indexed("regions", i);
    const Json& r = regions[i];
    RegionPrediction p;
    p.box = parse_box(detail::require(r, "box", rw), rw + ".box");
    p.score = detail::as_real(detail::require(r, "score", rw), rw + ".score");
    p.label = static_cast<std::size_t>(
        detail::as_uint(detail::require(r, "label", rw), rw + ".label"));
    p.logits = detail::as_reals(detail::require(r, "logits", rw), rw + ".logits");
    p.feature =
        detail::as_reals(detail::require(r, "feature", rw), rw + ".feature");
    set.regions.push_back(std::move(p));
  }
  validate(set);
  return set;
}

// --- embedding tables -------------------------------------------------------

namespace {

void append_named_rows(std::string& out, const std::vector<std::string>& names,
                       const Matrix& m) {
  out += '[';
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i) out += ',';
    out += '{';
    detail::append_key(out, "name");
    detail::append_string(out, names[i]);
    out += ',';
    detail::append_key(out, "vector");
    detail::append_reals(out, m.row(i));
    out += '}';
  }
  out += ']';
}

void parse_named_rows(const Json& v, std::size_t dim, const std::string& what,
                      std::vector<std::string>& names, Matrix& m) {
  detail::as_array(v, what);
  m = Matrix(v.size(), dim);
  names.clear();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::string rw = indexed(what, i);
    names.push_back(detail::as_string(detail::require(v[i], "name", rw), rw));
    const auto row =
        detail::as_reals(detail::require(v[i], "vector", rw), rw + ".vector");
    if (row.size() != dim) {
      throw InvariantViolation(rw + ".vector: length " +
                               std::to_string(row.size()) + " != dim " +
                               std::to_string(dim));
    }
    std::copy(row.begin(), row.end(), m.row(i).begin());
  }
}

}  // namespace

std::string serialize_embedding_table(const TextEmbeddingTable& table) {
  validate(table);
  std::string out = "{";
  detail::append_key(out, "format");
  detail::append_string(out, kEmbeddingsFormat);
  out += ',';
  detail::append_key(out, "version");
  detail::append_string(out, kSchemaVersion);
  out += ',';
  detail::append_key(out, "dim");
  detail::append_uint(out, table.dim);
  out += ',';
  detail::append_key(out, "attributes");
  append_named_rows(out, table.attribute_names, table.attribute_embeddings);
  out += ',';
  detail::append_key(out, "categories");
  append_named_rows(out, table.category_names, table.category_embeddings);
  out += ',';
  detail::append_key(out, "metadata");
  out += '{';
  bool first = true;
  for (const auto& [k, v] : table.metadata) {
    if (!first) out += ',';
    first = false;
    detail::append_key(out, k);
    detail::append_string(out, v);
  }
  out += "}}";
  return out;
}

TextEmbeddingTable deserialize_embedding_table(std::string_view document) {
  constexpr std::string_view what = "embedding table";
  const Json doc = detail::parse_document(document, what);
  detail::check_header(doc, kEmbeddingsFormat, kSchemaVersion, what);

  TextEmbeddingTable t;
  t.dim = static_cast<std::size_t>(
      detail::as_uint(detail::require(doc, "dim", what), "dim"));
  parse_named_rows(detail::require(doc, "attributes", what), t.dim,
                   "attributes", t.attribute_names, t.attribute_embeddings);
  parse_named_rows(detail::require(doc, "categories", what), t.dim,
                   "categories", t.category_names, t.category_embeddings);
  if (auto it = doc.find("metadata"); it != doc.end() && it->is_object()) {
    for (const auto& [k, v] : it->items()) {
      t.metadata[k] = v.is_string() ? v.get<std::string>() : v.dump();
    }
  }
  validate(t);
  return t;
}

// --- configs ----------------------------------------------------------------

namespace {

void append_transform_params(std::string& out, const TransformParams& p) {
  out += '{';
  detail::append_key(out, "gamma_prime");
  detail::append_real(out, p.gamma_prime);
  out += ',';
  detail::append_key(out, "alpha");
  detail::append_real(out, p.alpha);
  out += ',';
  detail::append_key(out, "kernel_size");
  detail::append_uint(out, static_cast<std::uint64_t>(p.kernel_size));
  out += ',';
  detail::append_key(out, "sigma_noise");
  detail::append_real(out, p.sigma_noise);
  out += ',';
  detail::append_key(out, "theta");
  detail::append_real(out, p.theta);
  out += ',';
  detail::append_key(out, "beta");
  detail::append_real(out, p.beta);
  out += ',';
  detail::append_key(out, "noise_seed");
  detail::append_uint(out, p.noise_seed);
  out += '}';
}

void read_real(const Json& obj, std::string_view key, double& dst) {
  if (auto it = obj.find(key); it != obj.end()) {
    dst = detail::as_real(*it, key);
  }
}

TransformParams parse_transform_params(const Json& obj) {
  if (!obj.is_object()) {
    throw MalformedDocument("transform_params: expected an object");
  }
  TransformParams p;
  read_real(obj, "gamma_prime", p.gamma_prime);
  read_real(obj, "alpha", p.alpha);
  if (auto it = obj.find("kernel_size"); it != obj.end()) {
    p.kernel_size = static_cast<int>(detail::as_int(*it, "kernel_size"));
  }
  read_real(obj, "sigma_noise", p.sigma_noise);
  read_real(obj, "theta", p.theta);
  read_real(obj, "beta", p.beta);
  if (auto it = obj.find("noise_seed"); it != obj.end()) {
    p.noise_seed = detail::as_uint(*it, "noise_seed");
  }
  return p;
}

}  // namespace

std::string serialize_transform_params(const TransformParams& params) {
  std::string out;
  append_transform_params(out, params);
  return out;
}

TransformParams deserialize_transform_params(std::string_view document) {
  const Json doc = detail::parse_document(document, "transform params");
  auto p = parse_transform_params(doc);
  p.validate();
  return p;
}

std::string serialize_config(const CalibrationConfig& config) {
  std::string out = "{";
  detail::append_key(out, "lambda");
  detail::append_real(out, config.lambda);
  out += ',';
  detail::append_key(out, "iou_threshold");
  detail::append_real(out, config.iou_threshold);
  out += ',';
  detail::append_key(out, "epsilon");
  detail::append_real(out, config.epsilon);
  out += ',';
  detail::append_key(out, "transform_params");
  append_transform_params(out, config.transform_params);
  out += '}';
  return out;
}

CalibrationConfig deserialize_config(std::string_view document) {
  const Json doc = detail::parse_document(document, "config");
  if (!doc.is_object()) throw MalformedDocument("config: expected an object");
  CalibrationConfig c;
  read_real(doc, "lambda", c.lambda);
  read_real(doc, "iou_threshold", c.iou_threshold);
  read_real(doc, "epsilon", c.epsilon);
  if (auto it = doc.find("transform_params"); it != doc.end()) {
    c.transform_params = parse_transform_params(*it);
  }
  c.validate();
  return c;
}

// --- files ------------------------------------------------------------------

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::vector<DetectionSet> read_detections_jsonl(
    const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  std::vector<DetectionSet> sets;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    ++line_no;
    std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      sets.push_back(deserialize_detection_set(line));
    } catch (const MalformedDocument& e) {
      throw MalformedDocument(path.string() + ":" + std::to_string(line_no) +
                              ": " + e.what());
    } catch (const VersionMismatch& e) {
      throw VersionMismatch(path.string() + ":" + std::to_string(line_no) +
                            ": " + e.what());
    } catch (const InvariantViolation& e) {
      throw InvariantViolation(path.string() + ":" + std::to_string(line_no) +
                               ": " + e.what());
    }
  }
  return sets;
}

void write_detections_jsonl(const std::filesystem::path& path,
                            std::span<const DetectionSet> sets) {
  std::string text;
  for (const auto& s : sets) {
    text += serialize_detection_set(s);
    text += '\n';
  }
  write_text_file(path, text);
}

TextEmbeddingTable read_embedding_table(const std::filesystem::path& path) {
  return deserialize_embedding_table(read_text_file(path));
}

CalibrationConfig read_config(const std::filesystem::path& path) {
  return deserialize_config(read_text_file(path));
}

}  // namespace factor
