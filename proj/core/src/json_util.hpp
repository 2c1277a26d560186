#pragma once

// Internal helpers for canonical JSON emission and checked field access.

#include <fmt/format.h>

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "factor/errors.hpp"
#include "json.hpp"

namespace factor::detail {

using Json = nlohmann::json;

/// 17 significant digits; integral values keep a ".0" so they parse back as
/// floating point (this preserves the sign of -0.0).
inline void append_real(std::string& out, double value) {
  if (!std::isfinite(value)) {
    throw InvariantViolation("non-finite real cannot be serialized");
  }
  const std::size_t start = out.size();
  fmt::format_to(std::back_inserter(out), "{:.17g}", value);
  if (out.find_first_of(".e", start) == std::string::npos) out += ".0";
}

inline void append_uint(std::string& out, std::uint64_t value) {
  fmt::format_to(std::back_inserter(out), "{}", value);
}

inline void append_string(std::string& out, std::string_view value) {
  try {
    out += Json(std::string(value)).dump(-1, ' ', false,
                                         Json::error_handler_t::strict);
  } catch (const Json::type_error&) {
    throw InvariantViolation("string is not valid UTF-8");
  }
}

inline void append_key(std::string& out, std::string_view key) {
  append_string(out, key);
  out += ':';
}

inline void append_reals(std::string& out, std::span<const double> values) {
  out += '[';
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    append_real(out, values[i]);
  }
  out += ']';
}

template <typename Range>
void append_strings(std::string& out, const Range& values) {
  out += '[';
  bool first = true;
  for (const auto& v : values) {
    if (!first) out += ',';
    first = false;
    append_string(out, v);
  }
  out += ']';
}

inline Json parse_document(std::string_view text, std::string_view what) {
  try {
    return Json::parse(text.begin(), text.end());
  } catch (const Json::exception& e) {
    throw MalformedDocument(std::string(what) + ": malformed document: " +
                            e.what());
  }
}

inline const Json& require(const Json& obj, std::string_view key,
                           std::string_view what) {
  if (!obj.is_object()) {
    throw MalformedDocument(std::string(what) + ": expected an object");
  }
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw MalformedDocument(std::string(what) + ": missing field '" +
                            std::string(key) + "'");
  }
  return *it;
}

inline double as_real(const Json& v, std::string_view what) {
  if (!v.is_number()) {
    throw MalformedDocument(std::string(what) + ": expected a number");
  }
  return v.get<double>();
}

inline std::uint64_t as_uint(const Json& v, std::string_view what) {
  if (!v.is_number_unsigned()) {
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) {
      return static_cast<std::uint64_t>(v.get<std::int64_t>());
    }
    throw MalformedDocument(std::string(what) +
                            ": expected a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

inline std::int64_t as_int(const Json& v, std::string_view what) {
  if (!v.is_number_integer()) {
    throw MalformedDocument(std::string(what) + ": expected an integer");
  }
  return v.get<std::int64_t>();
}

inline std::string as_string(const Json& v, std::string_view what) {
  if (!v.is_string()) {
    throw MalformedDocument(std::string(what) + ": expected a string");
  }
  return v.get<std::string>();
}

inline const Json& as_array(const Json& v, std::string_view what) {
  if (!v.is_array()) {
    throw MalformedDocument(std::string(what) + ": expected an array");
  }
  return v;
}

inline std::vector<double> as_reals(const Json& v, std::string_view what) {
  as_array(v, what);
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& e : v) out.push_back(as_real(e, what));
  return out;
}

inline std::vector<std::string> as_strings(const Json& v,
                                           std::string_view what) {
  as_array(v, what);
  std::vector<std::string> out;
  out.reserve(v.size());
  for (const auto& e : v) out.push_back(as_string(e, what));
  return out;
}

/// Checks the "format" and "version" tags of a document.
inline void check_header(const Json& doc, std::string_view format,
                         std::string_view version, std::string_view what) {
  const auto fmt_tag = as_string(require(doc, "format", what), what);
  if (fmt_tag != format) {
    throw MalformedDocument(std::string(what) + ": unexpected format '" +
                            fmt_tag + "'");
  }
  const auto ver = as_string(require(doc, "version", what), what);
  if (ver != version) {
    throw VersionMismatch(std::string(what) + ": version mismatch: document is '" +
                          ver + "', reader supports '" + std::string(version) +
                          "'");
  }
}

}  // namespace factor::detail
