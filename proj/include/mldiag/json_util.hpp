#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <string>
#include <string_view>
#include <system_error>

#include <json.hpp>

#include "mldiag/error.hpp"

namespace mldiag::json {

using Json = nlohmann::json;

inline std::size_t line_of_offset(std::string_view text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + offset, '\n'));
}

inline Json parse(std::string_view text, std::string_view what) {
  try {
    return Json::parse(text.begin(), text.end());
  } catch (const Json::parse_error& e) {
    // nlohmann reports the byte *after* the offending character.
    const std::size_t byte = e.byte > 0 ? e.byte - 1 : 0;
    throw ParseError("malformed JSON: " + std::string(e.what()), std::string(what),
                     line_of_offset(text, byte));
  }
}

inline std::string child(const std::string& locus, std::string_view key) {
  return locus.empty() ? std::string(key) : locus + "." + std::string(key);
}

inline std::string index(const std::string& locus, std::size_t i) {
  return locus + "[" + std::to_string(i) + "]";
}

inline const Json& expect_object(const Json& j, const std::string& locus) {
  if (!j.is_object()) throw ParseError("expected an object", locus);
  return j;
}

inline const Json& expect_array(const Json& j, const std::string& locus) {
  if (!j.is_array()) throw ParseError("expected an array", locus);
  return j;
}

inline void reject_unknown_keys(const Json& obj, std::initializer_list<std::string_view> allowed,
                                const std::string& locus) {
  expect_object(obj, locus);
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ParseError("unknown key \"" + key + "\"", locus);
  }
}

inline const Json& require(const Json& obj, std::string_view key, const std::string& locus) {
  expect_object(obj, locus);
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError("missing required key \"" + std::string(key) + "\"", locus);
  return *it;
}

inline std::string get_string(const Json& j, const std::string& locus) {
  if (!j.is_string()) throw ParseError("expected a string", locus);
  return j.get<std::string>();
}

inline double get_number(const Json& j, const std::string& locus) {
  if (!j.is_number()) throw ParseError("expected a number", locus);
  return j.get<double>();
}

inline std::int64_t get_int(const Json& j, const std::string& locus) {
  if (j.is_number_integer()) return j.get<std::int64_t>();
  if (j.is_number_float()) {
    const double v = j.get<double>();
    if (v == static_cast<double>(static_cast<std::int64_t>(v))) return static_cast<std::int64_t>(v);
  }
  throw ParseError("expected an integer", locus);
}

inline std::uint64_t get_uint(const Json& j, const std::string& locus) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  const std::int64_t v = get_int(j, locus);
  if (v < 0) throw ParseError("expected a non-negative integer", locus);
  return static_cast<std::uint64_t>(v);
}

inline bool get_bool(const Json& j, const std::string& locus) {
  if (!j.is_boolean()) throw ParseError("expected a boolean", locus);
  return j.get<bool>();
}

// Shortest decimal form that parses back to the identical double.
inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) return "nan";
  return std::string(buf, end);
}

inline std::string dump(const Json& j, bool pretty = true) {
  return j.dump(pretty ? 2 : -1) + "\n";
}

}  // namespace mldiag::json
