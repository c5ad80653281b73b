#pragma once
// Validator for the JSON Schema subset used by schema/state_frame.schema.json.

#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace schema_check {

using nlohmann::json;

inline json load(const std::string& path) {
  std::ifstream in(path);
  return json::parse(in);
}

inline bool type_matches(const json& v, const std::string& t) {
  if (t == "object") return v.is_object();
  if (t == "array") return v.is_array();
  if (t == "string") return v.is_string();
  if (t == "boolean") return v.is_boolean();
  if (t == "null") return v.is_null();
  if (t == "integer") return v.is_number_integer();
  if (t == "number") return v.is_number();
  return false;
}

/// Appends one message per violation of `s` by `v` to `errors`.
inline void validate(const json& root, const json& s, const json& v, const std::string& path,
                     std::vector<std::string>& errors) {
  if (s.contains("$ref")) {
    const std::string ref = s["$ref"];
    validate(root, root.at(json::json_pointer(ref.substr(1))), v, path, errors);
    return;
  }
  const auto fail = [&](const std::string& what) { errors.push_back(path + ": " + what); };
  if (s.contains("type")) {
    bool ok = false;
    if (s["type"].is_array()) {
      for (const auto& t : s["type"]) ok = ok || type_matches(v, t);
    } else {
      ok = type_matches(v, s["type"]);
    }
    if (!ok) return fail("expected type " + s["type"].dump() + ", got " + v.dump());
  }
  if (s.contains("const") && v != s["const"]) fail("expected " + s["const"].dump());
  if (s.contains("enum") && std::find(s["enum"].begin(), s["enum"].end(), v) == s["enum"].end())
    fail(v.dump() + " not in " + s["enum"].dump());
  if (v.is_number()) {
    const double x = v.get<double>();
    if (s.contains("minimum") && x < s["minimum"].get<double>()) fail("below minimum");
    if (s.contains("maximum") && x > s["maximum"].get<double>()) fail("above maximum");
    if (s.contains("exclusiveMinimum") && x <= s["exclusiveMinimum"].get<double>()) fail("not above exclusiveMinimum");
  }
  if (v.is_string()) {
    const auto n = v.get<std::string>().size();
    if (s.contains("minLength") && n < s["minLength"].get<std::size_t>()) fail("shorter than minLength");
    if (s.contains("maxLength") && n > s["maxLength"].get<std::size_t>()) fail("longer than maxLength");
  }
  if (v.is_array()) {
    if (s.contains("minItems") && v.size() < s["minItems"].get<std::size_t>()) fail("fewer than minItems");
    if (s.contains("maxItems") && v.size() > s["maxItems"].get<std::size_t>()) fail("more than maxItems");
    if (s.contains("items"))
      for (std::size_t i = 0; i < v.size(); ++i)
        validate(root, s["items"], v[i], path + "/" + std::to_string(i), errors);
  }
  if (v.is_object()) {
    if (s.contains("required"))
      for (const auto& k : s["required"])
        if (!v.contains(k.get<std::string>())) fail("missing " + k.get<std::string>());
    const json props = s.value("properties", json::object());
    for (const auto& [k, sub] : v.items()) {
      if (props.contains(k)) {
        validate(root, props[k], sub, path + "/" + k, errors);
      } else if (s.contains("additionalProperties") && s["additionalProperties"] == false) {
        fail("unexpected property " + k);
      }
    }
  }
}

inline std::vector<std::string> validate(const json& root, const json& s, const json& v) {
  std::vector<std::string> errors;
  validate(root, s, v, "", errors);
  return errors;
}

inline std::vector<std::string> validate(const json& root, const json& v) { return validate(root, root, v); }

inline std::vector<std::string> validate_def(const json& root, const std::string& def, const json& v) {
  return validate(root, root.at("$defs").at(def), v);
}

}  // namespace schema_check
