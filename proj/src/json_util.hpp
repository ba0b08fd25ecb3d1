#pragma once

// JSON helpers shared by the file-format readers and writers.

#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "json.hpp"

#include "defcalib/error.hpp"
#include "defcalib/geometry.hpp"
#include "defcalib/io.hpp"
#include "defcalib/target.hpp"

namespace defcalib::io::detail {

using json = nlohmann::ordered_json;

[[noreturn]] inline void schema_error(const std::string& message) {
  throw CalibError(ErrorCode::Schema, message);
}

// Read-only view of a JSON value that remembers its path for diagnostics.
class Node {
 public:
  Node(const json& value, std::string path) : value_(&value), path_(std::move(path)) {}

  const std::string& path() const { return path_; }
  const json& raw() const { return *value_; }

  bool has(const char* key) const { return value_->is_object() && value_->contains(key) && !(*value_)[key].is_null(); }

  Node at(const char* key) const {
    require_object();
    if (!has(key)) schema_error("missing required field '" + child_path(key) + "'");
    return Node((*value_)[key], child_path(key));
  }
  std::optional<Node> find(const char* key) const {
    require_object();
    if (!has(key)) return std::nullopt;
    return Node((*value_)[key], child_path(key));
  }

  std::size_t size() const {
    if (!value_->is_array()) schema_error("field '" + path_ + "' must be an array");
    return value_->size();
  }
  Node operator[](std::size_t i) const {
    size();
    return Node((*value_)[i], path_ + "[" + std::to_string(i) + "]");
  }

  double number() const {
    if (!value_->is_number()) schema_error("field '" + path_ + "' must be a number");
    const double v = value_->get<double>();
    if (!std::isfinite(v)) schema_error("field '" + path_ + "' must be finite");
    return v;
  }
  long long integer() const {
    if (!value_->is_number_integer()) schema_error("field '" + path_ + "' must be an integer");
    return value_->get<long long>();
  }
  int int32() const {
    const long long v = integer();
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
      schema_error("field '" + path_ + "' is out of range");
    }
    return static_cast<int>(v);
  }
  std::string string() const {
    if (!value_->is_string()) schema_error("field '" + path_ + "' must be a string");
    return value_->get<std::string>();
  }
  bool boolean() const {
    if (!value_->is_boolean()) schema_error("field '" + path_ + "' must be a boolean");
    return value_->get<bool>();
  }

 private:
  void require_object() const {
    if (!value_->is_object()) schema_error("field '" + (path_.empty() ? "<root>" : path_) + "' must be an object");
  }
  std::string child_path(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* value_;
  std::string path_;
};

inline json parse_document(const std::string& text, const char* expected_kind) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    schema_error(std::string("malformed JSON: ") + e.what());
  }
  const Node root(doc, "");
  const long long version = root.at("schema_version").integer();
  if (version != kSchemaVersion) {
    schema_error("unsupported schema_version " + std::to_string(version) + " (expected " +
                 std::to_string(kSchemaVersion) + ")");
  }
  if (expected_kind != nullptr) {
    const std::string kind = root.at("kind").string();
    if (kind != expected_kind) schema_error("expected a '" + std::string(expected_kind) + "' document, got '" + kind + "'");
  }
  return doc;
}

inline json header(const char* kind) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = kind;
  j["units"] = {{"length", "m"}, {"image", "px"}, {"angle", "rad"}};
  return j;
}

inline json to_json(const TargetSpec& spec) {
  return {{"rows", spec.rows}, {"cols", spec.cols}, {"spacing", spec.spacing}};
}

inline TargetSpec target_from(const Node& n) {
  TargetSpec spec{n.at("rows").int32(), n.at("cols").int32(), n.at("spacing").number()};
  try {
    spec.validate();
  } catch (const CalibError& e) {
    schema_error("field '" + n.path() + "': " + e.what());
  }
  return spec;
}

inline json to_json(const ImageSize& size) { return {{"width", size.width}, {"height", size.height}}; }

inline ImageSize image_from(const Node& n) {
  ImageSize size{n.at("width").int32(), n.at("height").int32()};
  if (size.width <= 0 || size.height <= 0) schema_error("field '" + n.path() + "' must have a positive size");
  return size;
}

inline json to_json(const Intrinsics& k) {
  return {{"fx", k.fx}, {"fy", k.fy}, {"ppx", k.ppx}, {"ppy", k.ppy}, {"k1", k.k1}, {"k2", k.k2}, {"k3", k.k3}};
}

inline Intrinsics intrinsics_from(const Node& n) {
  Intrinsics k;
  k.fx = n.at("fx").number();
  k.fy = n.at("fy").number();
  k.ppx = n.at("ppx").number();
  k.ppy = n.at("ppy").number();
  k.k1 = n.at("k1").number();
  k.k2 = n.at("k2").number();
  k.k3 = n.at("k3").number();
  if (!k.is_valid()) schema_error("field '" + n.path() + "' has non-positive focal lengths");
  return k;
}

inline json vec3(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

inline Eigen::Vector3d vec3_from(const Node& n) {
  if (n.size() != 3) schema_error("field '" + n.path() + "' must have 3 entries");
  return {n[0].number(), n[1].number(), n[2].number()};
}

inline json to_json(const Pose& p) { return {{"rotation", vec3(p.rotation)}, {"translation", vec3(p.translation)}}; }

inline Pose pose_from(const Node& n) { return {vec3_from(n.at("rotation")), vec3_from(n.at("translation"))}; }

inline std::string dump(const json& j) { return j.dump(1) + "\n"; }


}  // namespace defcalib::io::detail
