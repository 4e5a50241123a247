#pragma once

// Read-only view of a JSON value that remembers where it sits in the
// document, so schema errors can name the offending field ("$.cameras[2].fx").

#include <cstdint>
#include <initializer_list>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "skelsplat/errors.hpp"
#include "skelsplat/geometry.hpp"

namespace skelsplat {

using Json = nlohmann::json;

class JsonNode {
 public:
  JsonNode(const Json& j, std::string path) : j_(&j), path_(std::move(path)) {}

  const Json& raw() const { return *j_; }
  const std::string& path() const { return path_; }

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorKind::Schema, path_ + ": " + what);
  }

  bool is_object() const { return j_->is_object(); }

  bool has(const std::string& key) const {
    return j_->is_object() && j_->contains(key);
  }

  JsonNode at(const std::string& key) const {
    if (!j_->is_object()) fail("expected an object");
    const auto it = j_->find(key);
    if (it == j_->end()) fail("missing required key '" + key + "'");
    return {*it, path_ + "." + key};
  }

  std::optional<JsonNode> find(const std::string& key) const {
    if (!j_->is_object()) fail("expected an object");
    const auto it = j_->find(key);
    if (it == j_->end() || it->is_null()) return std::nullopt;
    return JsonNode(*it, path_ + "." + key);
  }

  std::size_t size() const {
    if (!j_->is_array()) fail("expected an array");
    return j_->size();
  }

  JsonNode operator[](std::size_t i) const {
    if (!j_->is_array()) fail("expected an array");
    if (i >= j_->size()) fail("index " + std::to_string(i) + " out of range");
    return {(*j_)[i], path_ + "[" + std::to_string(i) + "]"};
  }

  /// Rejects keys outside `allowed`; catches misspelled fields.
  void only_keys(std::initializer_list<const char*> allowed) const {
    if (!j_->is_object()) fail("expected an object");
    for (const auto& [k, v] : j_->items()) {
      bool ok = false;
      for (const char* a : allowed) ok = ok || k == a;
      if (!ok) fail("unknown key '" + k + "'");
    }
  }

  double number() const {
    if (!j_->is_number()) fail("expected a number");
    return j_->get<double>();
  }

  int integer() const {
    if (!j_->is_number_integer()) fail("expected an integer");
    return j_->get<int>();
  }

  std::uint64_t uinteger() const {
    if (!j_->is_number_unsigned() && !(j_->is_number_integer() && j_->get<std::int64_t>() >= 0)) {
      fail("expected a non-negative integer");
    }
    return j_->get<std::uint64_t>();
  }

  bool boolean() const {
    if (!j_->is_boolean()) fail("expected a boolean");
    return j_->get<bool>();
  }

  std::string str() const {
    if (!j_->is_string()) fail("expected a string");
    return j_->get<std::string>();
  }

  std::vector<double> numbers() const {
    std::vector<double> v(size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = (*this)[i].number();
    return v;
  }

  std::vector<int> integers() const {
    std::vector<int> v(size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = (*this)[i].integer();
    return v;
  }

  template <int N>
  Eigen::Matrix<double, N, 1> vec() const {
    if (size() != static_cast<std::size_t>(N)) fail("expected " + std::to_string(N) + " numbers");
    Eigen::Matrix<double, N, 1> v;
    for (int i = 0; i < N; ++i) v[i] = (*this)[i].number();
    return v;
  }

  Mat3 mat3() const {
    if (size() != 3) fail("expected 3 rows");
    Mat3 m;
    for (int r = 0; r < 3; ++r) m.row(r) = (*this)[r].vec<3>().transpose();
    return m;
  }

 private:
  const Json* j_;
  std::string path_;
};

inline Json to_json(const Vec2& v) { return Json::array({v.x(), v.y()}); }
inline Json to_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }
inline Json to_json(const Vec4& v) { return Json::array({v[0], v[1], v[2], v[3]}); }
inline Json to_json(const Mat3& m) {
  Json rows = Json::array();
  for (int r = 0; r < 3; ++r) rows.push_back(to_json(Vec3(m.row(r).transpose())));
  return rows;
}

/// Parses text; syntax errors become Schema errors.
inline Json parse_json(const std::string& text, const std::string& source) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorKind::Schema, source + ": " + e.what());
  }
}

}  // namespace skelsplat
