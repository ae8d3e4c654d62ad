#pragma once

#include <cmath>
#include <filesystem>
#include <set>
#include <string>

#include "json.hpp"
#include "tubespoof/error.hpp"

namespace tubespoof::jsonutil {

/// Reads fields from a JSON object and rejects keys nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const nlohmann::json& j, std::string context) : j_(j), ctx_(std::move(context)) {
    if (!j.is_object()) fail(ErrorCode::Format, ctx_ + ": expected a JSON object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  void mark(const std::string& key) { seen_.insert(key); }

  const nlohmann::json& at(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) fail(ErrorCode::Format, ctx_ + ": missing key '" + key + "'");
    return j_.at(key);
  }

  double number(const std::string& key) {
    const auto& v = at(key);
    if (!v.is_number()) fail(ErrorCode::Format, ctx_ + ": '" + key + "' must be a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(ErrorCode::Format, ctx_ + ": '" + key + "' must be finite");
    return d;
  }

  double optional_number(const std::string& key, double fallback) {
    return has(key) ? number(key) : (mark(key), fallback);
  }

  long long integer(const std::string& key) {
    const auto& v = at(key);
    if (!v.is_number_integer()) fail(ErrorCode::Format, ctx_ + ": '" + key + "' must be an integer");
    return v.get<long long>();
  }

  int optional_int(const std::string& key, int fallback) {
    return has(key) ? static_cast<int>(integer(key)) : (mark(key), fallback);
  }

  std::uint64_t optional_u64(const std::string& key, std::uint64_t fallback) {
    if (!has(key)) return fallback;
    const auto& v = at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
      fail(ErrorCode::Format, ctx_ + ": '" + key + "' must be a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }

  std::string string(const std::string& key) {
    const auto& v = at(key);
    if (!v.is_string()) fail(ErrorCode::Format, ctx_ + ": '" + key + "' must be a string");
    return v.get<std::string>();
  }

  std::string optional_string(const std::string& key, const std::string& fallback) {
    return has(key) ? string(key) : (mark(key), fallback);
  }

  template <typename T>
  T get(const std::string& key) {
    try {
      return at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      fail(ErrorCode::Format, ctx_ + ": '" + key + "' has the wrong type");
    }
  }

  /// Throws if the object carries keys that were never read.
  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) fail(ErrorCode::Format, ctx_ + ": unknown key '" + key + "'");
    }
  }

 private:
  const nlohmann::json& j_;
  std::string ctx_;
  std::set<std::string> seen_;
};

nlohmann::json read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const nlohmann::json& j);
/// Two-space indented, keys in insertion order of the serializer.
std::string dump(const nlohmann::json& j);

}  // namespace tubespoof::jsonutil
