#pragma once

// JSON forms of data-model pieces, shared by the hierarchical export, the
// ASCII metadata lines and the HTTP API.

#include "tofbench/dataset.hpp"
#include "tofbench/error.hpp"

#include "json.hpp"

#include <string>

namespace tofbench::jsonc {

using nlohmann::json;

/// Raised for schema violations; the message leads with the JSON path.
class SchemaError : public DataError {
public:
  SchemaError(const std::string &path, const std::string &what)
      : DataError(path + ": " + what), path_(path) {}
  const std::string &path() const noexcept { return path_; }

private:
  std::string path_;
};

json attribute_to_json(const Attribute &a);
json attributes_to_json(const Attributes &attrs);
json geometry_to_json(const std::optional<DetectorGeometry> &g);
/// Uniform scales keep their (start, end, nbins) form; explicit edges are
/// written either as a number array or as base64 little-endian f64.
json xscale_to_json(const XScale &xs, bool base64_edges);

/// Cursor for reading a JSON tree while tracking the path for errors.
class Node {
public:
  Node(const json &j, std::string path) : j_(j), path_(std::move(path)) {}

  Node operator[](std::string_view key) const;
  Node operator[](std::size_t index) const;
  bool has(std::string_view key) const;
  bool is_null() const { return j_.is_null(); }
  std::size_t size() const;

  double number() const;
  std::int64_t integer() const;
  std::uint32_t u32() const;
  std::string string() const;
  const json &raw() const noexcept { return j_; }
  const std::string &path() const noexcept { return path_; }

  [[noreturn]] void fail(const std::string &what) const {
    throw SchemaError(path_, what);
  }

private:
  const json &j_;
  std::string path_;
};

Attribute attribute_from_json(const Node &n);
Attributes attributes_from_json(const Node &n);
std::optional<DetectorGeometry> geometry_from_json(const Node &n);
XScale xscale_from_json(const Node &n);

std::string floats_to_base64(std::span<const float> v);
std::vector<float> floats_from_base64(const Node &n);

} // namespace tofbench::jsonc
