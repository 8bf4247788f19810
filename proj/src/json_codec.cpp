#include "json_codec.hpp"

#include "tofbench/base64.hpp"
#include "tofbench/error.hpp"

#include <fmt/format.h>

#include <cmath>
#include <cstring>

namespace tofbench::jsonc {

namespace {

double finite(double v, std::string_view what) {
  if (!std::isfinite(v))
    throw DataError(fmt::format("{} is not finite and cannot be stored as JSON",
                                what));
  return v;
}

template <class T> std::string array_to_base64(std::span<const T> v) {
  return base64_encode(std::as_bytes(v));
}

template <class T> std::vector<T> array_from_base64(const Node &n) {
  auto bytes = base64_decode(n.string());
  if (!bytes)
    n.fail("invalid base64 payload");
  if (bytes->size() % sizeof(T) != 0)
    n.fail(fmt::format("payload of {} bytes is not a whole number of {}-byte "
                       "values",
                       bytes->size(), sizeof(T)));
  std::vector<T> out(bytes->size() / sizeof(T));
  if (!out.empty())
    std::memcpy(out.data(), bytes->data(), bytes->size());
  return out;
}

} // namespace

json attribute_to_json(const Attribute &a) {
  json j{{"name", a.name}};
  std::visit(
      [&](const auto &v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, double>) {
          j["type"] = "f64";
          j["value"] = finite(v, a.name);
        } else if constexpr (std::is_same_v<T, std::int64_t>) {
          j["type"] = "i64";
          j["value"] = v;
        } else if constexpr (std::is_same_v<T, std::string>) {
          j["type"] = "string";
          j["value"] = v;
        } else {
          j["type"] = "vec3";
          j["value"] = json::array(
              {finite(v[0], a.name), finite(v[1], a.name), finite(v[2], a.name)});
        }
      },
      a.value);
  return j;
}

json attributes_to_json(const Attributes &attrs) {
  json arr = json::array();
  for (const auto &a : attrs)
    arr.push_back(attribute_to_json(a));
  return arr;
}

json geometry_to_json(const std::optional<DetectorGeometry> &g) {
  if (!g)
    return nullptr;
  const auto &p = g->position();
  return {{"position", {p[0], p[1], p[2]}},
          {"L1", g->initial_path()},
          {"solid_angle", finite(g->solid_angle(), "solid_angle")},
          {"efficiency", finite(g->efficiency(), "efficiency")}};
}

json xscale_to_json(const XScale &xs, bool base64_edges) {
  if (xs.is_uniform())
    return {{"kind", "uniform"},
            {"start", xs.uniform_start()},
            {"end", xs.uniform_end()},
            {"nbins", xs.bin_count()}};
  json j{{"kind", "explicit"}};
  if (base64_edges)
    j["edges"] = array_to_base64(xs.explicit_edge_values());
  else
    j["edges"] = std::vector<double>(xs.explicit_edge_values().begin(),
                                     xs.explicit_edge_values().end());
  return j;
}

Node Node::operator[](std::string_view key) const {
  if (!j_.is_object())
    fail("expected an object");
  auto it = j_.find(key);
  if (it == j_.end())
    throw SchemaError(path_ + "/" + std::string(key), "missing required key");
  return Node(*it, path_ + "/" + std::string(key));
}

Node Node::operator[](std::size_t index) const {
  if (!j_.is_array())
    fail("expected an array");
  if (index >= j_.size())
    fail(fmt::format("index {} out of range", index));
  return Node(j_[index], fmt::format("{}/{}", path_, index));
}

bool Node::has(std::string_view key) const {
  return j_.is_object() && j_.contains(key);
}

std::size_t Node::size() const {
  if (!j_.is_array())
    fail("expected an array");
  return j_.size();
}

double Node::number() const {
  if (!j_.is_number())
    fail("expected a number");
  return j_.get<double>();
}

std::int64_t Node::integer() const {
  if (!j_.is_number_integer())
    fail("expected an integer");
  return j_.get<std::int64_t>();
}

std::uint32_t Node::u32() const {
  if (!j_.is_number_unsigned() || j_.get<std::uint64_t>() > UINT32_MAX)
    fail("expected an unsigned 32-bit integer");
  return j_.get<std::uint32_t>();
}

std::string Node::string() const {
  if (!j_.is_string())
    fail("expected a string");
  return j_.get<std::string>();
}

Attribute attribute_from_json(const Node &n) {
  const auto name = n["name"].string();
  const auto type = n["type"].string();
  const auto v = n["value"];
  try {
    if (type == "f64")
      return Attribute(name, v.number());
    if (type == "i64")
      return Attribute(name, v.integer());
    if (type == "string")
      return Attribute(name, v.string());
    if (type == "vec3") {
      if (v.size() != 3)
        v.fail("vec3 needs exactly three numbers");
      return Attribute(name, Vec3{v[0].number(), v[1].number(), v[2].number()});
    }
  } catch (const SchemaError &) {
    throw;
  } catch (const DataError &e) {
    n.fail(e.what());
  }
  n["type"].fail(fmt::format("unknown attribute type '{}'", type));
}

Attributes attributes_from_json(const Node &n) {
  Attributes out;
  for (std::size_t i = 0; i < n.size(); ++i)
    out.push_back(attribute_from_json(n[i]));
  return out;
}

std::optional<DetectorGeometry> geometry_from_json(const Node &n) {
  if (n.is_null())
    return std::nullopt;
  const auto p = n["position"];
  if (p.size() != 3)
    p.fail("position needs exactly three numbers");
  try {
    return DetectorGeometry({p[0].number(), p[1].number(), p[2].number()},
                            n["L1"].number(), n["solid_angle"].number(),
                            n["efficiency"].number());
  } catch (const SchemaError &) {
    throw;
  } catch (const DataError &e) {
    n.fail(e.what());
  }
}

XScale xscale_from_json(const Node &n) {
  const auto kind = n["kind"].string();
  try {
    if (kind == "uniform")
      return XScale::uniform(n["start"].number(), n["end"].number(),
                             n["nbins"].u32());
    if (kind == "explicit") {
      const auto e = n["edges"];
      if (e.raw().is_string())
        return XScale::explicit_edges(array_from_base64<double>(e));
      std::vector<double> edges;
      for (std::size_t i = 0; i < e.size(); ++i)
        edges.push_back(e[i].number());
      return XScale::explicit_edges(std::move(edges));
    }
  } catch (const SchemaError &) {
    throw;
  } catch (const DataError &e) {
    n.fail(e.what());
  }
  n["kind"].fail(fmt::format("unknown x-scale kind '{}'", kind));
}

std::string floats_to_base64(std::span<const float> v) {
  return array_to_base64(v);
}

std::vector<float> floats_from_base64(const Node &n) {
  return array_from_base64<float>(n);
}

} // namespace tofbench::jsonc
