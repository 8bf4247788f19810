#pragma once

// Core data model: x-scales, attributes, detector geometry, spectra and
// datasets. Every type validates its invariants on construction and is
// immutable afterwards; operations build new values instead of mutating.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace tofbench {

using Vec3 = std::array<double, 3>;

/// Histogram x-axis: either a uniform grid or an explicit list of edges.
/// Bin membership is half-open [edge(i), edge(i+1)); the last edge is
/// exclusive.
class XScale {
public:
  static XScale uniform(double start, double end, std::uint32_t nbins);
  static XScale explicit_edges(std::vector<double> edges);

  bool is_uniform() const noexcept { return edges_.empty(); }
  std::uint32_t bin_count() const noexcept;
  std::size_t edge_count() const noexcept { return bin_count() + 1u; }

  double edge(std::size_t i) const;
  double front() const noexcept;
  double back() const noexcept;
  double bin_width(std::size_t i) const { return edge(i + 1) - edge(i); }
  double bin_center(std::size_t i) const {
    return 0.5 * (edge(i) + edge(i + 1));
  }

  /// Materialised edge list (bin_count() + 1 values).
  std::vector<double> edges() const;
  /// Stored explicit edges; empty for uniform scales.
  std::span<const double> explicit_edge_values() const noexcept {
    return edges_;
  }
  double uniform_start() const noexcept { return start_; }
  double uniform_end() const noexcept { return end_; }

  std::optional<std::uint32_t> bin_index(double x) const;

  /// Sub-scale covering bins [first, last). Uniform scales stay uniform.
  XScale slice(std::uint32_t first, std::uint32_t last) const;

  bool operator==(const XScale &) const = default;

private:
  XScale() = default;

  double start_ = 0.0;
  double end_ = 0.0;
  std::uint32_t nbins_ = 0;
  std::vector<double> edges_;
};

inline XScale make_uniform_xscale(double start, double end,
                                  std::uint32_t nbins) {
  return XScale::uniform(start, end, nbins);
}

inline std::optional<std::uint32_t> bin_index(const XScale &xs, double x) {
  return xs.bin_index(x);
}

using AttrValue = std::variant<double, std::int64_t, std::string, Vec3>;

/// Reserved attribute names and the value type each must carry.
namespace attr {
inline constexpr std::string_view run_number = "run_number";
inline constexpr std::string_view start_time = "start_time";
inline constexpr std::string_view label = "label";
inline constexpr std::string_view bank_angle_deg = "bank_angle_deg";
inline constexpr std::string_view row = "row";
inline constexpr std::string_view col = "col";
inline constexpr std::string_view monitor = "monitor";
} // namespace attr

struct Attribute {
  Attribute(std::string name, AttrValue value);

  std::string name;
  AttrValue value;

  bool operator==(const Attribute &) const = default;
};

using Attributes = std::vector<Attribute>;

const AttrValue *find_attribute(const Attributes &attrs, std::string_view name);
/// Numeric view of an f64/i64 attribute value; nullopt for strings/triples.
std::optional<double> as_number(const AttrValue &v);
std::string to_string(const AttrValue &v);
/// Equality with numeric coercion between f64 and i64.
bool attr_value_equal(const AttrValue &a, const AttrValue &b);

/// Pixel geometry relative to the sample, beam along +z.
class DetectorGeometry {
public:
  DetectorGeometry(Vec3 position, double initial_path_m, double solid_angle,
                   double efficiency);

  const Vec3 &position() const noexcept { return position_; }
  double initial_path() const noexcept { return initial_path_; }
  double solid_angle() const noexcept { return solid_angle_; }
  double efficiency() const noexcept { return efficiency_; }

  double secondary_path() const noexcept;
  double total_path() const noexcept {
    return initial_path_ + secondary_path();
  }
  /// Full scattering angle between +z and the pixel direction.
  double two_theta() const noexcept;
  /// Bragg half-angle.
  double theta() const noexcept { return 0.5 * two_theta(); }

  bool operator==(const DetectorGeometry &) const = default;

private:
  Vec3 position_;
  double initial_path_;
  double solid_angle_;
  double efficiency_;
};

class Spectrum {
public:
  /// Missing errors default to sqrt(max(counts, 0)).
  Spectrum(std::uint32_t id, XScale xscale, std::vector<float> counts,
           std::optional<std::vector<float>> errors = std::nullopt,
           Attributes attrs = {}, std::string label = {},
           std::uint32_t group_id = 0,
           std::optional<DetectorGeometry> geometry = std::nullopt);

  std::uint32_t id() const noexcept { return id_; }
  std::uint32_t group_id() const noexcept { return group_id_; }
  const std::string &label() const noexcept { return label_; }
  const XScale &xscale() const noexcept { return xscale_; }
  std::span<const float> counts() const noexcept { return counts_; }
  std::span<const float> errors() const noexcept { return errors_; }
  const std::optional<DetectorGeometry> &geometry() const noexcept {
    return geometry_;
  }
  const Attributes &attributes() const noexcept { return attrs_; }
  const AttrValue *attribute(std::string_view name) const {
    return find_attribute(attrs_, name);
  }

  double total_counts() const noexcept;

  Spectrum with_id(std::uint32_t id) const;
  Spectrum with_label(std::string label) const;
  Spectrum with_xscale(XScale xscale) const;
  Spectrum with_geometry(std::optional<DetectorGeometry> g) const;
  Spectrum with_data(XScale xscale, std::vector<float> counts,
                     std::vector<float> errors) const;
  /// Bins [first, last) of this spectrum.
  Spectrum slice_bins(std::uint32_t first, std::uint32_t last) const;

  bool operator==(const Spectrum &) const = default;

private:
  std::uint32_t id_;
  std::uint32_t group_id_;
  std::string label_;
  XScale xscale_;
  std::vector<float> counts_;
  std::vector<float> errors_;
  std::optional<DetectorGeometry> geometry_;
  Attributes attrs_;
};

inline Spectrum new_spectrum(XScale xscale, std::vector<float> counts,
                             std::optional<std::vector<float>> errors = {},
                             Attributes attrs = {}) {
  return Spectrum(0, std::move(xscale), std::move(counts), std::move(errors),
                  std::move(attrs));
}

enum class XUnits : std::uint8_t {
  tof_us = 0,
  wavelength_A = 1,
  dspacing_A = 2,
  Q_invA = 3
};

std::string_view to_string(XUnits u);
XUnits parse_xunits(std::string_view s);

class DataSet {
public:
  DataSet(std::string title, XUnits x_units, std::string y_units,
          std::vector<Spectrum> spectra, Attributes attrs = {});

  static DataSet empty(XUnits units, std::string title = {}) {
    return DataSet(std::move(title), units, "counts", {});
  }

  const std::string &title() const noexcept { return title_; }
  XUnits x_units() const noexcept { return x_units_; }
  const std::string &y_units() const noexcept { return y_units_; }
  const std::vector<Spectrum> &spectra() const noexcept { return spectra_; }
  const Attributes &attributes() const noexcept { return attrs_; }
  const AttrValue *attribute(std::string_view name) const {
    return find_attribute(attrs_, name);
  }
  std::size_t size() const noexcept { return spectra_.size(); }
  bool is_empty() const noexcept { return spectra_.empty(); }

  const Spectrum *find(std::uint32_t id) const;

  DataSet with_spectra(std::vector<Spectrum> spectra) const;
  DataSet with_attributes(Attributes attrs) const;
  DataSet with_title(std::string title) const;
  DataSet with_units(XUnits units, std::vector<Spectrum> spectra) const;

  bool operator==(const DataSet &) const = default;

private:
  std::string title_;
  XUnits x_units_;
  std::string y_units_;
  std::vector<Spectrum> spectra_;
  Attributes attrs_;
};

DataSet dataset_select(const DataSet &ds, std::span<const std::uint32_t> ids);

/// Histogram bytes for a detector of n_pixels x n_channels. When data are
/// grouped before storage pass the number of stored groups as
/// effective_groups; it replaces n_pixels in the product.
std::uint64_t
estimate_dataset_size(std::uint64_t n_pixels, std::uint64_t n_channels,
                      std::uint64_t bytes_per_bin = 4,
                      std::optional<std::uint64_t> effective_groups = {});

/// counts + errors at 4 bytes per value, explicit edges at 8 bytes each.
std::uint64_t dataset_payload_bytes(const DataSet &ds);

} // namespace tofbench
