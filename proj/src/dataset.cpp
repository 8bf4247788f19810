#include "tofbench/dataset.hpp"

#include "tofbench/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

namespace tofbench {

// XScale

XScale XScale::uniform(double start, double end, std::uint32_t nbins) {
  if (nbins == 0)
    throw DataError("uniform x-scale needs at least one bin");
  if (!(start < end) || !std::isfinite(start) || !std::isfinite(end))
    throw DataError(
        fmt::format("uniform x-scale needs start < end (got {} .. {})", start,
                    end));
  XScale xs;
  xs.start_ = start;
  xs.end_ = end;
  xs.nbins_ = nbins;
  return xs;
}

XScale XScale::explicit_edges(std::vector<double> edges) {
  if (edges.size() < 2)
    throw DataError("explicit x-scale needs at least two edges");
  if (edges.size() - 1 > UINT32_MAX)
    throw DataError("explicit x-scale has too many edges");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (!std::isfinite(edges[i]))
      throw DataError(fmt::format("x-scale edge {} is not finite", i));
    if (i > 0 && !(edges[i - 1] < edges[i]))
      throw DataError(fmt::format(
          "x-scale edges not strictly increasing at index {} ({} >= {})", i,
          edges[i - 1], edges[i]));
  }
  XScale xs;
  xs.start_ = edges.front();
  xs.end_ = edges.back();
  xs.nbins_ = static_cast<std::uint32_t>(edges.size() - 1);
  xs.edges_ = std::move(edges);
  return xs;
}

std::uint32_t XScale::bin_count() const noexcept { return nbins_; }

double XScale::front() const noexcept { return start_; }
double XScale::back() const noexcept { return end_; }

double XScale::edge(std::size_t i) const {
  if (i > nbins_)
    throw DataError(fmt::format("edge index {} out of range", i));
  if (!edges_.empty())
    return edges_[i];
  if (i == nbins_)
    return end_;
  return start_ + static_cast<double>(i) * (end_ - start_) / nbins_;
}

std::vector<double> XScale::edges() const {
  if (!edges_.empty())
    return edges_;
  std::vector<double> out(nbins_ + 1u);
  for (std::size_t i = 0; i <= nbins_; ++i)
    out[i] = edge(i);
  return out;
}

std::optional<std::uint32_t> XScale::bin_index(double x) const {
  if (!(x >= start_) || !(x < end_))
    return std::nullopt;
  if (edges_.empty()) {
    auto i = static_cast<std::int64_t>(
        std::floor((x - start_) / (end_ - start_) * nbins_));
    i = std::clamp<std::int64_t>(i, 0, nbins_ - 1);
    // Correct for floating round-off in the division.
    while (i > 0 && x < edge(i))
      --i;
    while (i + 1 < nbins_ && x >= edge(i + 1))
      ++i;
    return static_cast<std::uint32_t>(i);
  }
  auto it = std::upper_bound(edges_.begin(), edges_.end(), x);
  return static_cast<std::uint32_t>(std::distance(edges_.begin(), it) - 1);
}

XScale XScale::slice(std::uint32_t first, std::uint32_t last) const {
  if (!(first < last) || last > nbins_)
    throw DataError(fmt::format("bin range [{}, {}) invalid for {} bins",
                                first, last, nbins_));
  if (edges_.empty())
    return uniform(edge(first), edge(last), last - first);
  return explicit_edges(
      std::vector<double>(edges_.begin() + first, edges_.begin() + last + 1));
}

// Attributes

namespace {

template <class T> bool holds(const AttrValue &v) {
  return std::holds_alternative<T>(v);
}

void check_reserved(const std::string &name, const AttrValue &v) {
  bool ok = true;
  if (name == attr::run_number || name == attr::start_time ||
      name == attr::row || name == attr::col || name == attr::monitor)
    ok = holds<std::int64_t>(v);
  else if (name == attr::label)
    ok = holds<std::string>(v);
  else if (name == attr::bank_angle_deg)
    ok = holds<double>(v);
  if (!ok)
    throw DataError(
        fmt::format("reserved attribute '{}' has the wrong value type", name));
}

} // namespace

Attribute::Attribute(std::string n, AttrValue v)
    : name(std::move(n)), value(std::move(v)) {
  if (name.empty())
    throw DataError("attribute name must not be empty");
  check_reserved(name, value);
}

const AttrValue *find_attribute(const Attributes &attrs,
                                std::string_view name) {
  for (const auto &a : attrs)
    if (a.name == name)
      return &a.value;
  return nullptr;
}

std::optional<double> as_number(const AttrValue &v) {
  if (auto d = std::get_if<double>(&v))
    return *d;
  if (auto i = std::get_if<std::int64_t>(&v))
    return static_cast<double>(*i);
  return std::nullopt;
}

std::string to_string(const AttrValue &v) {
  return std::visit(
      [](const auto &x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, std::string>)
          return x;
        else if constexpr (std::is_same_v<T, Vec3>)
          return fmt::format("{} {} {}", x[0], x[1], x[2]);
        else
          return fmt::format("{}", x);
      },
      v);
}

bool attr_value_equal(const AttrValue &a, const AttrValue &b) {
  auto na = as_number(a);
  auto nb = as_number(b);
  if (na && nb)
    return *na == *nb;
  return a == b;
}

// DetectorGeometry

namespace {
double norm(const Vec3 &v) {
  return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
}
} // namespace

DetectorGeometry::DetectorGeometry(Vec3 position, double initial_path_m,
                                   double solid_angle, double efficiency)
    : position_(position), initial_path_(initial_path_m),
      solid_angle_(solid_angle), efficiency_(efficiency) {
  if (!(norm(position_) > 0.0) || !std::isfinite(norm(position_)))
    throw DataError("detector position must be a nonzero finite vector");
  if (!(initial_path_ > 0.0) || !std::isfinite(initial_path_))
    throw DataError("initial flight path L1 must be positive");
}

double DetectorGeometry::secondary_path() const noexcept {
  return norm(position_);
}

double DetectorGeometry::two_theta() const noexcept {
  // atan2 keeps precision near 0 and pi where acos loses it.
  const double transverse =
      std::hypot(position_[0], position_[1]);
  return std::atan2(transverse, position_[2]);
}

// Spectrum

Spectrum::Spectrum(std::uint32_t id, XScale xscale, std::vector<float> counts,
                   std::optional<std::vector<float>> errors, Attributes attrs,
                   std::string label, std::uint32_t group_id,
                   std::optional<DetectorGeometry> geometry)
    : id_(id), group_id_(group_id), label_(std::move(label)),
      xscale_(std::move(xscale)), counts_(std::move(counts)),
      geometry_(std::move(geometry)), attrs_(std::move(attrs)) {
  if (counts_.size() != xscale_.bin_count())
    throw DataError(fmt::format(
        "spectrum {}: {} counts for an x-scale of {} bins", id_,
        counts_.size(), xscale_.bin_count()));
  if (errors) {
    if (errors->size() != counts_.size())
      throw DataError(fmt::format("spectrum {}: {} errors for {} counts", id_,
                                  errors->size(), counts_.size()));
    errors_ = std::move(*errors);
    for (std::size_t i = 0; i < errors_.size(); ++i)
      if (!(errors_[i] >= 0.0f))
        throw DataError(fmt::format(
            "spectrum {}: error at bin {} is negative or NaN", id_, i));
  } else {
    errors_.resize(counts_.size());
    std::transform(counts_.begin(), counts_.end(), errors_.begin(),
                   [](float c) { return std::sqrt(std::max(c, 0.0f)); });
  }
  std::unordered_set<std::string_view> seen;
  for (const auto &a : attrs_)
    if (!seen.insert(a.name).second)
      throw DataError(
          fmt::format("spectrum {}: duplicate attribute '{}'", id_, a.name));
}

double Spectrum::total_counts() const noexcept {
  return std::accumulate(counts_.begin(), counts_.end(), 0.0);
}

Spectrum Spectrum::with_id(std::uint32_t id) const {
  Spectrum s = *this;
  s.id_ = id;
  return s;
}

Spectrum Spectrum::with_label(std::string label) const {
  Spectrum s = *this;
  s.label_ = std::move(label);
  return s;
}

Spectrum Spectrum::with_xscale(XScale xscale) const {
  if (xscale.bin_count() != xscale_.bin_count())
    throw DataError(fmt::format("spectrum {}: replacement x-scale has {} bins, "
                                "expected {}",
                                id_, xscale.bin_count(), xscale_.bin_count()));
  Spectrum s = *this;
  s.xscale_ = std::move(xscale);
  return s;
}

Spectrum Spectrum::with_geometry(std::optional<DetectorGeometry> g) const {
  Spectrum s = *this;
  s.geometry_ = std::move(g);
  return s;
}

Spectrum Spectrum::with_data(XScale xscale, std::vector<float> counts,
                             std::vector<float> errors) const {
  return Spectrum(id_, std::move(xscale), std::move(counts), std::move(errors),
                  attrs_, label_, group_id_, geometry_);
}

Spectrum Spectrum::slice_bins(std::uint32_t first, std::uint32_t last) const {
  auto xs = xscale_.slice(first, last);
  return with_data(
      std::move(xs),
      std::vector<float>(counts_.begin() + first, counts_.begin() + last),
      std::vector<float>(errors_.begin() + first, errors_.begin() + last));
}

// DataSet

std::string_view to_string(XUnits u) {
  switch (u) {
  case XUnits::tof_us:
    return "tof_us";
  case XUnits::wavelength_A:
    return "wavelength_A";
  case XUnits::dspacing_A:
    return "dspacing_A";
  case XUnits::Q_invA:
    return "Q_invA";
  }
  return "unknown";
}

XUnits parse_xunits(std::string_view s) {
  for (auto u : {XUnits::tof_us, XUnits::wavelength_A, XUnits::dspacing_A,
                 XUnits::Q_invA})
    if (s == to_string(u))
      return u;
  throw DataError(fmt::format("unknown x units '{}'", s));
}

DataSet::DataSet(std::string title, XUnits x_units, std::string y_units,
                 std::vector<Spectrum> spectra, Attributes attrs)
    : title_(std::move(title)), x_units_(x_units), y_units_(std::move(y_units)),
      spectra_(std::move(spectra)), attrs_(std::move(attrs)) {
  std::unordered_set<std::uint32_t> ids;
  ids.reserve(spectra_.size());
  for (const auto &s : spectra_)
    if (!ids.insert(s.id()).second)
      throw DataError(fmt::format("dataset '{}': duplicate spectrum id {}",
                                  title_, s.id()));
  std::unordered_set<std::string_view> names;
  for (const auto &a : attrs_)
    if (!names.insert(a.name).second)
      throw DataError(fmt::format("dataset '{}': duplicate attribute '{}'",
                                  title_, a.name));
}

const Spectrum *DataSet::find(std::uint32_t id) const {
  for (const auto &s : spectra_)
    if (s.id() == id)
      return &s;
  return nullptr;
}

DataSet DataSet::with_spectra(std::vector<Spectrum> spectra) const {
  return DataSet(title_, x_units_, y_units_, std::move(spectra), attrs_);
}

DataSet DataSet::with_attributes(Attributes attrs) const {
  return DataSet(title_, x_units_, y_units_, spectra_, std::move(attrs));
}

DataSet DataSet::with_title(std::string title) const {
  DataSet d = *this;
  d.title_ = std::move(title);
  return d;
}

DataSet DataSet::with_units(XUnits units, std::vector<Spectrum> spectra) const {
  return DataSet(title_, units, y_units_, std::move(spectra), attrs_);
}

DataSet dataset_select(const DataSet &ds, std::span<const std::uint32_t> ids) {
  std::unordered_set<std::uint32_t> wanted(ids.begin(), ids.end());
  for (auto id : ids)
    if (!ds.find(id))
      throw DataError(fmt::format("dataset '{}' has no spectrum with id {}",
                                  ds.title(), id));
  std::vector<Spectrum> out;
  out.reserve(wanted.size());
  for (const auto &s : ds.spectra())
    if (wanted.count(s.id()))
      out.push_back(s);
  return ds.with_spectra(std::move(out));
}

std::uint64_t estimate_dataset_size(std::uint64_t n_pixels,
                                    std::uint64_t n_channels,
                                    std::uint64_t bytes_per_bin,
                                    std::optional<std::uint64_t> effective_groups) {
  const std::uint64_t stored = effective_groups.value_or(n_pixels);
  return stored * n_channels * bytes_per_bin;
}

std::uint64_t dataset_payload_bytes(const DataSet &ds) {
  std::uint64_t total = 0;
  for (const auto &s : ds.spectra()) {
    total += 4ull * (s.counts().size() + s.errors().size());
    total += 8ull * s.xscale().explicit_edge_values().size();
  }
  return total;
}

} // namespace tofbench
