#include "tofbench/operators.hpp"

#include "tofbench/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <unordered_map>

namespace tofbench::ops {

namespace {

constexpr double pi = std::numbers::pi;

bool valid_angle(double theta) { return theta > 0.0 && theta < pi / 2; }

const DetectorGeometry &require_geometry(const Spectrum &s,
                                         std::string_view op) {
  if (!s.geometry())
    throw DataError(
        fmt::format("{}: spectrum {} has no detector geometry", op, s.id()));
  return *s.geometry();
}

std::vector<float> to_float(const std::vector<double> &v) {
  std::vector<float> out(v.size());
  std::transform(v.begin(), v.end(), out.begin(),
                 [](double x) { return static_cast<float>(x); });
  return out;
}

std::vector<float> sqrt_float(const std::vector<double> &v) {
  std::vector<float> out(v.size());
  std::transform(v.begin(), v.end(), out.begin(), [](double x) {
    return static_cast<float>(std::sqrt(std::max(x, 0.0)));
  });
  return out;
}

} // namespace

FocusParams::FocusParams(double theta, double l1, double l2)
    : ref_theta_rad(theta), ref_L1_m(l1), ref_L2_m(l2) {
  if (!valid_angle(ref_theta_rad))
    throw DataError(fmt::format(
        "reference theta {} rad outside (0, pi/2)", ref_theta_rad));
  if (!(ref_L1_m > 0.0) || !(ref_L2_m > 0.0))
    throw DataError("reference flight paths must be positive");
}

double focus_factor(double L_i, double theta_i, double L_r, double theta_r) {
  if (!(L_i > 0.0) || !(L_r > 0.0))
    throw DataError(fmt::format(
        "focus factor needs positive flight paths (got {}, {})", L_i, L_r));
  if (!valid_angle(theta_i) || !valid_angle(theta_r))
    throw DataError(fmt::format(
        "focus factor needs angles in (0, pi/2) (got {}, {})", theta_i,
        theta_r));
  return (L_i * std::sin(theta_i)) / (L_r * std::sin(theta_r));
}

DataSet time_focus(const DataSet &ds, const FocusParams &fp) {
  if (ds.x_units() != XUnits::tof_us)
    throw DataError(fmt::format("time_focus needs tof_us data, got {}",
                                to_string(ds.x_units())));
  const double ref_total = fp.ref_L1_m + fp.ref_L2_m;
  const double ref_two_theta = 2.0 * fp.ref_theta_rad;

  std::vector<Spectrum> out;
  out.reserve(ds.size());
  for (const auto &s : ds.spectra()) {
    const auto &g = require_geometry(s, "time_focus");
    const double f =
        focus_factor(g.total_path(), g.theta(), ref_total, fp.ref_theta_rad);

    const bool at_reference = g.initial_path() == fp.ref_L1_m &&
                              g.secondary_path() == fp.ref_L2_m &&
                              g.theta() == fp.ref_theta_rad;
    if (f == 1.0 && at_reference) {
      out.push_back(s);
      continue;
    }

    const auto &xs = s.xscale();
    XScale scaled = [&] {
      if (xs.is_uniform())
        return XScale::uniform(xs.front() / f, xs.back() / f, xs.bin_count());
      auto e = xs.edges();
      for (auto &t : e)
        t /= f;
      return XScale::explicit_edges(std::move(e));
    }();

    // Keep the detector's azimuth so only L and 2theta move.
    const auto &p = g.position();
    const double phi = std::atan2(p[1], p[0]);
    const double st = std::sin(ref_two_theta);
    DetectorGeometry ref({fp.ref_L2_m * st * std::cos(phi),
                          fp.ref_L2_m * st * std::sin(phi),
                          fp.ref_L2_m * std::cos(ref_two_theta)},
                         fp.ref_L1_m, g.solid_angle(), g.efficiency());
    out.push_back(s.with_xscale(std::move(scaled)).with_geometry(ref));
  }
  return ds.with_spectra(std::move(out));
}

double tof_to_wavelength(double tof_us, double total_path_m) {
  return 1e10 * PhysicalConstants::h_over_mn * (tof_us * 1e-6) / total_path_m;
}

DataSet convert_units(const DataSet &ds, XUnits target) {
  if (ds.x_units() != XUnits::tof_us)
    throw DataError(fmt::format("convert_units needs tof_us source data, got {}",
                                to_string(ds.x_units())));
  if (target == XUnits::tof_us)
    return ds;

  std::vector<Spectrum> out;
  out.reserve(ds.size());
  for (const auto &s : ds.spectra()) {
    const auto &g = require_geometry(s, "convert_units");
    const double L = g.total_path();
    const double sin_theta = std::sin(g.theta());
    if (target != XUnits::wavelength_A && !(sin_theta > 0.0))
      throw DataError(fmt::format(
          "convert_units: spectrum {} has theta = 0, d and Q are undefined",
          s.id()));
    const auto &xs = s.xscale();
    if (xs.front() < 0.0)
      throw DataError(fmt::format(
          "convert_units: spectrum {} has a negative time-of-flight edge",
          s.id()));

    auto map_edge = [&](double t) {
      const double lambda = tof_to_wavelength(t, L);
      switch (target) {
      case XUnits::wavelength_A:
        return lambda;
      case XUnits::dspacing_A:
        return lambda / (2.0 * sin_theta);
      case XUnits::Q_invA:
        if (lambda == 0.0)
          throw DataError(fmt::format(
              "convert_units: spectrum {} has a zero time-of-flight edge, "
              "which maps to infinite Q",
              s.id()));
        return 4.0 * pi * sin_theta / lambda;
      default:
        return t;
      }
    };

    if (target != XUnits::Q_invA) {
      // Wavelength and d are linear in t, so uniform scales stay uniform.
      XScale converted = xs.is_uniform()
                             ? XScale::uniform(map_edge(xs.front()),
                                               map_edge(xs.back()),
                                               xs.bin_count())
                             : [&] {
                                 auto e = xs.edges();
                                 for (auto &t : e)
                                   t = map_edge(t);
                                 return XScale::explicit_edges(std::move(e));
                               }();
      out.push_back(s.with_xscale(std::move(converted)));
      continue;
    }

    auto e = xs.edges();
    std::vector<double> q(e.size());
    for (std::size_t i = 0; i < e.size(); ++i)
      q[e.size() - 1 - i] = map_edge(e[i]);
    std::vector<float> counts(s.counts().rbegin(), s.counts().rend());
    std::vector<float> errors(s.errors().rbegin(), s.errors().rend());
    out.push_back(s.with_data(XScale::explicit_edges(std::move(q)),
                              std::move(counts), std::move(errors)));
  }
  return ds.with_units(target, std::move(out));
}

RebinResult rebin_values(std::span<const double> old_edges,
                         std::span<const double> counts,
                         std::span<const double> variances,
                         std::span<const double> new_edges) {
  if (old_edges.size() != counts.size() + 1 ||
      variances.size() != counts.size())
    throw DataError("rebin: edge/count/variance lengths disagree");
  if (new_edges.size() < 2)
    throw DataError("rebin: target needs at least two edges");

  const std::size_t n_new = new_edges.size() - 1;
  RebinResult r{std::vector<double>(n_new, 0.0),
                std::vector<double>(n_new, 0.0)};
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < counts.size() && j < n_new) {
    const double lo = std::max(old_edges[i], new_edges[j]);
    const double hi = std::min(old_edges[i + 1], new_edges[j + 1]);
    if (hi > lo) {
      const double frac = (hi - lo) / (old_edges[i + 1] - old_edges[i]);
      r.counts[j] += frac * counts[i];
      r.variances[j] += frac * variances[i];
    }
    if (old_edges[i + 1] <= new_edges[j + 1])
      ++i;
    else
      ++j;
  }
  return r;
}

Spectrum rebin(const Spectrum &s, const XScale &new_xscale) {
  if (s.xscale() == new_xscale)
    return s;
  const auto old_edges = s.xscale().edges();
  const auto new_edges = new_xscale.edges();
  std::vector<double> c(s.counts().begin(), s.counts().end());
  std::vector<double> v(s.errors().size());
  std::transform(s.errors().begin(), s.errors().end(), v.begin(),
                 [](float e) { return static_cast<double>(e) * e; });
  auto r = rebin_values(old_edges, c, v, new_edges);
  return s.with_data(new_xscale, to_float(r.counts), sqrt_float(r.variances));
}

DataSet rebin(const DataSet &ds, const XScale &new_xscale) {
  std::vector<Spectrum> out;
  out.reserve(ds.size());
  for (const auto &s : ds.spectra())
    out.push_back(rebin(s, new_xscale));
  return ds.with_spectra(std::move(out));
}

DataSet group_spectra(const DataSet &ds,
                      const std::map<std::uint32_t, std::uint32_t> &grouping) {
  struct Acc {
    const Spectrum *first;
    std::vector<double> target_edges;
    std::vector<double> counts;
    std::vector<double> variances;
  };
  std::vector<std::uint32_t> order;
  std::unordered_map<std::uint32_t, Acc> groups;

  for (const auto &s : ds.spectra()) {
    auto it = grouping.find(s.id());
    if (it == grouping.end())
      throw DataError(fmt::format(
          "group_spectra: spectrum {} has no entry in the grouping", s.id()));
    const std::uint32_t gid = it->second;
    auto [g, inserted] = groups.try_emplace(gid);
    Acc &acc = g->second;
    std::vector<double> c(s.counts().begin(), s.counts().end());
    std::vector<double> v(s.errors().size());
    std::transform(s.errors().begin(), s.errors().end(), v.begin(),
                   [](float e) { return static_cast<double>(e) * e; });
    if (inserted) {
      order.push_back(gid);
      acc.first = &s;
      acc.target_edges = s.xscale().edges();
      acc.counts = std::move(c);
      acc.variances = std::move(v);
      continue;
    }
    if (!(s.xscale() == acc.first->xscale())) {
      auto r = rebin_values(s.xscale().edges(), c, v, acc.target_edges);
      c = std::move(r.counts);
      v = std::move(r.variances);
    }
    for (std::size_t k = 0; k < c.size(); ++k) {
      acc.counts[k] += c[k];
      acc.variances[k] += v[k];
    }
  }

  std::vector<Spectrum> out;
  out.reserve(order.size());
  for (auto gid : order) {
    const Acc &acc = groups.at(gid);
    const Spectrum &m = *acc.first;
    out.emplace_back(gid, m.xscale(), to_float(acc.counts),
                     sqrt_float(acc.variances), m.attributes(), m.label(), gid,
                     m.geometry());
  }
  return ds.with_spectra(std::move(out));
}

DataSet normalize(const DataSet &ds, const NormalizeMode &mode) {
  double divisor = 0.0;
  std::string tag;
  if (auto m = std::get_if<NormalizeByMonitor>(&mode)) {
    if (!m->monitor)
      throw DataError("normalize: no monitor spectrum supplied");
    divisor = m->monitor->total_counts();
    tag = "monitor";
  } else if (auto t = std::get_if<NormalizeByTime>(&mode)) {
    divisor = t->seconds;
    tag = "time";
  } else {
    divisor = std::get<NormalizeByScalar>(mode).value;
    tag = "scalar";
  }
  if (!(divisor > 0.0) || !std::isfinite(divisor))
    throw DataError(
        fmt::format("normalize: {} divisor must be positive (got {})", tag,
                    divisor));

  std::vector<Spectrum> out;
  out.reserve(ds.size());
  for (const auto &s : ds.spectra()) {
    std::vector<float> c(s.counts().size());
    std::vector<float> e(s.errors().size());
    for (std::size_t i = 0; i < c.size(); ++i) {
      c[i] = static_cast<float>(s.counts()[i] / divisor);
      e[i] = static_cast<float>(s.errors()[i] / divisor);
    }
    out.push_back(s.with_data(s.xscale(), std::move(c), std::move(e)));
  }

  Attributes attrs;
  for (const auto &a : ds.attributes())
    if (a.name != "normalized_by")
      attrs.push_back(a);
  attrs.emplace_back("normalized_by", fmt::format("{}:{}", tag, divisor));
  return DataSet(ds.title(), ds.x_units(), ds.y_units(), std::move(out),
                 std::move(attrs));
}

DataSet merge(const DataSet &a, const DataSet &b) {
  if (!a.is_empty() && !b.is_empty() && a.x_units() != b.x_units())
    throw DataError(fmt::format("merge: cannot combine {} with {}",
                                to_string(a.x_units()), to_string(b.x_units())));
  const DataSet &unit_source = a.is_empty() ? b : a;

  std::vector<Spectrum> spectra;
  spectra.reserve(a.size() + b.size());
  std::uint32_t next = 0;
  for (const auto *src : {&a, &b})
    for (const auto &s : src->spectra())
      spectra.push_back(s.with_id(next++));

  std::string title;
  if (a.title().empty())
    title = b.title();
  else if (b.title().empty() || b.title() == a.title())
    title = a.title();
  else
    title = a.title() + " + " + b.title();

  Attributes attrs = a.attributes();
  for (const auto &attr_b : b.attributes())
    if (!find_attribute(attrs, attr_b.name))
      attrs.push_back(attr_b);

  return DataSet(std::move(title), unit_source.x_units(),
                 unit_source.y_units(), std::move(spectra), std::move(attrs));
}

LabelTemplate LabelTemplate::parse(std::string_view text) {
  LabelTemplate t;
  t.text_ = std::string(text);
  std::string literal;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '{') {
      literal.push_back(text[i]);
      continue;
    }
    const auto close = text.find('}', i);
    if (close == std::string_view::npos)
      throw DataError(fmt::format(
          "label template: unterminated placeholder at offset {}", i));
    std::string name(text.substr(i + 1, close - i - 1));
    if (name != "run_number" && name != "start_time" && name != "id")
      throw DataError(
          fmt::format("label template: unknown placeholder '{{{}}}'", name));
    if (!literal.empty())
      t.pieces_.push_back({false, std::move(literal)});
    literal.clear();
    t.pieces_.push_back({true, std::move(name)});
    i = close;
  }
  if (!literal.empty())
    t.pieces_.push_back({false, std::move(literal)});
  return t;
}

std::string LabelTemplate::expand(const Spectrum &s, const DataSet &ds) const {
  std::string out;
  for (const auto &p : pieces_) {
    if (!p.placeholder) {
      out += p.text;
      continue;
    }
    if (p.text == "id") {
      out += std::to_string(s.id());
      continue;
    }
    const AttrValue *v = s.attribute(p.text);
    if (!v)
      v = ds.attribute(p.text);
    if (!v)
      throw DataError(fmt::format(
          "relabel: spectrum {} has no '{}' attribute", s.id(), p.text));
    out += to_string(*v);
  }
  return out;
}

DataSet relabel(const DataSet &ds, const LabelTemplate &tmpl) {
  std::vector<Spectrum> out;
  out.reserve(ds.size());
  for (const auto &s : ds.spectra())
    out.push_back(s.with_label(tmpl.expand(s, ds)));
  return ds.with_spectra(std::move(out));
}

DataSet relabel(const DataSet &ds, std::string_view tmpl) {
  return relabel(ds, LabelTemplate::parse(tmpl));
}

DataSet extract_group(const DataSet &ds, std::string_view key,
                      const AttrValue &value) {
  std::vector<Spectrum> out;
  for (const auto &s : ds.spectra()) {
    const AttrValue *v = s.attribute(key);
    if (v && attr_value_equal(*v, value))
      out.push_back(s);
  }
  return ds.with_spectra(std::move(out));
}

DataSet sort_spectra(const DataSet &ds, std::string_view key, bool ascending) {
  using Key = std::variant<double, std::string>;
  std::vector<std::pair<Key, std::size_t>> keyed;
  keyed.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Spectrum &s = ds.spectra()[i];
    Key k;
    if (key == "id") {
      k = static_cast<double>(s.id());
    } else if (key == "theta") {
      k = require_geometry(s, "sort_spectra").theta();
    } else {
      const AttrValue *v = s.attribute(key);
      if (!v)
        throw DataError(fmt::format(
            "sort_spectra: spectrum {} has no '{}' attribute", s.id(), key));
      if (auto n = as_number(*v))
        k = *n;
      else if (auto str = std::get_if<std::string>(v))
        k = *str;
      else
        throw DataError(fmt::format(
            "sort_spectra: attribute '{}' of spectrum {} is not sortable", key,
            s.id()));
    }
    if (!keyed.empty() && keyed.front().first.index() != k.index())
      throw DataError(fmt::format(
          "sort_spectra: key '{}' mixes numbers and strings", key));
    keyed.emplace_back(std::move(k), i);
  }
  std::stable_sort(keyed.begin(), keyed.end(),
                   [ascending](const auto &x, const auto &y) {
                     return ascending ? x.first < y.first : y.first < x.first;
                   });
  std::vector<Spectrum> out;
  out.reserve(ds.size());
  for (const auto &[k, i] : keyed)
    out.push_back(ds.spectra()[i]);
  return ds.with_spectra(std::move(out));
}

} // namespace tofbench::ops
