#pragma once

// Reduction transforms over immutable datasets. Every operation returns a
// fresh value and leaves its inputs untouched.
//
// Angle convention: theta is always the Bragg half-angle. Geometry yields
// the full scattering angle 2theta and these operators halve it.

#include "tofbench/dataset.hpp"

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace tofbench::ops {

struct PhysicalConstants {
  static constexpr double planck_Js = 6.62607015e-34;
  static constexpr double neutron_mass_kg = 1.67492749804e-27;
  /// h / m_n in m^2/s.
  static constexpr double h_over_mn = 3.9560339e-7;
};

struct FocusParams {
  FocusParams(double ref_theta_rad, double ref_L1_m, double ref_L2_m);

  double ref_theta_rad;
  double ref_L1_m;
  double ref_L2_m;
};

/// (L_i sin theta_i) / (L_r sin theta_r), L being total flight paths.
double focus_factor(double L_i_m, double theta_i_rad, double L_r_m,
                    double theta_r_rad);

/// Maps every x-edge t -> t / f so all spectra line up with the reference
/// geometry, then replaces each spectrum's geometry with the reference one.
DataSet time_focus(const DataSet &ds, const FocusParams &fp);

/// Wavelength in Angstrom for a time-of-flight in microseconds over a total
/// flight path in meters.
double tof_to_wavelength(double tof_us, double total_path_m);

/// TOF histograms to wavelength, d-spacing or Q. Counts move with their
/// bins (no Jacobian); Q conversion reverses bin order to keep edges
/// increasing.
DataSet convert_units(const DataSet &ds, XUnits target);

/// Fractional-overlap rebinning on raw arrays. Variances are redistributed
/// by the same overlap fraction as counts, so splitting a bin and adding the
/// pieces back reproduces the original variance.
struct RebinResult {
  std::vector<double> counts;
  std::vector<double> variances;
};
RebinResult rebin_values(std::span<const double> old_edges,
                         std::span<const double> counts,
                         std::span<const double> variances,
                         std::span<const double> new_edges);

Spectrum rebin(const Spectrum &s, const XScale &new_xscale);
DataSet rebin(const DataSet &ds, const XScale &new_xscale);

/// Sums spectra sharing a group id onto the first member's x-scale. Result
/// spectra take the group id as their id and the first member's geometry.
DataSet group_spectra(const DataSet &ds,
                      const std::map<std::uint32_t, std::uint32_t> &grouping);

struct NormalizeByMonitor {
  const Spectrum *monitor;
};
struct NormalizeByTime {
  double seconds;
};
struct NormalizeByScalar {
  double value;
};
using NormalizeMode =
    std::variant<NormalizeByMonitor, NormalizeByTime, NormalizeByScalar>;

DataSet normalize(const DataSet &ds, const NormalizeMode &mode);

/// Concatenates b's spectra after a's and renumbers ids from 0. An empty
/// dataset merges with anything.
DataSet merge(const DataSet &a, const DataSet &b);

/// Parsed label template with {run_number}, {start_time} and {id}
/// placeholders.
class LabelTemplate {
public:
  static LabelTemplate parse(std::string_view text);
  std::string expand(const Spectrum &s, const DataSet &ds) const;
  const std::string &text() const noexcept { return text_; }

private:
  struct Piece {
    bool placeholder;
    std::string text;
  };
  std::string text_;
  std::vector<Piece> pieces_;
};

DataSet relabel(const DataSet &ds, const LabelTemplate &tmpl);
DataSet relabel(const DataSet &ds, std::string_view tmpl);

DataSet extract_group(const DataSet &ds, std::string_view key,
                      const AttrValue &value);

/// Stable sort by "id", "theta" or an attribute name.
DataSet sort_spectra(const DataSet &ds, std::string_view key, bool ascending);

} // namespace tofbench::ops
