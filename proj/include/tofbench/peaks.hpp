#pragma once

// Single-crystal reduction: peak search in an area-detector TOF volume,
// centroiding and integration, conversion to scattering vectors, UB
// refinement and indexing.
//
// Conventions: q = 2*pi * UB * h; q_lab = k * (p_hat - z_hat) with the beam
// along +z; goniometer R = Rz(omega) * Rx(chi) * Rz(phi) and
// q_sample = R^-1 * q_lab.

#include "tofbench/dataset.hpp"

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

namespace tofbench::peaks {

using HKL = std::array<int, 3>;
using Mat3 = std::array<std::array<double, 3>, 3>;

struct GoniometerSetting {
  double chi = 0.0;
  double phi = 0.0;
  double omega = 0.0;
};

/// Rectangular detector. Pixel (r, c) sits at
/// center + (r - (n_rows-1)/2) * pitch * row_dir + (c - (n_cols-1)/2) * pitch * col_dir;
/// fractional indices interpolate linearly.
struct FlatPanel {
  std::uint32_t n_rows = 0;
  std::uint32_t n_cols = 0;
  Vec3 center{};
  Vec3 row_dir{1, 0, 0};
  Vec3 col_dir{0, 1, 0};
  double pitch_m = 0.0;

  Vec3 position(double row, double col) const;
  /// Fractional (row, col) where the ray from the sample along `dir` meets
  /// the panel plane; nullopt if it points away.
  std::optional<std::array<double, 2>> intersect(const Vec3 &dir) const;
};

/// Maps (possibly fractional) pixel coordinates to a geometry.
using PixelGeometryFn = std::function<DetectorGeometry(double row, double col)>;

class DetectorVolume {
public:
  DetectorVolume(std::uint32_t n_rows, std::uint32_t n_cols, XScale tof_scale,
                 std::vector<float> counts, PixelGeometryFn pixel_geometry,
                 double L1_m, GoniometerSetting goniometer = {});

  std::uint32_t n_rows() const noexcept { return n_rows_; }
  std::uint32_t n_cols() const noexcept { return n_cols_; }
  std::uint32_t n_channels() const noexcept { return tof_.bin_count(); }
  const XScale &tof_scale() const noexcept { return tof_; }
  double L1() const noexcept { return L1_; }
  const GoniometerSetting &goniometer() const noexcept { return gonio_; }
  const std::vector<float> &counts() const noexcept { return counts_; }

  float at(std::uint32_t r, std::uint32_t c, std::uint32_t ch) const {
    return counts_[index(r, c, ch)];
  }
  std::size_t index(std::uint32_t r, std::uint32_t c, std::uint32_t ch) const {
    return (static_cast<std::size_t>(r) * n_cols_ + c) * n_channels() + ch;
  }
  DetectorGeometry geometry(double row, double col) const {
    return geom_(row, col);
  }
  /// TOF at a fractional channel; integer channels map to bin centers.
  double tof_at(double channel) const;

private:
  std::uint32_t n_rows_, n_cols_;
  XScale tof_;
  std::vector<float> counts_;
  PixelGeometryFn geom_;
  double L1_;
  GoniometerSetting gonio_;
};

PixelGeometryFn flat_panel_geometry(const FlatPanel &panel, double L1_m);

/// Builds a volume from a TOF dataset whose spectra carry "row" and "col"
/// attributes and geometry; all spectra must share one x-scale. Missing
/// pixels stay zero. Fractional pixel positions interpolate bilinearly.
/// Goniometer angles come from the optional dataset attributes
/// goniometer_chi/phi/omega (radians).
DetectorVolume volume_from_dataset(const DataSet &ds);

/// Inverse of volume_from_dataset: one spectrum per pixel, id = row*n_cols+col.
DataSet volume_to_dataset(const DetectorVolume &vol, std::string title);

struct Peak {
  double row = 0, col = 0, channel = 0;
  double intensity = 0;
  double sigma_intensity = 0;
  Vec3 q{};
  std::optional<HKL> hkl;
  std::uint32_t orientation_index = 0;

  bool operator==(const Peak &) const = default;
};

std::vector<Peak> find_peaks(const DetectorVolume &vol, double k_sigma,
                             std::uint32_t max_peaks, std::uint32_t min_sep);

Peak centroid(const DetectorVolume &vol, const Peak &p, std::uint32_t radius = 2);

struct Integrated {
  double intensity;
  double sigma;
};
Integrated integrate_peak(const DetectorVolume &vol, const Peak &p,
                          std::uint32_t box, std::uint32_t shell);

/// Lab-frame q in inverse Angstrom.
Peak peak_to_q(const Peak &p, const DetectorVolume &vol);

Mat3 goniometer_matrix(const GoniometerSetting &g);
Vec3 apply_goniometer(const Vec3 &q_lab, const GoniometerSetting &g);

struct Assignment {
  HKL hkl;
  Vec3 q;
};
struct UBFit {
  Mat3 ub;
  double rms_residual;
};
UBFit refine_ub(const std::vector<Assignment> &assigned);

std::vector<Peak> index_peaks(const Mat3 &ub, std::vector<Peak> peaks,
                              double tol = 0.10);

/// Assignments from indexed peaks, for a second refinement pass.
std::vector<Assignment> indexed_assignments(const std::vector<Peak> &peaks);

/// A seed names a reflection at an approximate voxel; it is matched to the
/// nearest peak within max_dist (Chebyshev, voxels).
struct Seed {
  double row, col, channel;
  HKL hkl;
};
std::vector<Assignment> assign_seeds(const std::vector<Peak> &peaks,
                                     const std::vector<Seed> &seeds,
                                     double max_dist = 3.0);
std::vector<Seed> read_seeds(const std::filesystem::path &path);
void write_seeds(const std::filesystem::path &path, const std::vector<Seed> &seeds);

struct SearchOptions {
  double k_sigma = 5.0;
  std::uint32_t max_peaks = 500;
  std::uint32_t min_sep = 3;
  std::uint32_t centroid_radius = 3;
};
/// find_peaks, centroid, peak_to_q, then rotation into the sample frame
/// with the volume's goniometer setting.
std::vector<Peak> locate_peaks(const DetectorVolume &vol,
                               const SearchOptions &opt = {},
                               std::uint32_t orientation_index = 0);

/// UB from the seeds, index, refit on every indexed peak, index again.
struct SeededIndexing {
  UBFit seed_fit;
  UBFit final_fit;
  std::vector<Peak> peaks;
};
SeededIndexing index_from_seeds(const std::vector<Peak> &peaks,
                                const std::vector<Seed> &seeds,
                                double tol = 0.10);

void write_peak_list(const std::filesystem::path &path,
                     const std::vector<Peak> &peaks);
std::vector<Peak> read_peak_list(const std::filesystem::path &path);

} // namespace tofbench::peaks
