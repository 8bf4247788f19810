#include "tofbench/peaks.hpp"

#include "tofbench/error.hpp"
#include "tofbench/operators.hpp"

#include "fmt_path.hpp"

#include <Eigen/Dense>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace tofbench::peaks {

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;

Eigen::Matrix3d to_eigen(const Mat3 &m) {
  Eigen::Matrix3d e;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      e(i, j) = m[i][j];
  return e;
}

Mat3 from_eigen(const Eigen::Matrix3d &e) {
  Mat3 m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      m[i][j] = e(i, j);
  return m;
}

Eigen::Vector3d to_eigen(const Vec3 &v) { return {v[0], v[1], v[2]}; }
Vec3 from_eigen(const Eigen::Vector3d &v) { return {v[0], v[1], v[2]}; }

double norm(const Vec3 &v) { return std::hypot(v[0], v[1], v[2]); }

struct Box {
  std::int64_t lo[3], hi[3]; // inclusive
};

std::array<std::int64_t, 3> rounded_center(const DetectorVolume &vol,
                                           const Peak &p) {
  const std::array<std::int64_t, 3> c{std::llround(p.row), std::llround(p.col),
                                      std::llround(p.channel)};
  const std::array<std::int64_t, 3> n{vol.n_rows(), vol.n_cols(),
                                      vol.n_channels()};
  for (int d = 0; d < 3; ++d)
    if (c[d] < 0 || c[d] >= n[d])
      throw DataError(fmt::format(
          "peak at ({}, {}, {}) lies outside the {}x{}x{} volume", p.row,
          p.col, p.channel, n[0], n[1], n[2]));
  return c;
}

Box clipped_box(const DetectorVolume &vol, const std::array<std::int64_t, 3> &c,
                std::int64_t r) {
  const std::array<std::int64_t, 3> n{vol.n_rows(), vol.n_cols(),
                                      vol.n_channels()};
  Box b;
  for (int d = 0; d < 3; ++d) {
    b.lo[d] = std::max<std::int64_t>(0, c[d] - r);
    b.hi[d] = std::min<std::int64_t>(n[d] - 1, c[d] + r);
  }
  return b;
}

template <class F> void for_box(const Box &b, F &&f) {
  for (auto r = b.lo[0]; r <= b.hi[0]; ++r)
    for (auto c = b.lo[1]; c <= b.hi[1]; ++c)
      for (auto ch = b.lo[2]; ch <= b.hi[2]; ++ch)
        f(static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(c),
          static_cast<std::uint32_t>(ch));
}

double parse_double(const std::string &tok, const std::filesystem::path &path,
                    std::size_t line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used == tok.size())
      return v;
  } catch (const std::exception &) {
  }
  throw DataError(fmt::format("{}:{}: non-numeric token '{}'", path, line_no, tok));
}

std::vector<std::pair<std::size_t, std::vector<std::string>>>
read_table(const std::filesystem::path &path, std::size_t columns) {
  std::ifstream in(path);
  if (!in)
    throw IoError(fmt::format("cannot open {}", path));
  std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;
  std::string line;
  for (std::size_t no = 1; std::getline(in, line); ++no) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#')
      continue;
    std::istringstream ss(line);
    std::vector<std::string> toks;
    for (std::string t; ss >> t;)
      toks.push_back(t);
    if (toks.size() != columns)
      throw DataError(fmt::format("{}:{}: expected {} columns, found {}", path,
                                  no, columns, toks.size()));
    rows.emplace_back(no, std::move(toks));
  }
  return rows;
}

} // namespace

Vec3 FlatPanel::position(double row, double col) const {
  const double dr = (row - 0.5 * (n_rows - 1.0)) * pitch_m;
  const double dc = (col - 0.5 * (n_cols - 1.0)) * pitch_m;
  return {center[0] + dr * row_dir[0] + dc * col_dir[0],
          center[1] + dr * row_dir[1] + dc * col_dir[1],
          center[2] + dr * row_dir[2] + dc * col_dir[2]};
}

std::optional<std::array<double, 2>> FlatPanel::intersect(const Vec3 &dir) const {
  const Eigen::Vector3d r = to_eigen(row_dir), c = to_eigen(col_dir);
  const Eigen::Vector3d n = r.cross(c);
  const Eigen::Vector3d d = to_eigen(dir), p0 = to_eigen(center);
  const double denom = n.dot(d);
  if (denom == 0.0)
    return std::nullopt;
  const double s = n.dot(p0) / denom;
  if (s <= 0.0)
    return std::nullopt;
  const Eigen::Vector3d hit = s * d - p0;
  return std::array<double, 2>{hit.dot(r) / pitch_m + 0.5 * (n_rows - 1.0),
                               hit.dot(c) / pitch_m + 0.5 * (n_cols - 1.0)};
}

PixelGeometryFn flat_panel_geometry(const FlatPanel &panel, double L1_m) {
  const double pixel_solid_angle = [&] {
    const double d = norm(panel.center);
    return d > 0 ? panel.pitch_m * panel.pitch_m / (d * d) : 0.0;
  }();
  return [panel, L1_m, pixel_solid_angle](double row, double col) {
    return DetectorGeometry(panel.position(row, col), L1_m, pixel_solid_angle,
                            1.0);
  };
}

DetectorVolume::DetectorVolume(std::uint32_t n_rows, std::uint32_t n_cols,
                               XScale tof_scale, std::vector<float> counts,
                               PixelGeometryFn pixel_geometry, double L1_m,
                               GoniometerSetting goniometer)
    : n_rows_(n_rows), n_cols_(n_cols), tof_(std::move(tof_scale)),
      counts_(std::move(counts)), geom_(std::move(pixel_geometry)), L1_(L1_m),
      gonio_(goniometer) {
  const std::size_t expected =
      static_cast<std::size_t>(n_rows) * n_cols * tof_.bin_count();
  if (counts_.size() != expected)
    throw DataError(fmt::format(
        "volume {}x{}x{} needs {} counts, got {}", n_rows, n_cols,
        tof_.bin_count(), expected, counts_.size()));
  if (!geom_)
    throw DataError("volume has no pixel geometry");
  if (!(L1_m > 0))
    throw DataError(fmt::format("L1 must be positive, got {}", L1_m));
  for (std::uint32_t r = 0; r < n_rows; ++r)
    for (std::uint32_t c = 0; c < n_cols; ++c)
      if (!(geom_(r, c).secondary_path() > 0))
        throw DataError(fmt::format("pixel ({}, {}) has zero flight path", r, c));
}

double DetectorVolume::tof_at(double channel) const {
  const auto n = static_cast<std::int64_t>(tof_.bin_count());
  const auto i = std::clamp<std::int64_t>(std::llround(channel), 0, n - 1);
  const auto k = static_cast<std::size_t>(i);
  return tof_.bin_center(k) + (channel - static_cast<double>(i)) *
                                  (tof_.edge(k + 1) - tof_.edge(k));
}

DetectorVolume volume_from_dataset(const DataSet &ds) {
  if (ds.x_units() != XUnits::tof_us)
    throw DataError(fmt::format("volume needs tof_us data, got {}",
                                to_string(ds.x_units())));
  if (ds.is_empty())
    throw DataError("volume needs at least one spectrum");

  struct Pixel {
    std::uint32_t row, col;
    const Spectrum *s;
  };
  std::vector<Pixel> pixels;
  std::uint32_t n_rows = 0, n_cols = 0;
  const XScale &xs = ds.spectra().front().xscale();
  for (const auto &s : ds.spectra()) {
    std::array<std::uint32_t, 2> rc{};
    for (int k = 0; k < 2; ++k) {
      const char *key = k == 0 ? "row" : "col";
      const AttrValue *v = s.attribute(key);
      const auto num = v ? as_number(*v) : std::nullopt;
      if (!num || *num < 0 || *num != std::floor(*num))
        throw DataError(fmt::format("spectrum {} lacks a valid '{}' attribute",
                                    s.id(), key));
      rc[k] = static_cast<std::uint32_t>(*num);
    }
    if (!s.geometry())
      throw DataError(fmt::format("spectrum {} has no geometry", s.id()));
    if (!(s.xscale() == xs))
      throw DataError(fmt::format(
          "spectrum {} has a different time scale than spectrum {}", s.id(),
          ds.spectra().front().id()));
    pixels.push_back({rc[0], rc[1], &s});
    n_rows = std::max(n_rows, rc[0] + 1);
    n_cols = std::max(n_cols, rc[1] + 1);
  }

  const std::uint32_t nch = xs.bin_count();
  std::vector<float> counts(static_cast<std::size_t>(n_rows) * n_cols * nch, 0.0f);
  auto grid = std::make_shared<std::vector<std::optional<DetectorGeometry>>>(
      static_cast<std::size_t>(n_rows) * n_cols);
  for (const auto &p : pixels) {
    const std::size_t cell = static_cast<std::size_t>(p.row) * n_cols + p.col;
    if ((*grid)[cell])
      throw DataError(fmt::format("two spectra map to pixel ({}, {})", p.row,
                                  p.col));
    (*grid)[cell] = p.s->geometry();
    std::copy(p.s->counts().begin(), p.s->counts().end(),
              counts.begin() + static_cast<std::ptrdiff_t>(cell * nch));
  }

  const double L1 = ds.spectra().front().geometry()->initial_path();
  auto geom = [grid, n_rows, n_cols](double row, double col) {
    const double r = std::clamp(row, 0.0, n_rows - 1.0);
    const double c = std::clamp(col, 0.0, n_cols - 1.0);
    const auto r0 = static_cast<std::uint32_t>(std::floor(r));
    const auto c0 = static_cast<std::uint32_t>(std::floor(c));
    const double fr = r - r0, fc = c - c0;
    Vec3 pos{};
    double wsum = 0;
    const DetectorGeometry *nearest = nullptr;
    double best = 2.0;
    for (std::uint32_t dr = 0; dr < 2; ++dr)
      for (std::uint32_t dc = 0; dc < 2; ++dc) {
        const auto rr = std::min(r0 + dr, n_rows - 1);
        const auto cc = std::min(c0 + dc, n_cols - 1);
        const auto &g = (*grid)[static_cast<std::size_t>(rr) * n_cols + cc];
        if (!g)
          continue;
        const double w = (dr ? fr : 1 - fr) * (dc ? fc : 1 - fc);
        const double dist = std::abs(rr - r) + std::abs(cc - c);
        if (dist < best) {
          best = dist;
          nearest = &*g;
        }
        for (int k = 0; k < 3; ++k)
          pos[k] += w * g->position()[k];
        wsum += w;
      }
    if (!nearest)
      throw DataError(fmt::format("no detector pixel near ({}, {})", row, col));
    if (wsum > 0)
      for (auto &x : pos)
        x /= wsum;
    else
      pos = nearest->position();
    return DetectorGeometry(pos, nearest->initial_path(),
                            nearest->solid_angle(), nearest->efficiency());
  };

  GoniometerSetting g;
  auto angle = [&](const char *name) {
    const AttrValue *v = ds.attribute(name);
    const auto num = v ? as_number(*v) : std::nullopt;
    return num.value_or(0.0);
  };
  g.chi = angle("goniometer_chi");
  g.phi = angle("goniometer_phi");
  g.omega = angle("goniometer_omega");

  return DetectorVolume(n_rows, n_cols, xs, std::move(counts), geom, L1, g);
}

DataSet volume_to_dataset(const DetectorVolume &vol, std::string title) {
  std::vector<Spectrum> spectra;
  spectra.reserve(static_cast<std::size_t>(vol.n_rows()) * vol.n_cols());
  const auto nch = vol.n_channels();
  for (std::uint32_t r = 0; r < vol.n_rows(); ++r)
    for (std::uint32_t c = 0; c < vol.n_cols(); ++c) {
      const auto begin = vol.counts().begin() +
                         static_cast<std::ptrdiff_t>(vol.index(r, c, 0));
      spectra.emplace_back(
          r * vol.n_cols() + c, vol.tof_scale(),
          std::vector<float>(begin, begin + nch), std::nullopt,
          Attributes{{"row", std::int64_t{r}}, {"col", std::int64_t{c}}},
          fmt::format("pixel {} {}", r, c), 0, vol.geometry(r, c));
    }
  const auto &g = vol.goniometer();
  return DataSet(std::move(title), XUnits::tof_us, "counts", std::move(spectra),
                 {{"goniometer_chi", g.chi},
                  {"goniometer_phi", g.phi},
                  {"goniometer_omega", g.omega}});
}

std::vector<Peak> find_peaks(const DetectorVolume &vol, double k_sigma,
                             std::uint32_t max_peaks, std::uint32_t min_sep) {
  if (!(k_sigma > 0))
    throw DataError(fmt::format("k_sigma must be positive, got {}", k_sigma));
  const auto &v = vol.counts();
  if (v.empty())
    return {};
  double sum = 0, sum2 = 0;
  for (float x : v) {
    sum += x;
    sum2 += static_cast<double>(x) * x;
  }
  const double n = static_cast<double>(v.size());
  const double mean = sum / n;
  const double stddev = std::sqrt(std::max(0.0, sum2 / n - mean * mean));
  const double threshold = mean + k_sigma * stddev;

  const std::int64_t R = vol.n_rows(), C = vol.n_cols(), T = vol.n_channels();
  struct Candidate {
    float value;
    std::uint32_t r, c, ch;
  };
  std::vector<Candidate> cands;
  for (std::int64_t r = 0; r < R; ++r)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t ch = 0; ch < T; ++ch) {
        const float x = v[vol.index(r, c, ch)];
        if (!(x > threshold))
          continue;
        bool is_max = true;
        for (std::int64_t dr = -1; dr <= 1 && is_max; ++dr)
          for (std::int64_t dc = -1; dc <= 1 && is_max; ++dc)
            for (std::int64_t dt = -1; dt <= 1 && is_max; ++dt) {
              if (!dr && !dc && !dt)
                continue;
              const auto rr = r + dr, cc = c + dc, tt = ch + dt;
              if (rr < 0 || rr >= R || cc < 0 || cc >= C || tt < 0 || tt >= T)
                continue;
              if (!(x > v[vol.index(rr, cc, tt)]))
                is_max = false;
            }
        if (is_max)
          cands.push_back({x, static_cast<std::uint32_t>(r),
                           static_cast<std::uint32_t>(c),
                           static_cast<std::uint32_t>(ch)});
      }

  std::stable_sort(cands.begin(), cands.end(),
                   [](const Candidate &a, const Candidate &b) {
                     return a.value > b.value;
                   });
  std::vector<Peak> out;
  for (const auto &cd : cands) {
    if (out.size() >= max_peaks)
      break;
    const bool suppressed = std::any_of(out.begin(), out.end(), [&](const Peak &p) {
      const double d = std::max({std::abs(p.row - cd.r), std::abs(p.col - cd.c),
                                 std::abs(p.channel - cd.ch)});
      return d <= min_sep;
    });
    if (suppressed)
      continue;
    Peak p;
    p.row = cd.r;
    p.col = cd.c;
    p.channel = cd.ch;
    p.intensity = cd.value;
    p.sigma_intensity = std::sqrt(std::max(0.0f, cd.value));
    out.push_back(p);
  }
  return out;
}

Peak centroid(const DetectorVolume &vol, const Peak &p, std::uint32_t radius) {
  const auto c = rounded_center(vol, p);
  const Box b = clipped_box(vol, c, radius);
  double w = 0, sr = 0, sc = 0, st = 0;
  for_box(b, [&](std::uint32_t r, std::uint32_t col, std::uint32_t ch) {
    const double x = vol.at(r, col, ch);
    w += x;
    sr += x * r;
    sc += x * col;
    st += x * ch;
  });
  if (w == 0.0)
    throw DataError(fmt::format(
        "cannot centroid peak at ({}, {}, {}): box sum is zero", p.row, p.col,
        p.channel));
  Peak out = p;
  out.row = sr / w;
  out.col = sc / w;
  out.channel = st / w;
  out.intensity = w;
  out.sigma_intensity = std::sqrt(std::abs(w));
  return out;
}

Integrated integrate_peak(const DetectorVolume &vol, const Peak &p,
                          std::uint32_t box, std::uint32_t shell) {
  if (!(box < shell))
    throw DataError(fmt::format("box ({}) must be smaller than shell ({})", box,
                                shell));
  const auto c = rounded_center(vol, p);
  const Box outer = clipped_box(vol, c, shell);
  double s_box = 0, s_shell = 0;
  std::size_t n_box = 0, n_shell = 0;
  for_box(outer, [&](std::uint32_t r, std::uint32_t col, std::uint32_t ch) {
    const std::int64_t d = std::max({std::abs(r - c[0]), std::abs(col - c[1]),
                                     std::abs(ch - c[2])});
    const double x = vol.at(r, col, ch);
    if (d <= static_cast<std::int64_t>(box)) {
      s_box += x;
      ++n_box;
    } else {
      s_shell += x;
      ++n_shell;
    }
  });
  if (n_shell == 0)
    throw DataError(fmt::format(
        "background shell around ({}, {}, {}) is empty after clipping", p.row,
        p.col, p.channel));
  const double nb = static_cast<double>(n_box), ns = static_cast<double>(n_shell);
  return {s_box - nb * (s_shell / ns),
          std::sqrt(std::max(0.0, s_box + nb * nb * s_shell / (ns * ns)))};
}

Peak peak_to_q(const Peak &p, const DetectorVolume &vol) {
  rounded_center(vol, p);
  const DetectorGeometry g = vol.geometry(p.row, p.col);
  const double L2 = g.secondary_path();
  const double L = g.initial_path() + L2;
  if (!(L2 > 0) || !(L > 0))
    throw DataError(fmt::format("zero flight path at pixel ({}, {})", p.row, p.col));
  const double t = vol.tof_at(p.channel);
  if (!(t > 0))
    throw DataError(fmt::format("non-positive TOF {} us at channel {}", t,
                                p.channel));
  const double k = two_pi / ops::tof_to_wavelength(t, L);
  const auto &pos = g.position();
  Peak out = p;
  out.q = {k * pos[0] / L2, k * pos[1] / L2, k * (pos[2] / L2 - 1.0)};
  return out;
}

Mat3 goniometer_matrix(const GoniometerSetting &g) {
  using Eigen::AngleAxisd;
  using Eigen::Vector3d;
  const Eigen::Matrix3d R = (AngleAxisd(g.omega, Vector3d::UnitZ()) *
                             AngleAxisd(g.chi, Vector3d::UnitX()) *
                             AngleAxisd(g.phi, Vector3d::UnitZ()))
                                .toRotationMatrix();
  return from_eigen(R);
}

Vec3 apply_goniometer(const Vec3 &q_lab, const GoniometerSetting &g) {
  const Eigen::Vector3d v = to_eigen(goniometer_matrix(g)).transpose() * to_eigen(q_lab);
  return from_eigen(v);
}

UBFit refine_ub(const std::vector<Assignment> &assigned) {
  const auto n = static_cast<Eigen::Index>(assigned.size());
  if (n < 3)
    throw DataError(fmt::format("refine_ub needs at least 3 assignments, got {}", n));
  Eigen::MatrixXd Ht(n, 3), Qt(n, 3);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int k = 0; k < 3; ++k) {
      Ht(i, k) = assigned[i].hkl[k];
      Qt(i, k) = assigned[i].q[k] / two_pi;
    }
  const auto qr = Ht.colPivHouseholderQr();
  if (qr.rank() < 3)
    throw DataError(fmt::format(
        "refine_ub: hkl set has rank {} (coplanar or repeated reflections)",
        qr.rank()));
  const Eigen::Matrix3d ub = qr.solve(Qt).transpose();
  double ss = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector3d h = Ht.row(i).transpose();
    ss += (two_pi * ub * h - two_pi * Qt.row(i).transpose()).squaredNorm();
  }
  return {from_eigen(ub), std::sqrt(ss / static_cast<double>(n))};
}

std::vector<Peak> index_peaks(const Mat3 &ub, std::vector<Peak> peaks, double tol) {
  const Eigen::Matrix3d m = to_eigen(ub);
  const double det = m.determinant();
  if (det == 0.0 || !std::isfinite(det))
    throw DataError("index_peaks: UB matrix is singular");
  const Eigen::Matrix3d inv = m.inverse();
  for (auto &p : peaks) {
    const Eigen::Vector3d h = inv * to_eigen(p.q) / two_pi;
    HKL hkl;
    double worst = 0;
    for (int k = 0; k < 3; ++k) {
      const double r = std::round(h[k]);
      worst = std::max(worst, std::abs(h[k] - r));
      hkl[k] = static_cast<int>(r);
    }
    if (worst < tol && hkl != HKL{0, 0, 0})
      p.hkl = hkl;
    else
      p.hkl.reset();
  }
  return peaks;
}

std::vector<Assignment> indexed_assignments(const std::vector<Peak> &peaks) {
  std::vector<Assignment> out;
  for (const auto &p : peaks)
    if (p.hkl)
      out.push_back({*p.hkl, p.q});
  return out;
}

std::vector<Assignment> assign_seeds(const std::vector<Peak> &peaks,
                                     const std::vector<Seed> &seeds,
                                     double max_dist) {
  std::vector<Assignment> out;
  for (const auto &s : seeds) {
    const Peak *best = nullptr;
    double best_d = max_dist;
    for (const auto &p : peaks) {
      const double d = std::max({std::abs(p.row - s.row), std::abs(p.col - s.col),
                                 std::abs(p.channel - s.channel)});
      if (d <= best_d) {
        best_d = d;
        best = &p;
      }
    }
    if (!best)
      throw DataError(fmt::format(
          "no peak within {} voxels of seed ({} {} {}) at ({}, {}, {})",
          max_dist, s.hkl[0], s.hkl[1], s.hkl[2], s.row, s.col, s.channel));
    out.push_back({s.hkl, best->q});
  }
  return out;
}

std::vector<Peak> locate_peaks(const DetectorVolume &vol,
                               const SearchOptions &opt,
                               std::uint32_t orientation_index) {
  auto found = find_peaks(vol, opt.k_sigma, opt.max_peaks, opt.min_sep);
  for (auto &p : found) {
    p = peak_to_q(centroid(vol, p, opt.centroid_radius), vol);
    p.q = apply_goniometer(p.q, vol.goniometer());
    p.orientation_index = orientation_index;
  }
  return found;
}

SeededIndexing index_from_seeds(const std::vector<Peak> &peaks,
                                const std::vector<Seed> &seeds, double tol) {
  SeededIndexing out;
  out.seed_fit = refine_ub(assign_seeds(peaks, seeds));
  out.peaks = index_peaks(out.seed_fit.ub, peaks, tol);
  out.final_fit = refine_ub(indexed_assignments(out.peaks));
  out.peaks = index_peaks(out.final_fit.ub, std::move(out.peaks), tol);
  return out;
}

std::vector<Seed> read_seeds(const std::filesystem::path &path) {
  std::vector<Seed> out;
  for (const auto &[no, t] : read_table(path, 6)) {
    Seed s{parse_double(t[0], path, no), parse_double(t[1], path, no),
           parse_double(t[2], path, no), {}};
    for (int k = 0; k < 3; ++k) {
      const double h = parse_double(t[3 + k], path, no);
      if (h != std::round(h))
        throw DataError(fmt::format("{}:{}: Miller index '{}' is not an integer",
                                    path, no, t[3 + k]));
      s.hkl[k] = static_cast<int>(h);
    }
    out.push_back(s);
  }
  return out;
}

void write_seeds(const std::filesystem::path &path, const std::vector<Seed> &seeds) {
  std::ofstream out(path, std::ios::trunc);
  if (!out)
    throw IoError(fmt::format("cannot open {} for writing", path));
  out << "# row col channel h k l\n";
  for (const auto &s : seeds)
    out << fmt::format("{} {} {} {} {} {}\n", s.row, s.col, s.channel, s.hkl[0],
                       s.hkl[1], s.hkl[2]);
  if (!out)
    throw IoError(fmt::format("write failed for {}", path));
}

void write_peak_list(const std::filesystem::path &path,
                     const std::vector<Peak> &peaks) {
  std::ofstream out(path, std::ios::trunc);
  if (!out)
    throw IoError(fmt::format("cannot open {} for writing", path));
  out << "# tofbench peak list v1\n"
      << "# q in 1/Angstrom, q = 2*pi*UB*h, beam along +z; unindexed peaks "
         "have h k l = 0 0 0\n"
      << "# orientation_index h k l row col channel intensity sigma qx qy qz\n";
  for (const auto &p : peaks) {
    const HKL h = p.hkl.value_or(HKL{0, 0, 0});
    out << fmt::format("{} {} {} {} {} {} {} {} {} {} {} {}\n",
                       p.orientation_index, h[0], h[1], h[2], p.row, p.col,
                       p.channel, p.intensity, p.sigma_intensity, p.q[0], p.q[1],
                       p.q[2]);
  }
  if (!out)
    throw IoError(fmt::format("write failed for {}", path));
}

std::vector<Peak> read_peak_list(const std::filesystem::path &path) {
  std::vector<Peak> out;
  for (const auto &[no, t] : read_table(path, 12)) {
    std::array<double, 12> v;
    for (std::size_t k = 0; k < 12; ++k)
      v[k] = parse_double(t[k], path, no);
    Peak p;
    p.orientation_index = static_cast<std::uint32_t>(v[0]);
    const HKL h{static_cast<int>(v[1]), static_cast<int>(v[2]),
                static_cast<int>(v[3])};
    if (h != HKL{0, 0, 0})
      p.hkl = h;
    p.row = v[4];
    p.col = v[5];
    p.channel = v[6];
    p.intensity = v[7];
    p.sigma_intensity = v[8];
    p.q = {v[9], v[10], v[11]};
    out.push_back(p);
  }
  return out;
}

} // namespace tofbench::peaks
