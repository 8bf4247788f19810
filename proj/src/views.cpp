#include "tofbench/views.hpp"

#include "tofbench/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace tofbench::views {

namespace {

struct Layout {
  std::uint32_t rows = 0, cols = 0;
  std::vector<std::size_t> cell; // per spectrum, row-major grid index
};

std::uint32_t grid_coordinate(const Spectrum &s, std::string_view name) {
  const auto *v = s.attribute(name);
  if (!v)
    throw DataError(fmt::format("spectrum {} has no '{}' attribute", s.id(), name));
  const auto n = as_number(*v);
  if (!n || *n < 0 || *n != std::floor(*n) || *n > 1e6)
    throw DataError(fmt::format("spectrum {} has a bad '{}' attribute: {}", s.id(), name,
                                to_string(*v)));
  return static_cast<std::uint32_t>(*n);
}

Layout pixel_layout(const DataSet &ds) {
  Layout l;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> rc;
  rc.reserve(ds.size());
  for (const auto &s : ds.spectra()) {
    const auto r = grid_coordinate(s, attr::row);
    rc.emplace_back(r, grid_coordinate(s, attr::col));
    l.rows = std::max(l.rows, rc.back().first + 1);
    l.cols = std::max(l.cols, rc.back().second + 1);
  }
  std::vector<bool> taken(std::size_t{l.rows} * l.cols, false);
  for (std::size_t i = 0; i < rc.size(); ++i) {
    const auto at = std::size_t{rc[i].first} * l.cols + rc[i].second;
    if (taken[at])
      throw DataError(fmt::format("spectrum {} repeats pixel ({}, {})", ds.spectra()[i].id(),
                                  rc[i].first, rc[i].second));
    taken[at] = true;
    l.cell.push_back(at);
  }
  return l;
}

void check_channel(const Spectrum &s, std::uint32_t channel) {
  if (channel >= s.xscale().bin_count())
    throw DataError(fmt::format("channel {} is out of range for spectrum {} ({} bins)", channel,
                                s.id(), s.xscale().bin_count()));
}

/// Bins of a column that the spectrum actually has.
BinRange clip(BinRange r, const Spectrum &s) {
  r.last = std::min(r.last, s.xscale().bin_count());
  if (r.last < r.first)
    r.last = r.first;
  return r;
}

} // namespace

std::uint8_t color_index(double v, std::pair<double, double> range, IntensityScale scale,
                         double min_positive) {
  if (!std::isfinite(v) || v == 0)
    return 0;
  double t;
  if (scale == IntensityScale::log) {
    if (v < 0 || !(min_positive > 0))
      return 0;
    const double lo = std::log10(min_positive);
    const double hi = std::log10(std::max(range.second, min_positive));
    if (!(hi > lo))
      return 255;
    t = (std::log10(v) - lo) / (hi - lo);
  } else {
    if (!(range.second > range.first))
      return 255;
    t = (v - range.first) / (range.second - range.first);
  }
  const double c = std::floor(1.0 + 254.0 * std::clamp(t, 0.0, 1.0) + 0.5);
  return static_cast<std::uint8_t>(std::clamp(c, 1.0, 255.0));
}

RasterResult image_raster(const DataSet &ds, const Viewport &vp) {
  if (vp.width_px == 0 || vp.height_px == 0)
    throw DataError("viewport width and height must be at least 1");
  RasterResult rr;
  rr.width = vp.width_px;
  rr.height = vp.height_px;
  const auto n = static_cast<std::uint32_t>(ds.size());
  rr.rows_per_spectrum = std::max<std::uint32_t>(1, n ? vp.height_px / n : 1);

  std::uint32_t nb = 0;
  for (const auto &s : ds.spectra())
    nb = std::max(nb, s.xscale().bin_count());
  rr.col_map.resize(rr.width);
  if (vp.horizontal_compression && nb > rr.width) {
    for (std::uint32_t c = 0; c < rr.width; ++c)
      rr.col_map[c] = {static_cast<std::uint32_t>(std::uint64_t{c} * nb / rr.width),
                       static_cast<std::uint32_t>(std::uint64_t{c + 1} * nb / rr.width)};
  } else {
    const std::uint64_t offset = vp.horizontal_compression ? 0 : vp.col_offset;
    for (std::uint32_t c = 0; c < rr.width; ++c) {
      const auto b = offset + c;
      if (b < nb)
        rr.col_map[c] = {static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b + 1)};
    }
  }

  rr.row_map.resize(rr.height);
  rr.row_index.resize(rr.height);
  for (std::uint32_t y = 0; y < rr.height; ++y) {
    const std::uint64_t s = std::uint64_t{vp.row_offset} + y / rr.rows_per_spectrum;
    if (s < n) {
      rr.row_index[y] = static_cast<std::uint32_t>(s);
      rr.row_map[y] = ds.spectra()[s].id();
    }
  }

  // Aggregate each visible spectrum once; NaN marks columns without data.
  const auto nan = std::numeric_limits<double>::quiet_NaN();
  const std::uint32_t first = std::min(vp.row_offset, n);
  const std::uint32_t last = static_cast<std::uint32_t>(
      std::min<std::uint64_t>(n, std::uint64_t{vp.row_offset} +
                                     (rr.height + rr.rows_per_spectrum - 1) / rr.rows_per_spectrum));
  std::vector<std::vector<double>> values(last - first);
  std::vector<bool> dead(last - first);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  double min_pos = std::numeric_limits<double>::infinity();
  for (std::uint32_t i = first; i < last; ++i) {
    const auto &s = ds.spectra()[i];
    auto &row = values[i - first];
    row.assign(rr.width, nan);
    dead[i - first] = s.total_counts() == 0.0;
    if (dead[i - first])
      continue;
    const auto counts = s.counts();
    for (std::uint32_t c = 0; c < rr.width; ++c) {
      const auto r = clip(rr.col_map[c], s);
      if (r.empty())
        continue;
      double v;
      if (vp.aggregation == Aggregation::max) {
        v = counts[r.first];
        for (auto b = r.first + 1; b < r.last; ++b)
          v = std::max<double>(v, counts[b]);
      } else {
        double sum = 0;
        for (auto b = r.first; b < r.last; ++b)
          sum += counts[b];
        v = sum / (r.last - r.first);
      }
      row[c] = v;
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        if (v > 0)
          min_pos = std::min(min_pos, v);
      }
    }
  }
  if (lo <= hi)
    rr.value_range = {lo, hi};

  rr.pixels.assign(std::size_t{rr.width} * rr.height, 0);
  for (std::uint32_t y = 0; y < rr.height; ++y) {
    if (!rr.row_index[y])
      continue;
    const auto k = *rr.row_index[y] - first;
    if (dead[k])
      continue;
    for (std::uint32_t x = 0; x < rr.width; ++x)
      rr.pixels[std::size_t{y} * rr.width + x] =
          color_index(values[k][x], rr.value_range, vp.intensity_scale, min_pos);
  }
  return rr;
}

Readout cursor_readout(const DataSet &ds, const RasterResult &rr, std::uint32_t px,
                       std::uint32_t py) {
  if (px >= rr.width || py >= rr.height)
    throw DataError(fmt::format("cursor ({}, {}) is outside the {}x{} raster", px, py, rr.width,
                                rr.height));
  const auto &s = pointed_spectrum(ds, rr, py);
  const auto r = clip(rr.col_map[px], s);
  if (r.empty())
    throw DataError(fmt::format("column {} shows no bins of spectrum {}", px, s.id()));
  const auto counts = s.counts();
  auto best = r.first;
  for (auto b = r.first + 1; b < r.last; ++b)
    if (counts[b] > counts[best])
      best = b;
  return {s.id(), s.label(), best, s.xscale().bin_center(best), counts[best], s.errors()[best]};
}

const Spectrum &pointed_spectrum(const DataSet &ds, const RasterResult &rr, std::uint32_t py) {
  if (py >= rr.height)
    throw DataError(fmt::format("row {} is outside the raster ({} rows)", py, rr.height));
  const auto &idx = rr.row_index[py];
  if (!idx || *idx >= ds.size())
    throw DataError(fmt::format("row {} shows no spectrum", py));
  return ds.spectra()[*idx];
}

std::uint32_t find_slice_for_cursor(const DataSet &ds, const RasterResult &rr,
                                    std::uint32_t px, std::uint32_t py) {
  return cursor_readout(ds, rr, px, py).bin_index;
}

Grid time_slice(const DataSet &ds, std::uint32_t channel) {
  const auto layout = pixel_layout(ds);
  for (const auto &s : ds.spectra())
    check_channel(s, channel);
  Grid g{layout.rows, layout.cols, std::vector<float>(std::size_t{layout.rows} * layout.cols, 0)};
  for (std::size_t i = 0; i < ds.size(); ++i)
    g.values[layout.cell[i]] = ds.spectra()[i].counts()[channel];
  return g;
}

Grid pixel_totals(const DataSet &ds) {
  const auto layout = pixel_layout(ds);
  Grid g{layout.rows, layout.cols, std::vector<float>(std::size_t{layout.rows} * layout.cols, 0)};
  for (std::size_t i = 0; i < ds.size(); ++i)
    g.values[layout.cell[i]] = static_cast<float>(ds.spectra()[i].total_counts());
  return g;
}

std::vector<Point> point_cloud(const DataSet &ds, std::optional<std::uint32_t> channel) {
  std::vector<Point> out;
  out.reserve(ds.size());
  for (const auto &s : ds.spectra()) {
    if (!s.geometry())
      throw DataError(fmt::format("spectrum {} has no detector geometry", s.id()));
    if (channel)
      check_channel(s, *channel);
    const auto &p = s.geometry()->position();
    out.push_back({p[0], p[1], p[2],
                   channel ? static_cast<double>(s.counts()[*channel]) : s.total_counts(),
                   s.id()});
  }
  return out;
}

const std::array<Rgb, 256> &colormap() {
  static const std::array<Rgb, 256> table{{
    {0, 0, 0}, {0, 0, 48}, {1, 0, 50}, {1, 0, 52},
    {2, 0, 53}, {2, 0, 55}, {3, 0, 57}, {3, 0, 59},
    {4, 0, 60}, {4, 0, 62}, {5, 0, 64}, {5, 0, 66},
    {6, 0, 68}, {6, 0, 69}, {7, 0, 71}, {7, 0, 73},
    {8, 0, 75}, {8, 0, 76}, {9, 0, 78}, {9, 0, 80},
    {10, 0, 82}, {10, 0, 84}, {11, 0, 85}, {11, 0, 87},
    {12, 0, 89}, {12, 0, 91}, {13, 0, 92}, {13, 0, 94},
    {14, 0, 96}, {14, 0, 98}, {15, 0, 100}, {15, 0, 101},
    {16, 0, 103}, {16, 0, 105}, {17, 0, 107}, {17, 0, 108},
    {18, 0, 110}, {18, 0, 112}, {19, 0, 114}, {19, 0, 116},
    {20, 0, 117}, {20, 0, 119}, {21, 0, 121}, {21, 0, 123},
    {22, 0, 124}, {22, 0, 126}, {23, 0, 128}, {23, 0, 130},
    {24, 0, 132}, {24, 0, 133}, {25, 0, 135}, {25, 0, 137},
    {26, 0, 139}, {26, 0, 140}, {27, 0, 142}, {27, 0, 144},
    {28, 0, 146}, {28, 0, 148}, {29, 0, 149}, {29, 0, 151},
    {30, 0, 153}, {30, 0, 155}, {31, 0, 156}, {31, 0, 158},
    {32, 0, 160}, {34, 0, 160}, {37, 0, 159}, {40, 0, 158},
    {42, 0, 158}, {44, 0, 158}, {47, 0, 157}, {50, 0, 156},
    {52, 0, 156}, {54, 0, 156}, {57, 0, 155}, {60, 0, 154},
    {62, 0, 154}, {64, 0, 154}, {67, 0, 153}, {70, 0, 152},
    {72, 0, 152}, {74, 0, 152}, {77, 0, 151}, {80, 0, 150},
    {82, 0, 150}, {84, 0, 150}, {87, 0, 149}, {90, 0, 148},
    {92, 0, 148}, {94, 0, 148}, {97, 0, 147}, {100, 0, 146},
    {102, 0, 146}, {104, 0, 146}, {107, 0, 145}, {110, 0, 144},
    {112, 0, 144}, {114, 0, 144}, {117, 0, 143}, {120, 0, 142},
    {122, 0, 142}, {124, 0, 142}, {127, 0, 141}, {130, 0, 140},
    {132, 0, 140}, {134, 0, 140}, {137, 0, 139}, {140, 0, 138},
    {142, 0, 138}, {144, 0, 138}, {147, 0, 137}, {150, 0, 136},
    {152, 0, 136}, {154, 0, 136}, {157, 0, 135}, {160, 0, 134},
    {162, 0, 134}, {164, 0, 134}, {167, 0, 133}, {170, 0, 132},
    {172, 0, 132}, {174, 0, 132}, {177, 0, 131}, {180, 0, 130},
    {182, 0, 130}, {184, 0, 130}, {187, 0, 129}, {190, 0, 128},
    {192, 0, 128}, {193, 2, 126}, {194, 4, 124}, {195, 6, 122},
    {196, 8, 120}, {197, 10, 118}, {198, 12, 116}, {199, 14, 114},
    {200, 16, 112}, {201, 18, 110}, {202, 20, 108}, {203, 22, 106},
    {204, 24, 104}, {205, 26, 102}, {206, 28, 100}, {207, 30, 98},
    {208, 32, 96}, {209, 34, 94}, {210, 36, 92}, {211, 38, 90},
    {212, 40, 88}, {213, 42, 86}, {214, 44, 84}, {215, 46, 82},
    {216, 48, 80}, {217, 50, 78}, {218, 52, 76}, {219, 54, 74},
    {220, 56, 72}, {221, 58, 70}, {222, 60, 68}, {223, 62, 66},
    {224, 64, 64}, {224, 66, 62}, {225, 68, 60}, {226, 70, 58},
    {227, 72, 56}, {228, 74, 54}, {229, 76, 52}, {230, 78, 50},
    {231, 80, 48}, {232, 82, 46}, {233, 84, 44}, {234, 86, 42},
    {235, 88, 40}, {236, 90, 38}, {237, 92, 36}, {238, 94, 34},
    {239, 96, 32}, {240, 98, 30}, {241, 100, 28}, {242, 102, 26},
    {243, 104, 24}, {244, 106, 22}, {245, 108, 20}, {246, 110, 18},
    {247, 112, 16}, {248, 114, 14}, {249, 116, 12}, {250, 118, 10},
    {251, 120, 8}, {252, 122, 6}, {253, 124, 4}, {254, 126, 2},
    {255, 128, 0}, {255, 130, 1}, {255, 133, 1}, {255, 135, 2},
    {255, 137, 3}, {255, 140, 3}, {255, 142, 4}, {255, 144, 5},
    {255, 147, 5}, {255, 149, 6}, {255, 151, 7}, {255, 154, 7},
    {255, 156, 8}, {255, 158, 9}, {255, 161, 9}, {255, 163, 10},
    {255, 165, 11}, {255, 168, 11}, {255, 170, 12}, {255, 172, 13},
    {255, 175, 13}, {255, 177, 14}, {255, 179, 15}, {255, 182, 15},
    {255, 184, 16}, {255, 186, 17}, {255, 189, 17}, {255, 191, 18},
    {255, 193, 19}, {255, 196, 19}, {255, 198, 20}, {255, 200, 21},
    {255, 203, 21}, {255, 205, 22}, {255, 207, 23}, {255, 210, 23},
    {255, 212, 24}, {255, 214, 25}, {255, 217, 25}, {255, 219, 26},
    {255, 221, 27}, {255, 224, 27}, {255, 226, 28}, {255, 228, 29},
    {255, 231, 29}, {255, 233, 30}, {255, 235, 31}, {255, 238, 31},
    {255, 240, 32}, {255, 241, 47}, {255, 242, 62}, {255, 243, 77},
    {255, 244, 91}, {255, 245, 106}, {255, 246, 121}, {255, 247, 136},
    {255, 248, 151}, {255, 249, 166}, {255, 250, 181}, {255, 251, 196},
    {255, 252, 210}, {255, 253, 225}, {255, 254, 240}, {255, 255, 255},
  }};
  return table;
}

std::string to_pgm(const RasterResult &rr) {
  auto out = fmt::format("P5\n{} {}\n255\n", rr.width, rr.height);
  out.append(reinterpret_cast<const char *>(rr.pixels.data()), rr.pixels.size());
  return out;
}

} // namespace tofbench::views
