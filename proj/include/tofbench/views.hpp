#pragma once

// View computations behind the image, slice and 3D views and the PGM
// export. Everything here is a pure function of its inputs.

#include "tofbench/dataset.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace tofbench::views {

enum class IntensityScale { linear, log };
/// How a compressed screen column combines the bins it covers.
enum class Aggregation { max, mean };

struct Viewport {
  std::uint32_t width_px = 1;
  std::uint32_t height_px = 1;
  /// First spectrum shown (vertical scroll position).
  std::uint32_t row_offset = 0;
  /// First bin shown when compression is off.
  std::uint32_t col_offset = 0;
  bool horizontal_compression = true;
  IntensityScale intensity_scale = IntensityScale::linear;
  Aggregation aggregation = Aggregation::max;
};

/// Half-open bin range; empty for columns past the data.
struct BinRange {
  std::uint32_t first = 0;
  std::uint32_t last = 0;
  bool empty() const noexcept { return last <= first; }
  bool operator==(const BinRange &) const = default;
};

struct RasterResult {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  /// Row-major color indices, width * height.
  std::vector<std::uint8_t> pixels;
  /// Screen row -> spectrum id; nullopt below the last spectrum.
  std::vector<std::optional<std::uint32_t>> row_map;
  /// Screen row -> position of the spectrum in the dataset.
  std::vector<std::optional<std::uint32_t>> row_index;
  /// Screen column -> bins it covers.
  std::vector<BinRange> col_map;
  /// Smallest and largest rendered value; (0, 0) when nothing is drawn.
  std::pair<double, double> value_range{0.0, 0.0};
  std::uint32_t rows_per_spectrum = 1;

  std::uint8_t at(std::uint32_t x, std::uint32_t y) const { return pixels[std::size_t{y} * width + x]; }
  bool operator==(const RasterResult &) const = default;
};

/// One screen row per spectrum (more when the window is taller than the
/// dataset, by whole-row replication), scrolling instead of vertical
/// compression. Spectra with zero total counts render as color 0.
RasterResult image_raster(const DataSet &ds, const Viewport &vp);

/// Color index of a value given the rendered range.
std::uint8_t color_index(double v, std::pair<double, double> range, IntensityScale scale,
                         double min_positive);

struct Readout {
  std::uint32_t spectrum_id;
  std::string label;
  std::uint32_t bin_index;
  double x_at_cursor; // bin center
  double y_value;     // raw counts of that bin
  double y_error;
  bool operator==(const Readout &) const = default;
};

/// Resolves a screen position. A column covering several bins reports the
/// bin holding the largest value, the one the windowed max rendered.
Readout cursor_readout(const DataSet &ds, const RasterResult &rr, std::uint32_t px,
                       std::uint32_t py);

const Spectrum &pointed_spectrum(const DataSet &ds, const RasterResult &rr, std::uint32_t py);

/// The channel a linked slice view shows for a cursor position.
std::uint32_t find_slice_for_cursor(const DataSet &ds, const RasterResult &rr,
                                    std::uint32_t px, std::uint32_t py);

struct Grid {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<float> values; // row-major
  float at(std::uint32_t r, std::uint32_t c) const { return values[std::size_t{r} * cols + c]; }
  bool operator==(const Grid &) const = default;
};

/// Counts in one channel laid out by the row/col attributes of each
/// spectrum; pixels without a spectrum are 0.
Grid time_slice(const DataSet &ds, std::uint32_t channel);

/// Per-pixel total counts on the same layout as time_slice.
Grid pixel_totals(const DataSet &ds);

struct Point {
  double x, y, z;
  double intensity;
  std::uint32_t id;
  bool operator==(const Point &) const = default;
};

/// One point per spectrum at its detector position. Without a channel the
/// intensity is the total count.
std::vector<Point> point_cloud(const DataSet &ds, std::optional<std::uint32_t> channel = {});

using Rgb = std::array<std::uint8_t, 3>;
/// The built-in 256-entry palette; entry 0 is black.
const std::array<Rgb, 256> &colormap();

/// Binary PGM (P5) of the color indices.
std::string to_pgm(const RasterResult &rr);

} // namespace tofbench::views
