#pragma once

// Record-level TRF1 decoding shared by the in-memory reader (ByteReader) and
// the seeking file reader (CountingFile). Both sources offer read(), skip(),
// get<T>(), get_string() and tell().

#include "tofbench/binary.hpp"
#include "tofbench/dataset.hpp"
#include "tofbench/retrievers.hpp"

#include <fmt/format.h>

#include <fstream>
#include <functional>

namespace tofbench::io::codec {

enum AttrTag : std::uint8_t { tag_f64 = 0, tag_i64 = 1, tag_string = 2, tag_vec3 = 3 };
enum ScaleKind : std::uint8_t { scale_uniform = 0, scale_explicit = 1 };

void write_attribute(ByteWriter &w, const Attribute &a);
void write_attributes(ByteWriter &w, const Attributes &attrs);
void write_xscale(ByteWriter &w, const XScale &xs);
void write_spectrum(ByteWriter &w, const Spectrum &s, bool shared_scale);
bool scale_is_shared(const DataSet &ds);

inline FormatError corrupt(std::uint64_t offset, const std::string &what) {
  return FormatError(FormatErrorCode::corrupt,
                     fmt::format("corrupt record at byte offset {}: {}",
                                 offset, what));
}

template <class Src> Attribute read_attribute(Src &src) {
  auto name = src.get_string();
  const auto at = src.tell();
  const auto tag = src.template get<std::uint8_t>();
  try {
    switch (tag) {
    case tag_f64:
      return Attribute(std::move(name), src.template get<double>());
    case tag_i64:
      return Attribute(std::move(name), src.template get<std::int64_t>());
    case tag_string:
      return Attribute(std::move(name), src.get_string());
    case tag_vec3: {
      Vec3 v;
      for (auto &x : v)
        x = src.template get<double>();
      return Attribute(std::move(name), v);
    }
    default:
      break;
    }
  } catch (const FormatError &) {
    throw;
  } catch (const TruncatedError &) {
    throw;
  } catch (const DataError &e) {
    throw corrupt(at, e.what());
  }
  throw corrupt(at, fmt::format("unknown attribute type tag {}", tag));
}

template <class Src> Attributes read_attributes(Src &src) {
  const auto n = src.template get<std::uint16_t>();
  Attributes attrs;
  for (std::uint16_t i = 0; i < n; ++i)
    attrs.push_back(read_attribute(src));
  return attrs;
}

template <class Src> XScale read_xscale(Src &src) {
  const auto at = src.tell();
  const auto kind = src.template get<std::uint8_t>();
  try {
    if (kind == scale_uniform) {
      const auto start = src.template get<double>();
      const auto end = src.template get<double>();
      const auto n = src.template get<std::uint32_t>();
      return XScale::uniform(start, end, n);
    }
    if (kind == scale_explicit) {
      const auto n = src.template get<std::uint32_t>();
      std::vector<double> edges;
      // Grow as bytes arrive so a corrupt count cannot force a huge
      // allocation up front.
      edges.reserve(std::min<std::uint32_t>(n, 1u << 16));
      for (std::uint32_t i = 0; i < n; ++i)
        edges.push_back(src.template get<double>());
      return XScale::explicit_edges(std::move(edges));
    }
  } catch (const TruncatedError &) {
    throw;
  } catch (const DataError &e) {
    throw corrupt(at, e.what());
  }
  throw corrupt(at, fmt::format("unknown x-scale kind {}", kind));
}

struct SpectrumHeader {
  std::uint32_t id;
  std::uint32_t group_id;
  std::string label;
  XScale xscale;
  std::optional<DetectorGeometry> geometry;
  Attributes attrs;
};

template <class Src>
SpectrumHeader read_spectrum_header(Src &src,
                                    const std::optional<XScale> &shared) {
  const auto id = src.template get<std::uint32_t>();
  const auto group = src.template get<std::uint32_t>();
  auto label = src.get_string();
  XScale xs = shared ? *shared : read_xscale(src);
  std::optional<DetectorGeometry> geom;
  const auto at = src.tell();
  const auto has_geometry = src.template get<std::uint8_t>();
  if (has_geometry > 1)
    throw corrupt(at, "bad has_geometry flag");
  if (has_geometry) {
    double g[6];
    for (auto &x : g)
      x = src.template get<double>();
    try {
      geom.emplace(Vec3{g[0], g[1], g[2]}, g[3], g[4], g[5]);
    } catch (const DataError &e) {
      throw corrupt(at, e.what());
    }
  }
  auto attrs = read_attributes(src);
  return {id, group, std::move(label), std::move(xs), std::move(geom),
          std::move(attrs)};
}

template <class Src>
void read_floats(Src &src, std::vector<float> &out, std::size_t n) {
  std::uint64_t left;
  if constexpr (requires { src.remaining(); })
    left = src.remaining();
  else
    left = src.size() - src.tell();
  if (n > left / sizeof(float))
    throw TruncatedError(src.tell(), n * sizeof(float));
  out.resize(n);
  src.read(out.data(), n * sizeof(float));
}

struct BlockFilter {
  /// Null keeps every spectrum.
  std::function<bool(std::uint32_t)> keep;
  std::optional<std::pair<std::uint32_t, std::uint32_t>> bin_range;
};

template <class Src>
DataSet read_block(Src &src, std::string title, std::uint32_t n_spectra,
                   const BlockFilter &filter = {}) {
  const auto at = src.tell();
  const auto units_code = src.template get<std::uint8_t>();
  if (units_code > 3)
    throw corrupt(at, fmt::format("unknown x units code {}", units_code));
  const auto shared_flag = src.template get<std::uint8_t>();
  if (shared_flag > 1)
    throw corrupt(at + 1, "bad shared_scale flag");
  std::optional<XScale> shared;
  if (shared_flag)
    shared = read_xscale(src);
  auto y_units = src.get_string();
  auto ds_attrs = read_attributes(src);

  std::vector<Spectrum> spectra;
  for (std::uint32_t k = 0; k < n_spectra; ++k) {
    auto h = read_spectrum_header(src, shared);
    const std::uint32_t nb = h.xscale.bin_count();
    const std::uint64_t payload = 4ull * nb;
    if (filter.keep && !filter.keep(h.id)) {
      src.skip(2 * payload);
      continue;
    }
    std::vector<float> counts, errors;
    XScale xs = std::move(h.xscale);
    if (filter.bin_range) {
      const auto [first, last] = *filter.bin_range;
      if (!(first < last) || last > nb)
        throw DataError(fmt::format(
            "bin range [{}, {}) is outside spectrum {} with {} bins", first,
            last, h.id, nb));
      for (auto *arr : {&counts, &errors}) {
        src.skip(4ull * first);
        read_floats(src, *arr, last - first);
        src.skip(4ull * (nb - last));
      }
      xs = xs.slice(first, last);
    } else {
      read_floats(src, counts, nb);
      read_floats(src, errors, nb);
    }
    try {
      spectra.emplace_back(h.id, std::move(xs), std::move(counts),
                           std::move(errors), std::move(h.attrs),
                           std::move(h.label), h.group_id,
                           std::move(h.geometry));
    } catch (const DataError &e) {
      throw corrupt(at, e.what());
    }
  }
  try {
    return DataSet(std::move(title), static_cast<XUnits>(units_code),
                   std::move(y_units), std::move(spectra), std::move(ds_attrs));
  } catch (const DataError &e) {
    throw corrupt(at, e.what());
  }
}

/// Seeking file source that counts the bytes it actually reads.
class CountingFile {
public:
  explicit CountingFile(const std::filesystem::path &path);

  void read(void *dst, std::size_t n);
  void skip(std::uint64_t n);
  void seek(std::uint64_t offset);

  template <class T>
    requires std::is_arithmetic_v<T>
  T get() {
    T v;
    read(&v, sizeof(T));
    return v;
  }

  std::string get_string() {
    const auto n = get<std::uint16_t>();
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }

  std::uint64_t tell() const noexcept { return pos_; }
  std::uint64_t size() const noexcept { return size_; }
  std::uint64_t bytes_read() const noexcept { return bytes_read_; }

private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::uint64_t size_ = 0;
  std::uint64_t pos_ = 0;
  std::uint64_t bytes_read_ = 0;
};

} // namespace tofbench::io::codec
