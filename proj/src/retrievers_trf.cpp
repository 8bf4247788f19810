#include "trf_codec.hpp"

#include "tofbench/retrievers.hpp"

#include <fmt/format.h>
#include "fmt_path.hpp"

#include <algorithm>
#include <set>
#include <unordered_set>

namespace tofbench::io {

namespace codec {

void write_attribute(ByteWriter &w, const Attribute &a) {
  w.put_string(a.name);
  std::visit(
      [&](const auto &v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, double>) {
          w.put<std::uint8_t>(tag_f64);
          w.put(v);
        } else if constexpr (std::is_same_v<T, std::int64_t>) {
          w.put<std::uint8_t>(tag_i64);
          w.put(v);
        } else if constexpr (std::is_same_v<T, std::string>) {
          w.put<std::uint8_t>(tag_string);
          w.put_string(v);
        } else {
          w.put<std::uint8_t>(tag_vec3);
          for (double x : v)
            w.put(x);
        }
      },
      a.value);
}

void write_attributes(ByteWriter &w, const Attributes &attrs) {
  if (attrs.size() > UINT16_MAX)
    throw DataError("too many attributes for one record");
  w.put(static_cast<std::uint16_t>(attrs.size()));
  for (const auto &a : attrs)
    write_attribute(w, a);
}

void write_xscale(ByteWriter &w, const XScale &xs) {
  if (xs.is_uniform()) {
    w.put<std::uint8_t>(scale_uniform);
    w.put(xs.uniform_start());
    w.put(xs.uniform_end());
    w.put(xs.bin_count());
  } else {
    w.put<std::uint8_t>(scale_explicit);
    auto e = xs.explicit_edge_values();
    w.put(static_cast<std::uint32_t>(e.size()));
    w.put_array(e);
  }
}

void write_spectrum(ByteWriter &w, const Spectrum &s, bool shared_scale) {
  w.put(s.id());
  w.put(s.group_id());
  w.put_string(s.label());
  if (!shared_scale)
    write_xscale(w, s.xscale());
  w.put<std::uint8_t>(s.geometry() ? 1 : 0);
  if (const auto &g = s.geometry()) {
    for (double x : g->position())
      w.put(x);
    w.put(g->initial_path());
    w.put(g->solid_angle());
    w.put(g->efficiency());
  }
  write_attributes(w, s.attributes());
  w.put_array(s.counts());
  w.put_array(s.errors());
}

bool scale_is_shared(const DataSet &ds) {
  if (ds.is_empty())
    return false;
  const auto &first = ds.spectra().front().xscale();
  return std::all_of(ds.spectra().begin(), ds.spectra().end(),
                     [&](const Spectrum &s) { return s.xscale() == first; });
}

CountingFile::CountingFile(const std::filesystem::path &path)
    : path_(path), in_(path, std::ios::binary) {
  if (!in_)
    throw IoError(fmt::format("cannot open {}", path));
  std::error_code ec;
  size_ = std::filesystem::file_size(path, ec);
  if (ec)
    throw IoError(fmt::format("cannot stat {}: {}", path, ec.message()));
}

void CountingFile::read(void *dst, std::size_t n) {
  if (n > size_ - std::min(pos_, size_))
    throw TruncatedError(pos_, n);
  in_.read(static_cast<char *>(dst), static_cast<std::streamsize>(n));
  if (!in_)
    throw IoError(fmt::format("read failed in {} at byte offset {}", path_,
                              pos_));
  pos_ += n;
  bytes_read_ += n;
}

void CountingFile::skip(std::uint64_t n) {
  if (n > size_ - std::min(pos_, size_))
    throw TruncatedError(pos_, n);
  seek(pos_ + n);
}

void CountingFile::seek(std::uint64_t offset) {
  if (offset > size_)
    throw TruncatedError(offset, 0);
  in_.seekg(static_cast<std::streamoff>(offset));
  if (!in_)
    throw IoError(fmt::format("seek failed in {}", path_));
  pos_ = offset;
}

} // namespace codec

std::string_view to_string(DatasetKind k) {
  switch (k) {
  case DatasetKind::monitor:
    return "monitor";
  case DatasetKind::histogram:
    return "histogram";
  case DatasetKind::pulse_height:
    return "pulse_height";
  }
  return "unknown";
}

namespace records {

void encode_directory_entry(ByteWriter &w, const DirectoryEntry &e) {
  w.put_string(e.name);
  w.put(static_cast<std::uint8_t>(e.kind));
  w.put(e.n_spectra);
  w.put(e.n_bins);
  w.put(e.offset);
  w.put(e.length);
}

namespace {
template <class Src> DirectoryEntry read_entry(Src &src) {
  DirectoryEntry e;
  e.name = src.get_string();
  const auto at = src.tell();
  const auto kind = src.template get<std::uint8_t>();
  if (kind > 2)
    throw codec::corrupt(at, fmt::format("unknown dataset kind {}", kind));
  e.kind = static_cast<DatasetKind>(kind);
  e.n_spectra = src.template get<std::uint32_t>();
  e.n_bins = src.template get<std::uint32_t>();
  e.offset = src.template get<std::uint64_t>();
  e.length = src.template get<std::uint64_t>();
  return e;
}

constexpr char magic[4] = {'T', 'R', 'F', '1'};

template <class Src> RunFileDirectory read_header(Src &src) {
  char m[4];
  try {
    src.read(m, 4);
  } catch (const TruncatedError &e) {
    throw FormatError(FormatErrorCode::truncated, e.what());
  }
  if (std::memcmp(m, magic, 4) != 0)
    throw FormatError(FormatErrorCode::bad_magic,
                      fmt::format("bad magic '{}', expected 'TRF1'",
                                  std::string_view(m, 4)));
  try {
    RunFileDirectory dir;
    dir.format_version = src.template get<std::uint32_t>();
    if (dir.format_version != trf_format_version)
      throw FormatError(FormatErrorCode::unsupported_version,
                        fmt::format("unsupported TRF format version {} "
                                    "(this build reads version {})",
                                    dir.format_version, trf_format_version));
    dir.instrument = src.get_string();
    dir.run_number = src.template get<std::uint32_t>();
    dir.start_time = src.template get<std::int64_t>();
    const auto n = src.template get<std::uint32_t>();
    for (std::uint32_t i = 0; i < n; ++i)
      dir.entries.push_back(read_entry(src));
    const auto end = src.tell();
    dir.header_bytes = (end + 7) / 8 * 8;
    return dir;
  } catch (const TruncatedError &e) {
    throw FormatError(FormatErrorCode::truncated,
                      fmt::format("header truncated: {}", e.what()));
  }
}
} // namespace

DirectoryEntry decode_directory_entry(ByteReader &r) { return read_entry(r); }

void encode_directory(ByteWriter &w, const RunFileDirectory &dir) {
  w.put_string(dir.instrument);
  w.put(dir.run_number);
  w.put(dir.start_time);
  w.put(static_cast<std::uint32_t>(dir.entries.size()));
  for (const auto &e : dir.entries)
    encode_directory_entry(w, e);
}

RunFileDirectory decode_directory(ByteReader &r) {
  RunFileDirectory dir;
  dir.instrument = r.get_string();
  dir.run_number = r.get<std::uint32_t>();
  dir.start_time = r.get<std::int64_t>();
  const auto n = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n; ++i)
    dir.entries.push_back(read_entry(r));
  return dir;
}

void encode_dataset_block(ByteWriter &w, const DataSet &ds) {
  const bool shared = codec::scale_is_shared(ds);
  w.put(static_cast<std::uint8_t>(ds.x_units()));
  w.put<std::uint8_t>(shared ? 1 : 0);
  if (shared)
    codec::write_xscale(w, ds.spectra().front().xscale());
  w.put_string(ds.y_units());
  codec::write_attributes(w, ds.attributes());
  for (const auto &s : ds.spectra())
    codec::write_spectrum(w, s, shared);
}

DataSet decode_dataset_block(ByteReader &r, std::string title,
                             std::uint32_t n_spectra) {
  return codec::read_block(r, std::move(title), n_spectra);
}

void encode_datasets(ByteWriter &w, const std::vector<DataSet> &datasets) {
  w.put(static_cast<std::uint32_t>(datasets.size()));
  for (const auto &ds : datasets) {
    w.put_string(ds.title());
    w.put(static_cast<std::uint32_t>(ds.size()));
    encode_dataset_block(w, ds);
  }
}

std::vector<DataSet> decode_datasets(ByteReader &r) {
  const auto n = r.get<std::uint32_t>();
  std::vector<DataSet> out;
  for (std::uint32_t i = 0; i < n; ++i) {
    auto title = r.get_string();
    const auto ns = r.get<std::uint32_t>();
    out.push_back(codec::read_block(r, std::move(title), ns));
  }
  return out;
}

} // namespace records

namespace {

RunFileDirectory probe_file(codec::CountingFile &f) {
  auto dir = records::read_header(f);
  std::uint64_t prev_end = dir.header_bytes;
  for (std::size_t i = 0; i < dir.entries.size(); ++i) {
    const auto &e = dir.entries[i];
    if (e.offset < prev_end)
      throw FormatError(
          FormatErrorCode::corrupt,
          fmt::format("directory entry {} ('{}') overlaps earlier data", i,
                      e.name));
    if (e.length > f.size() || e.offset > f.size() - e.length)
      throw FormatError(
          FormatErrorCode::truncated,
          fmt::format("directory entry {} ('{}') extends past end of file "
                      "(offset {}, length {}, file size {})",
                      i, e.name, e.offset, e.length, f.size()));
    prev_end = e.offset + e.length;
  }
  return dir;
}

DatasetKind infer_kind(const DataSet &ds) {
  if (ds.is_empty())
    return DatasetKind::histogram;
  for (const auto &s : ds.spectra()) {
    const auto *m = s.attribute(attr::monitor);
    if (!m || !attr_value_equal(*m, std::int64_t{1}))
      return DatasetKind::histogram;
  }
  return DatasetKind::monitor;
}

} // namespace

RunFileDirectory probe(const std::filesystem::path &path, ReadStats *stats) {
  codec::CountingFile f(path);
  auto dir = probe_file(f);
  if (stats)
    stats->bytes_read += f.bytes_read();
  return dir;
}

std::vector<DataSet> read_runfile(const std::filesystem::path &path,
                                  const LoadSelection &sel, ReadStats *stats) {
  codec::CountingFile f(path);
  const auto dir = probe_file(f);

  std::vector<std::uint32_t> indices;
  if (sel.dataset_indices) {
    for (auto i : *sel.dataset_indices)
      if (i >= dir.entries.size())
        throw DataError(fmt::format(
            "dataset index {} out of range: {} has {} datasets", i,
            path.filename(), dir.entries.size()));
    indices = *sel.dataset_indices;
  } else {
    for (std::uint32_t i = 0; i < dir.entries.size(); ++i)
      indices.push_back(i);
  }

  codec::BlockFilter filter;
  filter.bin_range = sel.bin_range;
  std::unordered_set<std::uint32_t> wanted, found;
  if (sel.spectrum_ids) {
    wanted.insert(sel.spectrum_ids->begin(), sel.spectrum_ids->end());
    filter.keep = [&](std::uint32_t id) {
      if (!wanted.count(id))
        return false;
      found.insert(id);
      return true;
    };
  }

  std::vector<DataSet> out;
  out.reserve(indices.size());
  for (auto i : indices) {
    const auto &e = dir.entries[i];
    f.seek(e.offset);
    try {
      out.push_back(codec::read_block(f, e.name, e.n_spectra, filter));
    } catch (const TruncatedError &err) {
      throw FormatError(FormatErrorCode::truncated,
                        fmt::format("dataset {} ('{}') truncated: {}", i,
                                    e.name, err.what()));
    }
  }

  if (sel.spectrum_ids)
    for (auto id : *sel.spectrum_ids)
      if (!found.count(id))
        throw DataError(fmt::format(
            "spectrum id {} not found in the selected datasets of {}", id,
            path.filename()));
  if (stats)
    stats->bytes_read += f.bytes_read();
  return out;
}

Run read_run(const std::filesystem::path &path) {
  codec::CountingFile f(path);
  const auto dir = probe_file(f);
  Run run{dir.instrument, dir.run_number, dir.start_time, {}};
  for (const auto &e : dir.entries) {
    f.seek(e.offset);
    run.datasets.push_back({e.kind, codec::read_block(f, e.name, e.n_spectra)});
  }
  return run;
}

void write_runfile(const std::filesystem::path &path, const Run &run) {
  std::vector<Bytes> blocks;
  blocks.reserve(run.datasets.size());
  RunFileDirectory dir{trf_format_version, run.instrument, run.run_number,
                       run.start_time, {}, 0};
  for (const auto &rd : run.datasets) {
    ByteWriter w;
    records::encode_dataset_block(w, rd.data);
    const bool shared = codec::scale_is_shared(rd.data);
    dir.entries.push_back(
        {rd.data.title(), rd.kind, static_cast<std::uint32_t>(rd.data.size()),
         shared ? rd.data.spectra().front().xscale().bin_count() : 0u, 0,
         w.size()});
    blocks.push_back(w.take());
  }

  // Offsets depend on the header size, which does not depend on the offset
  // values themselves (fixed-width fields).
  auto header = [&] {
    ByteWriter h;
    for (char c : records::magic)
      h.put(c);
    h.put(trf_format_version);
    records::encode_directory(h, dir);
    h.pad_to(8);
    return h;
  };
  std::uint64_t offset = header().size();
  for (auto &e : dir.entries) {
    e.offset = offset;
    offset += e.length;
  }
  const auto h = header();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw IoError(fmt::format("cannot open {} for writing", path));
  out.write(reinterpret_cast<const char *>(h.bytes().data()),
            static_cast<std::streamsize>(h.size()));
  for (const auto &b : blocks)
    out.write(reinterpret_cast<const char *>(b.data()),
              static_cast<std::streamsize>(b.size()));
  out.flush();
  if (!out)
    throw IoError(fmt::format("write failed for {}", path));
}

void write_runfile(const std::filesystem::path &path, std::string instrument,
                   std::uint32_t run_number, std::int64_t start_time,
                   std::vector<DataSet> datasets) {
  Run run{std::move(instrument), run_number, start_time, {}};
  for (auto &ds : datasets) {
    const auto kind = infer_kind(ds);
    run.datasets.push_back({kind, std::move(ds)});
  }
  write_runfile(path, run);
}

} // namespace tofbench::io

namespace tofbench {

void ByteWriter::put_string(std::string_view s) {
  if (s.size() > UINT16_MAX)
    throw DataError(fmt::format("string of {} bytes exceeds the 65535-byte "
                                "record limit",
                                s.size()));
  put(static_cast<std::uint16_t>(s.size()));
  const auto at = buf_.size();
  buf_.resize(at + s.size());
  std::memcpy(buf_.data() + at, s.data(), s.size());
}

} // namespace tofbench
