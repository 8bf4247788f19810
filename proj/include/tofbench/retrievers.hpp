#pragma once

// Run files and exports.
//
// TRF1 is the native binary run file: a header with a dataset directory
// followed by per-dataset blocks. Spectrum records inside a block can be
// skipped individually, so partial loads only read the selected payloads.
// Writers need exclusive access to their target path; readers are
// reentrant.

#include "tofbench/binary.hpp"
#include "tofbench/dataset.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace tofbench::io {

enum class DatasetKind : std::uint8_t {
  monitor = 0,
  histogram = 1,
  pulse_height = 2
};

std::string_view to_string(DatasetKind k);

struct RunDataset {
  DatasetKind kind;
  DataSet data;

  bool operator==(const RunDataset &) const = default;
};

struct Run {
  std::string instrument;
  std::uint32_t run_number = 0;
  std::int64_t start_time = 0;
  std::vector<RunDataset> datasets;

  bool operator==(const Run &) const = default;
};

struct DirectoryEntry {
  std::string name;
  DatasetKind kind;
  std::uint32_t n_spectra;
  /// Bin count of the shared x-scale; 0 when spectra carry their own.
  std::uint32_t n_bins;
  std::uint64_t offset;
  std::uint64_t length;

  bool operator==(const DirectoryEntry &) const = default;
};

struct RunFileDirectory {
  std::uint32_t format_version = 1;
  std::string instrument;
  std::uint32_t run_number = 0;
  std::int64_t start_time = 0;
  std::vector<DirectoryEntry> entries;
  /// Bytes of header + directory + alignment padding.
  std::uint64_t header_bytes = 0;

  bool operator==(const RunFileDirectory &) const = default;
};

struct LoadSelection {
  std::optional<std::vector<std::uint32_t>> dataset_indices;
  std::optional<std::vector<std::uint32_t>> spectrum_ids;
  /// Half-open bin range [first, last).
  std::optional<std::pair<std::uint32_t, std::uint32_t>> bin_range;

  static LoadSelection all() { return {}; }
};

/// Logical bytes pulled from the file by a reader.
struct ReadStats {
  std::uint64_t bytes_read = 0;
};

enum class FormatErrorCode { bad_magic, truncated, unsupported_version, corrupt };

class FormatError : public DataError {
public:
  FormatError(FormatErrorCode code, const std::string &what)
      : DataError(what), code_(code) {}
  FormatErrorCode code() const noexcept { return code_; }

private:
  FormatErrorCode code_;
};

inline constexpr std::uint32_t trf_format_version = 1;

RunFileDirectory probe(const std::filesystem::path &path,
                       ReadStats *stats = nullptr);

std::vector<DataSet> read_runfile(const std::filesystem::path &path,
                                  const LoadSelection &sel = {},
                                  ReadStats *stats = nullptr);

/// Full read that keeps run metadata and dataset kinds.
Run read_run(const std::filesystem::path &path);

void write_runfile(const std::filesystem::path &path, const Run &run);
/// Kinds are inferred: a dataset whose spectra all carry monitor=1 is a
/// monitor dataset, anything else a histogram.
void write_runfile(const std::filesystem::path &path, std::string instrument,
                   std::uint32_t run_number, std::int64_t start_time,
                   std::vector<DataSet> datasets);

/// Reads 2- or 3-column text: x, counts, optional errors. '#' lines are
/// comments and blank lines separate spectra. A block whose x column has
/// one more row than its counts column holds bin edges; a block with
/// equal-length columns holds bin centers of a uniform scale.
DataSet read_ascii_columns(const std::filesystem::path &path);
void write_ascii_columns(const DataSet &ds, const std::filesystem::path &path);

/// JSON document mirroring the NeXus entry layout.
void write_hierarchical(const Run &run, const std::filesystem::path &path);
Run read_hierarchical(const std::filesystem::path &path);

namespace records {

// TRF1 record encodings, reused by the wire protocol.
void encode_directory_entry(ByteWriter &w, const DirectoryEntry &e);
DirectoryEntry decode_directory_entry(ByteReader &r);

void encode_directory(ByteWriter &w, const RunFileDirectory &dir);
RunFileDirectory decode_directory(ByteReader &r);

/// Dataset block as stored in a run file.
void encode_dataset_block(ByteWriter &w, const DataSet &ds);
DataSet decode_dataset_block(ByteReader &r, std::string title,
                             std::uint32_t n_spectra);

/// Self-describing list of datasets: u32 count, then per dataset the title,
/// spectrum count and block.
void encode_datasets(ByteWriter &w, const std::vector<DataSet> &datasets);
std::vector<DataSet> decode_datasets(ByteReader &r);

} // namespace records

} // namespace tofbench::io
