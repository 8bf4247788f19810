#include "support.hpp"

#include "tofbench/retrievers.hpp"

#include "doctest.h"

#include <fstream>
#include <sstream>

using namespace tofbench;
using namespace tofbench::io;
using testsupport::ScratchDir;

namespace {

DataSet bank(const std::string &title, std::uint32_t n_spectra,
             std::uint32_t n_bins, float base) {
  auto xs = XScale::uniform(1000, 20000, n_bins);
  std::vector<Spectrum> s;
  for (std::uint32_t i = 0; i < n_spectra; ++i)
    s.emplace_back(i, xs, std::vector<float>(n_bins, base + i));
  return DataSet(title, XUnits::tof_us, "counts", std::move(s));
}

Run three_dataset_run() {
  return Run{"GPPD", 8712, 1020300000,
             {{DatasetKind::monitor, bank("monitor", 1, 100, 1)},
              {DatasetKind::histogram, bank("bank1", 5, 200, 10)},
              {DatasetKind::histogram, bank("bank2", 3, 200, 20)}}};
}

void write_text(const std::filesystem::path &p, const std::string &text) {
  std::ofstream(p) << text;
}

std::string slurp(const std::filesystem::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

} // namespace

TEST_CASE("probe lists the directory") {
  ScratchDir dir("probe");
  const auto run = three_dataset_run();
  write_runfile(dir / "r.trf", run);

  ReadStats stats;
  auto d = probe(dir / "r.trf", &stats);
  CHECK(d.instrument == "GPPD");
  CHECK(d.run_number == 8712);
  CHECK(d.start_time == 1020300000);
  REQUIRE(d.entries.size() == 3);
  CHECK(d.entries[0].kind == DatasetKind::monitor);
  CHECK(d.entries[1].name == "bank1");
  CHECK(d.entries[1].n_spectra == 5);
  CHECK(d.entries[2].n_spectra == 3);
  CHECK(d.entries[2].n_bins == 200);
  CHECK(d.header_bytes % 8 == 0);
  CHECK(d.entries[0].offset == d.header_bytes);
  CHECK(d.entries[1].offset == d.entries[0].offset + d.entries[0].length);
  // Only header and directory bytes were read.
  CHECK(stats.bytes_read <= d.header_bytes);
  CHECK(stats.bytes_read > d.header_bytes - 8);
}

TEST_CASE("probe error cases are distinct") {
  ScratchDir dir("probe-err");
  write_runfile(dir / "r.trf", three_dataset_run());
  const auto bytes = slurp(dir / "r.trf");

  auto patched = bytes;
  patched.replace(0, 4, "XXXX");
  write_text(dir / "magic.trf", patched);
  try {
    probe(dir / "magic.trf");
    FAIL("expected bad magic");
  } catch (const FormatError &e) {
    CHECK(e.code() == FormatErrorCode::bad_magic);
  }

  auto version = bytes;
  version[4] = 2;
  write_text(dir / "version.trf", version);
  try {
    probe(dir / "version.trf");
    FAIL("expected version error");
  } catch (const FormatError &e) {
    CHECK(e.code() == FormatErrorCode::unsupported_version);
  }

  // Cut inside the second directory entry.
  write_text(dir / "trunc.trf", bytes.substr(0, 60));
  try {
    probe(dir / "trunc.trf");
    FAIL("expected truncation");
  } catch (const FormatError &e) {
    CHECK(e.code() == FormatErrorCode::truncated);
    CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
  }

  // Header intact, payload cut off.
  const auto d = probe(dir / "r.trf");
  write_text(dir / "short.trf", bytes.substr(0, d.entries[2].offset + 10));
  try {
    probe(dir / "short.trf");
    FAIL("expected truncation");
  } catch (const FormatError &e) {
    CHECK(e.code() == FormatErrorCode::truncated);
  }

  CHECK_THROWS_AS(probe(dir / "missing.trf"), IoError);
}

TEST_CASE("read_runfile full and partial") {
  ScratchDir dir("read");
  const auto run = three_dataset_run();
  const auto path = dir / "r.trf";
  write_runfile(path, run);

  auto full = read_runfile(path);
  REQUIRE(full.size() == 3);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(full[i] == run.datasets[i].data);

  ReadStats stats;
  LoadSelection one;
  one.dataset_indices = std::vector<std::uint32_t>{1};
  auto part = read_runfile(path, one, &stats);
  REQUIRE(part.size() == 1);
  CHECK(part[0] == run.datasets[1].data);
  const auto d = probe(path);
  CHECK(stats.bytes_read == d.header_bytes + d.entries[1].length);

  LoadSelection bad_id;
  bad_id.dataset_indices = std::vector<std::uint32_t>{1};
  bad_id.spectrum_ids = std::vector<std::uint32_t>{5};
  try {
    read_runfile(path, bad_id);
    FAIL("expected error");
  } catch (const DataError &e) {
    CHECK(std::string(e.what()).find("5") != std::string::npos);
  }

  LoadSelection bad_index;
  bad_index.dataset_indices = std::vector<std::uint32_t>{3};
  CHECK_THROWS_AS(read_runfile(path, bad_index), DataError);

  LoadSelection bins;
  bins.dataset_indices = std::vector<std::uint32_t>{2};
  bins.spectrum_ids = std::vector<std::uint32_t>{1};
  bins.bin_range = std::pair<std::uint32_t, std::uint32_t>{10, 20};
  auto sliced = read_runfile(path, bins);
  REQUIRE(sliced[0].size() == 1);
  CHECK(sliced[0].spectra()[0] ==
        run.datasets[2].data.spectra()[1].slice_bins(10, 20));

  bins.bin_range = std::pair<std::uint32_t, std::uint32_t>{10, 201};
  CHECK_THROWS_AS(read_runfile(path, bins), DataError);
}

TEST_CASE("write_runfile edge cases") {
  ScratchDir dir("write");
  write_runfile(dir / "empty.trf", "NONE", 1, 0, {});
  auto d = probe(dir / "empty.trf");
  CHECK(d.entries.empty());
  CHECK(read_runfile(dir / "empty.trf").empty());

  std::vector<double> edges(5001);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = 1000.0 * std::exp(0.001 * static_cast<double>(i)) + 1e-9 * i;
  Spectrum s(0, XScale::explicit_edges(edges), std::vector<float>(5000, 1.5f));
  DataSet ds("log", XUnits::tof_us, "counts", {s});
  write_runfile(dir / "log.trf", "X", 2, 3, {ds});
  auto back = read_runfile(dir / "log.trf");
  CHECK(back[0].spectra()[0].xscale().edges() == edges);

  CHECK_THROWS_AS(write_runfile(dir / "no/such/dir.trf", "X", 1, 0, {}), IoError);
}

TEST_CASE("kinds are inferred from monitor attributes") {
  ScratchDir dir("kinds");
  auto xs = XScale::uniform(0, 1, 1);
  DataSet mon("mon", XUnits::tof_us, "counts",
              {Spectrum(0, xs, {1}, std::nullopt,
                        {Attribute("monitor", std::int64_t{1})})});
  write_runfile(dir / "k.trf", "X", 1, 0, {mon, bank("b", 1, 1, 1)});
  auto d = probe(dir / "k.trf");
  CHECK(d.entries[0].kind == DatasetKind::monitor);
  CHECK(d.entries[1].kind == DatasetKind::histogram);
}

TEST_CASE("randomized TRF1 round trip and partial reads") {
  ScratchDir dir("rt");
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    const auto run = testsupport::random_run(rng);
    const auto path = dir / "r.trf";
    write_runfile(path, run);
    CHECK(read_run(path) == run);

    const auto full = read_runfile(path);
    LoadSelection sel;
    if (!full.empty() && rng() % 2) {
      std::vector<std::uint32_t> idx;
      for (std::uint32_t i = 0; i < full.size(); ++i)
        if (rng() % 2)
          idx.push_back(i);
      sel.dataset_indices = idx;
    }
    auto chosen = testsupport::restrict_selection(full, sel);
    std::vector<std::uint32_t> ids;
    for (const auto &ds : chosen)
      for (const auto &s : ds.spectra())
        if (rng() % 3 == 0)
          ids.push_back(s.id());
    if (!ids.empty())
      sel.spectrum_ids = ids;
    CHECK(read_runfile(path, sel) == testsupport::restrict_selection(full, sel));
  }
}

TEST_CASE("ascii edge convention and errors") {
  ScratchDir dir("ascii");
  write_text(dir / "a.txt", "0 4\n1 6\n2\n");
  auto ds = read_ascii_columns(dir / "a.txt");
  REQUIRE(ds.size() == 1);
  CHECK(ds.spectra()[0].xscale().edges() == std::vector<double>{0, 1, 2});
  CHECK(ds.spectra()[0].counts()[0] == 4.0f);
  CHECK(ds.spectra()[0].counts()[1] == 6.0f);
  CHECK(ds.spectra()[0].errors()[1] == doctest::Approx(std::sqrt(6.0)));

  write_text(dir / "h.txt", "# just a header\n# nothing else\n");
  CHECK_THROWS_WITH_AS(read_ascii_columns(dir / "h.txt"),
                       doctest::Contains("no data"), DataError);

  write_text(dir / "two.txt", "0 1 1\n1 2 1\n2\n\n5 3 1\n6 4 2\n7\n");
  auto two = read_ascii_columns(dir / "two.txt");
  REQUIRE(two.size() == 2);
  CHECK(two.spectra()[1].xscale().front() == 5.0);
  CHECK(two.spectra()[1].errors()[1] == 2.0f);

  write_text(dir / "centers.txt", "0.5 1\n1.5 2\n2.5 3\n");
  auto centers = read_ascii_columns(dir / "centers.txt");
  CHECK(centers.spectra()[0].xscale().edges() == std::vector<double>{0, 1, 2, 3});

  write_text(dir / "bad.txt", "# c\n0 1\n1 x\n2\n");
  CHECK_THROWS_WITH_AS(read_ascii_columns(dir / "bad.txt"),
                       doctest::Contains(":3:"), DataError);

  write_text(dir / "ragged.txt", "0 1 1\n1 2\n2\n");
  CHECK_THROWS_WITH_AS(read_ascii_columns(dir / "ragged.txt"),
                       doctest::Contains("ragged"), DataError);
}

TEST_CASE("ascii round trip") {
  ScratchDir dir("ascii-rt");
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 40; ++trial) {
    const auto ds = testsupport::random_dataset(rng);
    write_ascii_columns(ds, dir / "d.txt");
    CHECK(read_ascii_columns(dir / "d.txt") == ds);
  }

  const auto empty = DataSet::empty(XUnits::Q_invA, "nothing");
  write_ascii_columns(empty, dir / "e.txt");
  CHECK(read_ascii_columns(dir / "e.txt") == empty);
}

TEST_CASE("ascii writes one block per spectrum") {
  ScratchDir dir("ascii-many");
  const auto ds = bank("many", 10000, 4, 1);
  write_ascii_columns(ds, dir / "m.txt");
  std::ifstream in(dir / "m.txt");
  std::size_t blocks = 0;
  for (std::string line; std::getline(in, line);)
    if (line.rfind("# @spectrum", 0) == 0)
      ++blocks;
  CHECK(blocks == 10000);
  CHECK(read_ascii_columns(dir / "m.txt").size() == 10000);
}

TEST_CASE("hierarchical round trip and schema errors") {
  ScratchDir dir("hier");
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 40; ++trial) {
    const auto run = testsupport::random_run(rng);
    write_hierarchical(run, dir / "r.json");
    CHECK(read_hierarchical(dir / "r.json") == run);
  }

  write_text(dir / "noentry.json", R"({"format":"x","version":1})");
  CHECK_THROWS_WITH_AS(read_hierarchical(dir / "noentry.json"),
                       doctest::Contains("/entry"), DataError);

  write_text(dir / "badcounts.json",
             R"({"entry":{"instrument":{"name":"x"},"run_number":1,"start_time":0,
                 "data":[{"name":"d","kind":"histogram","x_units":"tof_us",
                 "y_units":"counts","attributes":[],"spectra":[{"id":0,
                 "group_id":0,"label":"","xscale":{"kind":"uniform","start":0,
                 "end":1,"nbins":1},"counts":"!!!!","errors":"AACAPw==",
                 "geometry":null,"attributes":[]}]}]}})");
  CHECK_THROWS_WITH_AS(read_hierarchical(dir / "badcounts.json"),
                       doctest::Contains("/entry/data/0/spectra/0/counts"),
                       DataError);
}

TEST_CASE("hierarchical counts match the TRF1 payload bytes") {
  ScratchDir dir("dual");
  std::mt19937_64 rng(14);
  auto xs = XScale::uniform(0, 10, 10);
  std::vector<float> c(10);
  for (auto &x : c)
    x = static_cast<float>(rng() % 1000) / 7.0f;
  DataSet ds("d", XUnits::tof_us, "counts", {Spectrum(0, xs, c)});
  Run run{"X", 1, 2, {{DatasetKind::histogram, ds}}};
  write_runfile(dir / "r.trf", run);
  write_hierarchical(run, dir / "r.json");

  // Counts are the last 2*40 bytes of the single-spectrum block.
  const auto bytes = slurp(dir / "r.trf");
  const auto counts_bytes = bytes.substr(bytes.size() - 80, 40);
  std::vector<float> from_trf(10);
  std::memcpy(from_trf.data(), counts_bytes.data(), 40);

  const auto back = read_hierarchical(dir / "r.json");
  const auto json_counts = back.datasets[0].data.spectra()[0].counts();
  CHECK(std::vector<float>(json_counts.begin(), json_counts.end()) == from_trf);
  CHECK(from_trf == c);
}
