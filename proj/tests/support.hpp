#pragma once

// Random data-model generators and scratch directories for tests.

#include "tofbench/dataset.hpp"
#include "tofbench/retrievers.hpp"

#include <algorithm>
#include <climits>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

namespace testsupport {

using namespace tofbench;

class ScratchDir {
public:
  explicit ScratchDir(const std::string &tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("tofbench-" + tag + "-" + std::to_string(::getpid()) + "-" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir &) = delete;
  ScratchDir &operator=(const ScratchDir &) = delete;

  const std::filesystem::path &path() const { return path_; }
  std::filesystem::path operator/(const std::string &name) const {
    return path_ / name;
  }

private:
  std::filesystem::path path_;
};

inline std::string random_text(std::mt19937_64 &rng, std::size_t max_len) {
  static const std::string alphabet =
      "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 _-+.:/{}#\"\\";
  std::uniform_int_distribution<std::size_t> len(0, max_len);
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  std::string s(len(rng), ' ');
  for (auto &c : s)
    c = alphabet[pick(rng)];
  if (!s.empty() && rng() % 8 == 0)
    s[0] = '\n';
  return s;
}

inline XScale random_xscale(std::mt19937_64 &rng, std::uint32_t nbins) {
  std::uniform_real_distribution<double> u(-1e4, 1e4);
  if (rng() % 2) {
    const double a = u(rng);
    return XScale::uniform(a, a + 1 + std::abs(u(rng)), nbins);
  }
  std::vector<double> e(nbins + 1);
  e[0] = u(rng);
  std::uniform_real_distribution<double> step(1e-3, 50.0);
  for (std::size_t i = 1; i < e.size(); ++i)
    e[i] = e[i - 1] + step(rng);
  return XScale::explicit_edges(std::move(e));
}

inline Attributes random_attributes(std::mt19937_64 &rng, int max_n) {
  std::uniform_int_distribution<int> n(0, max_n);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  Attributes attrs;
  const int count = n(rng);
  for (int i = 0; i < count; ++i) {
    const std::string name = "a" + std::to_string(i) + random_text(rng, 6);
    switch (rng() % 4) {
    case 0:
      attrs.emplace_back(name, u(rng));
      break;
    case 1:
      attrs.emplace_back(name, static_cast<std::int64_t>(rng()));
      break;
    case 2:
      attrs.emplace_back(name, random_text(rng, 20));
      break;
    default:
      attrs.emplace_back(name, Vec3{u(rng), u(rng), u(rng)});
    }
  }
  if (rng() % 3 == 0)
    attrs.emplace_back("bank_angle_deg", 90.0);
  if (rng() % 3 == 0)
    attrs.emplace_back("run_number", std::int64_t{8712});
  return attrs;
}

inline Spectrum random_spectrum(std::mt19937_64 &rng, std::uint32_t id,
                                const XScale &xs) {
  std::uniform_real_distribution<float> c(-10.0f, 1e5f);
  std::uniform_real_distribution<float> e(0.0f, 300.0f);
  std::vector<float> counts(xs.bin_count()), errors(xs.bin_count());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    counts[i] = c(rng);
    errors[i] = e(rng);
  }
  std::optional<DetectorGeometry> g;
  if (rng() % 3) {
    std::uniform_real_distribution<double> p(-5, 5);
    g.emplace(Vec3{p(rng), p(rng), 0.5 + std::abs(p(rng))}, 10 + std::abs(p(rng)),
              0.01 * std::abs(p(rng)), 0.9);
  }
  return Spectrum(id, xs, std::move(counts), std::move(errors),
                  random_attributes(rng, 3), random_text(rng, 12),
                  static_cast<std::uint32_t>(rng() % 5), g);
}

inline DataSet random_dataset(std::mt19937_64 &rng, std::uint32_t max_spectra = 12,
                              std::uint32_t max_bins = 40) {
  std::uniform_int_distribution<std::uint32_t> ns(0, max_spectra);
  std::uniform_int_distribution<std::uint32_t> nb(1, max_bins);
  const auto n = ns(rng);
  const bool shared = rng() % 2;
  const XScale common = random_xscale(rng, nb(rng));
  std::vector<Spectrum> spectra;
  std::uint32_t id = static_cast<std::uint32_t>(rng() % 3);
  for (std::uint32_t k = 0; k < n; ++k) {
    id += 1 + static_cast<std::uint32_t>(rng() % 4);
    spectra.push_back(
        random_spectrum(rng, id, shared ? common : random_xscale(rng, nb(rng))));
  }
  const auto units = static_cast<XUnits>(rng() % 4);
  return DataSet(random_text(rng, 16), units, rng() % 2 ? "counts" : "counts/us",
                 std::move(spectra), random_attributes(rng, 3));
}

inline io::Run random_run(std::mt19937_64 &rng, std::uint32_t max_datasets = 4) {
  io::Run run;
  run.instrument = random_text(rng, 10);
  run.run_number = static_cast<std::uint32_t>(rng());
  run.start_time = static_cast<std::int64_t>(rng());
  const auto n = rng() % (max_datasets + 1);
  for (std::size_t i = 0; i < n; ++i)
    run.datasets.push_back(
        {static_cast<io::DatasetKind>(rng() % 3), random_dataset(rng)});
  return run;
}

/// Applies a selection to fully loaded datasets; the reference that partial
/// reads must match.
inline std::vector<DataSet>
restrict_selection(const std::vector<DataSet> &full,
                   const io::LoadSelection &sel) {
  std::vector<std::uint32_t> idx;
  if (sel.dataset_indices)
    idx = *sel.dataset_indices;
  else
    for (std::uint32_t i = 0; i < full.size(); ++i)
      idx.push_back(i);
  std::vector<DataSet> out;
  for (auto i : idx) {
    const auto &ds = full.at(i);
    std::vector<Spectrum> kept;
    for (const auto &s : ds.spectra()) {
      if (sel.spectrum_ids &&
          std::find(sel.spectrum_ids->begin(), sel.spectrum_ids->end(),
                    s.id()) == sel.spectrum_ids->end())
        continue;
      kept.push_back(sel.bin_range
                         ? s.slice_bins(sel.bin_range->first, sel.bin_range->second)
                         : s);
    }
    out.push_back(ds.with_spectra(std::move(kept)));
  }
  return out;
}

/// Random selection over the datasets of a run: some datasets, some
/// spectrum ids and sometimes a bin range valid for every kept spectrum.
inline io::LoadSelection random_selection(std::mt19937_64 &rng,
                                          const std::vector<DataSet> &full) {
  io::LoadSelection sel;
  if (!full.empty() && rng() % 2) {
    std::vector<std::uint32_t> idx;
    for (std::uint32_t i = 0; i < full.size(); ++i)
      if (rng() % 2)
        idx.push_back(i);
    sel.dataset_indices = idx;
  }
  std::vector<std::uint32_t> ids;
  for (const auto &ds : restrict_selection(full, sel))
    for (const auto &s : ds.spectra())
      if (rng() % 3 == 0)
        ids.push_back(s.id());
  if (!ids.empty())
    sel.spectrum_ids = ids;
  if (rng() % 3 == 0) {
    std::uint32_t min_bins = UINT32_MAX;
    for (const auto &ds : restrict_selection(full, sel))
      for (const auto &s : ds.spectra())
        min_bins = std::min(min_bins, s.xscale().bin_count());
    if (min_bins != UINT32_MAX && min_bins > 0) {
      const auto a = static_cast<std::uint32_t>(rng() % min_bins);
      const auto b = a + 1 + static_cast<std::uint32_t>(rng() % (min_bins - a));
      sel.bin_range = std::pair{a, b};
    }
  }
  return sel;
}

} // namespace testsupport
