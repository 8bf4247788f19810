#pragma once

// Seeded synthetic fixtures: powder runs for the merge pipeline, a
// single-crystal volume with known UB, live-data rate patterns and a large
// run for memory checks.

#include "tofbench/dataset.hpp"
#include "tofbench/peaks.hpp"
#include "tofbench/retrievers.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace tofbench::synth {

struct ScdOptions {
  std::uint64_t seed = 1;
  std::uint32_t n_reflections = 50;
  /// RMS magnitude of the isotropic Gaussian q perturbation, relative to |q|.
  double q_noise = 0.01;
  double lattice_a = 4.0;
  int max_index = 4;
  std::uint32_t n_rows = 128, n_cols = 128, n_channels = 600;
  double background = 0.2;
  double blob_sigma = 1.0;
  peaks::GoniometerSetting goniometer{0.3, 0.7, 1.1};
};

struct Reflection {
  peaks::HKL hkl;
  Vec3 q_sample;     // exact, 2*pi*UB*h
  Vec3 q_lab_placed; // after noise; where the blob was put
  double row, col, channel;
  double amplitude;
};

struct ScdSample {
  peaks::DetectorVolume volume;
  peaks::FlatPanel panel;
  peaks::Mat3 ub;
  std::vector<Reflection> reflections;
};

ScdSample make_scd(const ScdOptions &opt);

/// Seeds for the n brightest reflections.
std::vector<peaks::Seed> brightest_seeds(const ScdSample &s, std::size_t n);

/// A temperature series on a powder diffractometer. Each run holds a
/// one-spectrum monitor dataset and a detector dataset with banks at 30,
/// 60 and 148 degrees plus a single pre-summed 90 degree bank spectrum.
/// The lattice expands with run index and turns tetragonal half way.
struct PowderOptions {
  std::uint64_t seed = 1;
  std::uint32_t n_runs = 120;
  std::uint32_t n_spectra = 160;
  std::uint32_t n_bins = 5000;
  std::uint32_t first_run = 8712;
  std::int64_t first_start_time = 1020300000;
  std::int64_t run_interval_s = 600;
  std::string instrument = "GPPD";
};

io::Run make_powder_run(const PowderOptions &opt, std::uint32_t index);

/// Writes every run as <dir>/<instrument><run_number>.trf and returns the
/// paths in run order.
std::vector<std::filesystem::path>
write_powder_runs(const std::filesystem::path &dir, const PowderOptions &opt);

/// Uniform-scale TOF dataset of n_spectra x n_bins with a few dead
/// detectors, for memory and view checks.
DataSet make_large_dataset(std::uint32_t n_spectra, std::uint32_t n_bins,
                           std::uint64_t seed);

/// Expected count rates (counts/s/bin) for a side x side pixel detector;
/// spectra carry row/col attributes and geometry.
DataSet make_live_pattern(std::uint32_t side, std::uint32_t n_bins,
                          std::uint64_t seed);

} // namespace tofbench::synth
