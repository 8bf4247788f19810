#include "tofbench/synth.hpp"

#include "tofbench/error.hpp"
#include "tofbench/operators.hpp"
#include "tofbench/retrievers.hpp"

#include <Eigen/Geometry>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace tofbench::synth {

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;

Eigen::Matrix3d random_rotation(std::mt19937_64 &rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return q.toRotationMatrix();
}

double wavelength_to_tof_us(double lambda_A, double L_m) {
  return lambda_A * 1e-10 * L_m / ops::PhysicalConstants::h_over_mn * 1e6;
}

} // namespace

ScdSample make_scd(const ScdOptions &opt) {
  std::mt19937_64 rng(opt.seed);
  const Eigen::Matrix3d U = random_rotation(rng);
  const Eigen::Matrix3d UB = U / opt.lattice_a;

  const double two_theta = 75.0 * std::numbers::pi / 180.0;
  peaks::FlatPanel panel;
  panel.n_rows = opt.n_rows;
  panel.n_cols = opt.n_cols;
  panel.pitch_m = 0.003;
  panel.center = {0.12 * std::sin(two_theta), 0.0, 0.12 * std::cos(two_theta)};
  panel.row_dir = {std::cos(two_theta), 0.0, -std::sin(two_theta)};
  panel.col_dir = {0.0, 1.0, 0.0};
  const double L1 = 9.0;
  const XScale tof = XScale::uniform(300.0, 15000.0, opt.n_channels);
  const double width = (tof.uniform_end() - tof.uniform_start()) / opt.n_channels;

  const auto Rg = peaks::goniometer_matrix(opt.goniometer);
  Eigen::Matrix3d R;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      R(i, j) = Rg[i][j];

  std::normal_distribution<double> gauss(0.0, 1.0);
  const double margin = 4.0;
  std::vector<Reflection> candidates;
  const int m = opt.max_index;
  for (int h = -m; h <= m; ++h)
    for (int k = -m; k <= m; ++k)
      for (int l = -m; l <= m; ++l) {
        if (!h && !k && !l)
          continue;
        const Eigen::Vector3d qs = two_pi * UB * Eigen::Vector3d(h, k, l);
        Eigen::Vector3d ql = R * qs;
        const double sd = opt.q_noise * ql.norm() / std::sqrt(3.0);
        for (int d = 0; d < 3; ++d)
          ql[d] += sd * gauss(rng);
        if (ql.z() >= 0)
          continue;
        const double kk = -ql.squaredNorm() / (2.0 * ql.z());
        const Eigen::Vector3d dir = ql / kk + Eigen::Vector3d::UnitZ();
        const auto hit = panel.intersect({dir.x(), dir.y(), dir.z()});
        if (!hit)
          continue;
        const auto [row, col] = *hit;
        if (row < margin || row > opt.n_rows - 1 - margin || col < margin ||
            col > opt.n_cols - 1 - margin)
          continue;
        const Vec3 pos = panel.position(row, col);
        const double L = L1 + std::hypot(pos[0], pos[1], pos[2]);
        const double t = wavelength_to_tof_us(two_pi / kk, L);
        const double channel = (t - tof.uniform_start()) / width - 0.5;
        if (channel < margin || channel > opt.n_channels - 1 - margin)
          continue;
        candidates.push_back({{h, k, l},
                              {qs.x(), qs.y(), qs.z()},
                              {ql.x(), ql.y(), ql.z()},
                              row,
                              col,
                              channel,
                              0.0});
      }

  std::shuffle(candidates.begin(), candidates.end(), rng);
  std::uniform_real_distribution<double> amp(300.0, 3000.0);
  std::vector<Reflection> chosen;
  for (auto &c : candidates) {
    if (chosen.size() == opt.n_reflections)
      break;
    const bool crowded = std::any_of(chosen.begin(), chosen.end(), [&](const Reflection &o) {
      return std::max({std::abs(o.row - c.row), std::abs(o.col - c.col),
                       std::abs(o.channel - c.channel)}) < 8.0;
    });
    if (crowded)
      continue;
    c.amplitude = amp(rng);
    chosen.push_back(c);
  }
  if (chosen.size() < opt.n_reflections)
    throw DataError(fmt::format("only {} of {} requested reflections fit on the "
                                "detector",
                                chosen.size(), opt.n_reflections));

  const std::size_t n_vox =
      static_cast<std::size_t>(opt.n_rows) * opt.n_cols * opt.n_channels;
  std::vector<float> counts(n_vox, 0.0f);
  if (opt.background > 0) {
    std::poisson_distribution<int> bg(opt.background);
    for (auto &x : counts)
      x = static_cast<float>(bg(rng));
  }
  const int reach = static_cast<int>(std::ceil(4.0 * opt.blob_sigma));
  const double inv2s2 = 1.0 / (2.0 * opt.blob_sigma * opt.blob_sigma);
  for (const auto &r : chosen) {
    const int r0 = static_cast<int>(std::lround(r.row));
    const int c0 = static_cast<int>(std::lround(r.col));
    const int t0 = static_cast<int>(std::lround(r.channel));
    for (int dr = -reach; dr <= reach; ++dr)
      for (int dc = -reach; dc <= reach; ++dc)
        for (int dt = -reach; dt <= reach; ++dt) {
          const int rr = r0 + dr, cc = c0 + dc, tt = t0 + dt;
          if (rr < 0 || cc < 0 || tt < 0 || rr >= static_cast<int>(opt.n_rows) ||
              cc >= static_cast<int>(opt.n_cols) ||
              tt >= static_cast<int>(opt.n_channels))
            continue;
          const double d2 = (rr - r.row) * (rr - r.row) +
                            (cc - r.col) * (cc - r.col) +
                            (tt - r.channel) * (tt - r.channel);
          counts[(static_cast<std::size_t>(rr) * opt.n_cols + cc) * opt.n_channels +
                 tt] += static_cast<float>(r.amplitude * std::exp(-d2 * inv2s2));
        }
  }

  peaks::Mat3 ub;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      ub[i][j] = UB(i, j);
  peaks::DetectorVolume vol(opt.n_rows, opt.n_cols, tof, std::move(counts),
                            peaks::flat_panel_geometry(panel, L1), L1,
                            opt.goniometer);
  return {std::move(vol), panel, ub, std::move(chosen)};
}

std::vector<peaks::Seed> brightest_seeds(const ScdSample &s, std::size_t n) {
  std::vector<const Reflection *> order;
  for (const auto &r : s.reflections)
    order.push_back(&r);
  std::stable_sort(order.begin(), order.end(),
                   [](const Reflection *a, const Reflection *b) {
                     return a->amplitude > b->amplitude;
                   });
  std::vector<peaks::Seed> out;
  for (std::size_t i = 0; i < std::min(n, order.size()); ++i)
    out.push_back({order[i]->row, order[i]->col, order[i]->channel, order[i]->hkl});
  return out;
}

namespace {

// Approximate Poisson draw for the expected count mu.
float noisy(std::mt19937_64 &rng, std::normal_distribution<double> &z, double mu) {
  if (mu <= 0)
    return 0.0f;
  return static_cast<float>(std::max(0.0, std::floor(mu + std::sqrt(mu) * z(rng) + 0.5)));
}

struct Reflex {
  double d;
  double weight;
};

std::vector<Reflex> powder_lines(double a, double c) {
  std::vector<Reflex> lines;
  for (int h = 0; h <= 7; ++h)
    for (int k = 0; k <= h; ++k)
      for (int l = 0; l <= 7; ++l) {
        if (!h && !k && !l)
          continue;
        const double inv_d2 = (h * h + k * k) / (a * a) + (l * l) / (c * c);
        const double d = 1.0 / std::sqrt(inv_d2);
        if (d < 0.45)
          continue;
        const double mult = (h == k ? 1.0 : 2.0) * (k == 0 ? 1.0 : 2.0) *
                            (l == 0 ? 1.0 : 2.0);
        lines.push_back({d, mult * std::exp(-0.35 / (d * d))});
      }
  return lines;
}

double tof_us_for_d(double d_A, double theta_rad, double L_m) {
  return 2.0 * d_A * std::sin(theta_rad) * 1e-10 * L_m /
         ops::PhysicalConstants::h_over_mn * 1e6;
}

} // namespace

io::Run make_powder_run(const PowderOptions &opt, std::uint32_t index) {
  if (opt.n_spectra < 4)
    throw DataError("powder runs need at least 4 detector spectra");
  std::mt19937_64 rng(opt.seed * 1000003ULL + index);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  const std::uint32_t run_number = opt.first_run + index;
  const std::int64_t start = opt.first_start_time + index * opt.run_interval_s;
  const double frac = opt.n_runs > 1 ? static_cast<double>(index) / (opt.n_runs - 1) : 0.0;
  const double a = 3.90 * (1.0 + 0.004 * frac);
  const double c = frac > 0.5 ? a * (1.0 + 0.02 * (frac - 0.5)) : a;
  const auto lines = powder_lines(a, c);
  const double flux = 0.9 + 0.2 * u(rng);

  const double L1 = 20.0, L2 = 1.5;
  const XScale tof = XScale::uniform(1000.0, 21000.0, opt.n_bins);
  const double width = 20000.0 / opt.n_bins;

  auto expected = [&](double theta, double scale, std::vector<double> &mu) {
    mu.assign(opt.n_bins, 0.0);
    for (std::uint32_t i = 0; i < opt.n_bins; ++i) {
      const double t = tof.bin_center(i);
      mu[i] = scale * (1.5 + 3.0 * std::exp(-t / 6000.0));
    }
    for (const auto &line : lines) {
      const double t0 = tof_us_for_d(line.d, theta, L1 + L2);
      const double sigma = std::max(0.0015 * t0, 0.6 * width);
      const double lo = t0 - 5 * sigma, hi = t0 + 5 * sigma;
      if (hi < 1000.0 || lo > 21000.0)
        continue;
      const auto i0 = static_cast<std::uint32_t>(std::max(0.0, (lo - 1000.0) / width));
      const auto i1 = std::min<std::uint32_t>(
          opt.n_bins, static_cast<std::uint32_t>((hi - 1000.0) / width) + 1);
      const double amp = scale * 40.0 * line.weight * width / (sigma * 2.5066);
      for (std::uint32_t i = i0; i < i1; ++i) {
        const double x = (tof.bin_center(i) - t0) / sigma;
        mu[i] += amp * std::exp(-0.5 * x * x);
      }
    }
  };

  const double pi = std::numbers::pi;
  const std::array<double, 3> bank_angles{30.0, 60.0, 148.0};
  const std::uint32_t summed_id = opt.n_spectra / 2;
  std::vector<Spectrum> spectra;
  spectra.reserve(opt.n_spectra);
  std::vector<double> mu;
  std::uint32_t pixel = 0;
  for (std::uint32_t id = 1; id <= opt.n_spectra; ++id) {
    double angle, scale, bank_angle;
    std::string label;
    if (id == summed_id) {
      angle = bank_angle = 90.0;
      scale = 20.0 * flux;
      label = "bank 90 summed";
    } else {
      const std::uint32_t bank = pixel % 3;
      const std::uint32_t slot = pixel / 3;
      ++pixel;
      bank_angle = bank_angles[bank];
      angle = bank_angles[bank] + 0.05 * (static_cast<double>(slot % 40) - 20.0);
      const bool dead = bank == 2 && (slot == 7 || slot == 31);
      scale = dead ? 0.0 : flux * (0.8 + 0.4 * u(rng));
      label = fmt::format("bank {} pixel {}", bank_angles[bank], slot);
    }
    const double tt = angle * pi / 180.0;
    const double phi = 2.0 * pi * (id % 16) / 16.0 * (id == summed_id ? 0.0 : 1.0);
    DetectorGeometry g({L2 * std::sin(tt) * std::cos(phi), L2 * std::sin(tt) * std::sin(phi),
                        L2 * std::cos(tt)},
                       L1, id == summed_id ? 0.2 : 0.004, 0.9);
    expected(tt / 2.0, scale, mu);
    std::vector<float> counts(opt.n_bins);
    for (std::uint32_t i = 0; i < opt.n_bins; ++i)
      counts[i] = noisy(rng, z, mu[i]);
    spectra.emplace_back(id, tof, std::move(counts), std::nullopt,
                         Attributes{{"bank_angle_deg", bank_angle}}, std::move(label),
                         static_cast<std::uint32_t>(bank_angle), g);
  }

  std::vector<float> mon(opt.n_bins);
  for (std::uint32_t i = 0; i < opt.n_bins; ++i) {
    const double lambda = ops::tof_to_wavelength(tof.bin_center(i), L1 - 1.0);
    const double m = 2e4 * flux * std::pow(lambda, -5.0) * std::exp(-1.2 / (lambda * lambda)) *
                     (1.0 + 0.3 * std::exp(-lambda * lambda));
    mon[i] = noisy(rng, z, m);
  }
  Spectrum monitor(0, tof, std::move(mon), std::nullopt,
                   Attributes{{"monitor", std::int64_t{1}}}, "upstream monitor", 0,
                   DetectorGeometry({0.0, 0.0, -1.0}, L1, 1e-4, 1e-3));

  const Attributes run_attrs{{"run_number", std::int64_t{run_number}},
                             {"start_time", std::int64_t{start}},
                             {"instrument", opt.instrument},
                             {"duration_s", static_cast<double>(opt.run_interval_s)},
                             {"temperature_K", 300.0 + 200.0 * frac}};
  io::Run run;
  run.instrument = opt.instrument;
  run.run_number = run_number;
  run.start_time = start;
  run.datasets.push_back({io::DatasetKind::monitor,
                          DataSet("monitor", XUnits::tof_us, "counts", {std::move(monitor)},
                                  run_attrs)});
  run.datasets.push_back({io::DatasetKind::histogram,
                          DataSet("detectors", XUnits::tof_us, "counts",
                                  std::move(spectra), run_attrs)});
  return run;
}

std::vector<std::filesystem::path>
write_powder_runs(const std::filesystem::path &dir, const PowderOptions &opt) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec)
    throw IoError(fmt::format("cannot create {}: {}", dir.string(), ec.message()));
  std::vector<std::filesystem::path> out;
  for (std::uint32_t i = 0; i < opt.n_runs; ++i) {
    const auto run = make_powder_run(opt, i);
    auto path = dir / fmt::format("{}{}.trf", opt.instrument, run.run_number);
    io::write_runfile(path, run);
    out.push_back(std::move(path));
  }
  return out;
}

DataSet make_large_dataset(std::uint32_t n_spectra, std::uint32_t n_bins,
                           std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const XScale tof = XScale::uniform(1000.0, 21000.0, n_bins);
  std::vector<Spectrum> spectra;
  spectra.reserve(n_spectra);
  const double pi = std::numbers::pi;
  for (std::uint32_t id = 0; id < n_spectra; ++id) {
    std::vector<float> counts(n_bins);
    const bool dead = id % 997 == 13;
    if (!dead) {
      const double peak = n_bins * (0.2 + 0.6 * u(rng));
      const double scale = 50.0 + 50.0 * u(rng);
      for (std::uint32_t i = 0; i < n_bins; ++i) {
        const double x = (i - peak) / (0.004 * n_bins + 1.0);
        counts[i] = static_cast<float>(
            std::floor(2.0 + scale * std::exp(-0.5 * x * x) + 3.0 * u(rng)));
      }
    }
    const double tt = (10.0 + 150.0 * id / std::max<std::uint32_t>(1, n_spectra)) * pi / 180.0;
    spectra.emplace_back(id, tof, std::move(counts), std::nullopt, Attributes{},
                         fmt::format("det {}", id), 0,
                         DetectorGeometry({1.5 * std::sin(tt), 0.0, 1.5 * std::cos(tt)},
                                          20.0, 1e-3, 1.0));
  }
  return DataSet("large", XUnits::tof_us, "counts", std::move(spectra));
}

DataSet make_live_pattern(std::uint32_t side, std::uint32_t n_bins,
                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const XScale tof = XScale::uniform(500.0, 20500.0, n_bins);
  const double peak_r = side * (0.25 + 0.5 * u(rng));
  const double peak_c = side * (0.25 + 0.5 * u(rng));
  const double peak_t = n_bins * (0.3 + 0.4 * u(rng));
  std::vector<Spectrum> spectra;
  for (std::uint32_t r = 0; r < side; ++r)
    for (std::uint32_t c = 0; c < side; ++c) {
      std::vector<float> rate(n_bins);
      for (std::uint32_t i = 0; i < n_bins; ++i) {
        const double d2 = (r - peak_r) * (r - peak_r) + (c - peak_c) * (c - peak_c) +
                          (i - peak_t) * (i - peak_t) / 4.0;
        rate[i] = static_cast<float>(0.5 + 0.5 * u(rng) + 40.0 * std::exp(-d2 / 8.0));
      }
      const Vec3 pos{0.02 * (c - 0.5 * (side - 1.0)), 0.02 * (r - 0.5 * (side - 1.0)), 0.5};
      spectra.emplace_back(r * side + c, tof, std::move(rate), std::nullopt,
                           Attributes{{"row", std::int64_t{r}}, {"col", std::int64_t{c}}},
                           fmt::format("pixel {} {}", r, c), 0,
                           DetectorGeometry(pos, 10.0, 4e-4, 1.0));
    }
  return DataSet("live pattern", XUnits::tof_us, "counts/s", std::move(spectra));
}

} // namespace tofbench::synth
