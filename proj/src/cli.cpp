#include "tofbench/cli.hpp"

#include "tofbench/dataserver.hpp"
#include "tofbench/operators.hpp"
#include "tofbench/peaks.hpp"
#include "tofbench/retrievers.hpp"
#include "tofbench/scripting.hpp"
#include "tofbench/synth.hpp"
#include "tofbench/views.hpp"
#include "tofbench/webapi.hpp"

#include "fmt_path.hpp"

#include "CLI11.hpp"
#include <fmt/ostream.h>

#include <atomic>
#include <csignal>
#include <fstream>
#include <numbers>
#include <sstream>

namespace tofbench::cli {

namespace {

std::atomic<bool> interrupted{false};

extern "C" void on_signal(int) { interrupted = true; }

/// Blocks until SIGINT/SIGTERM or, when seconds > 0, until they elapse.
void wait_for_shutdown(double seconds) {
  interrupted = false;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  const auto until = std::chrono::steady_clock::now() +
                     std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                         std::chrono::duration<double>(seconds));
  while (!interrupted && (seconds <= 0 || std::chrono::steady_clock::now() < until))
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  std::signal(SIGINT, SIG_DFL);
  std::signal(SIGTERM, SIG_DFL);
}

std::string decimal_size(std::uint64_t bytes) {
  if (bytes >= 1'000'000)
    return fmt::format("{:.1f} MB", bytes / 1e6);
  if (bytes >= 1'000)
    return fmt::format("{:.1f} KB", bytes / 1e3);
  return fmt::format("{} B", bytes);
}

XUnits target_units(const std::string &s) {
  if (s == "d")
    return XUnits::dspacing_A;
  if (s == "q")
    return XUnits::Q_invA;
  if (s == "wavelength")
    return XUnits::wavelength_A;
  throw UsageError(fmt::format("--to must be d, q or wavelength, got '{}'", s));
}

ops::FocusParams focus_params(const std::string &text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(part, &used));
      if (used != part.size())
        throw std::invalid_argument(part);
    } catch (const std::logic_error &) {
      throw UsageError(fmt::format("--focus: '{}' is not a number", part));
    }
  }
  if (v.size() != 3)
    throw UsageError("--focus takes REF_THETA,REF_L1,REF_L2 (degrees, meters, meters)");
  return ops::FocusParams(v[0] * std::numbers::pi / 180.0, v[1], v[2]);
}

enum class OutFormat { trf, json, ascii };

OutFormat format_of(const std::filesystem::path &p) {
  const auto ext = p.extension().string();
  return ext == ".trf" ? OutFormat::trf : ext == ".json" ? OutFormat::json : OutFormat::ascii;
}

/// Index of the dataset to use: the requested one, or the first histogram.
std::size_t pick_dataset(const io::Run &run, std::optional<std::uint32_t> ds,
                         const std::filesystem::path &path) {
  if (ds) {
    if (*ds >= run.datasets.size())
      throw DataError(fmt::format("{} has {} datasets, no index {}", path, run.datasets.size(), *ds));
    return *ds;
  }
  for (std::size_t i = 0; i < run.datasets.size(); ++i)
    if (run.datasets[i].kind == io::DatasetKind::histogram)
      return i;
  throw DataError(fmt::format("{} has no histogram dataset", path));
}

// Subcommands.

int cmd_info(const std::filesystem::path &file, std::ostream &out) {
  const auto dir = io::probe(file);
  fmt::print(out, "{}: instrument {} run {} start_time {} (TRF{}, {} header bytes, {} on disk)\n",
             file.filename(), dir.instrument, dir.run_number, dir.start_time,
             dir.format_version, dir.header_bytes,
             decimal_size(std::filesystem::file_size(file)));
  fmt::print(out, "{:>3}  {:<20} {:<10} {:>9} {:>7} {:>12} {:>12}\n", "#", "name", "kind",
             "spectra", "bins", "stored", "estimate");
  for (std::size_t i = 0; i < dir.entries.size(); ++i) {
    const auto &e = dir.entries[i];
    const auto est = estimate_dataset_size(e.n_spectra, e.n_bins);
    fmt::print(out, "{:>3}  {:<20} {:<10} {:>9} {:>7} {:>12} {:>12}\n", i, e.name,
               io::to_string(e.kind), e.n_spectra, e.n_bins, decimal_size(e.length),
               decimal_size(est));
  }
  return 0;
}

struct ConvertArgs {
  std::filesystem::path file, out;
  std::string to;
  std::string focus;
  std::optional<std::uint32_t> ds;
};

int cmd_convert(const ConvertArgs &a, std::ostream &out) {
  const auto units = target_units(a.to);
  std::optional<ops::FocusParams> fp;
  if (!a.focus.empty())
    fp = focus_params(a.focus);
  auto run = io::read_run(a.file);
  auto convert = [&](const DataSet &ds) {
    return ops::convert_units(fp ? ops::time_focus(ds, *fp) : ds, units);
  };
  const auto fmt_out = format_of(a.out);
  if (fmt_out == OutFormat::ascii || a.ds) {
    const auto i = pick_dataset(run, a.ds, a.file);
    const auto ds = convert(run.datasets[i].data);
    if (fmt_out == OutFormat::ascii)
      io::write_ascii_columns(ds, a.out);
    else
      run.datasets = {{run.datasets[i].kind, ds}};
  } else {
    for (auto &d : run.datasets)
      if (d.kind == io::DatasetKind::histogram)
        d.data = convert(d.data);
  }
  if (fmt_out == OutFormat::trf)
    io::write_runfile(a.out, run);
  else if (fmt_out == OutFormat::json)
    io::write_hierarchical(run, a.out);
  fmt::print(out, "wrote {} ({})\n", a.out, to_string(units));
  return 0;
}

int cmd_reduce(const std::filesystem::path &script_path, const std::string &dir,
               std::ostream &out) {
  std::ifstream in(script_path);
  if (!in)
    throw IoError(fmt::format("cannot open script {}", script_path));
  std::stringstream text;
  text << in.rdbuf();
  script::Environment env;
  env.base_dir = dir.empty() ? script_path.parent_path() : std::filesystem::path(dir);
  if (env.base_dir.empty())
    env.base_dir = ".";
  env.out = &out;
  script::execute(script::parse(text.str()), env);
  return 0;
}

struct PeaksArgs {
  std::filesystem::path file, out, ub_from;
  bool find = false, index = false;
  std::optional<std::uint32_t> ds;
  peaks::SearchOptions search;
  double tol = 0.10;
};

void print_ub(std::ostream &out, const char *what, const peaks::UBFit &f) {
  fmt::print(out, "{} UB (rms residual {:.3g}):\n", what, f.rms_residual);
  for (const auto &row : f.ub)
    fmt::print(out, "  {:12.8f} {:12.8f} {:12.8f}\n", row[0], row[1], row[2]);
}

int cmd_peaks(const PeaksArgs &a, std::ostream &out) {
  if (a.index && a.ub_from.empty())
    throw UsageError("--index needs --ub-from ASSIGN.txt");
  std::vector<peaks::Peak> list;
  if (a.file.extension() == ".txt") {
    if (a.find)
      throw UsageError("--find needs a TRF1 volume, not a peak list");
    list = peaks::read_peak_list(a.file);
    fmt::print(out, "read {} peaks\n", list.size());
  } else {
    const auto run = io::read_run(a.file);
    const auto &ds = run.datasets[pick_dataset(run, a.ds, a.file)].data;
    list = peaks::locate_peaks(peaks::volume_from_dataset(ds), a.search);
    fmt::print(out, "found {} peaks\n", list.size());
  }
  if (a.index) {
    const auto res = peaks::index_from_seeds(list, peaks::read_seeds(a.ub_from), a.tol);
    print_ub(out, "seed", res.seed_fit);
    print_ub(out, "refined", res.final_fit);
    list = res.peaks;
    const auto n = std::count_if(list.begin(), list.end(), [](const auto &p) { return p.hkl.has_value(); });
    fmt::print(out, "indexed {} of {} peaks\n", n, list.size());
  }
  if (!a.out.empty()) {
    peaks::write_peak_list(a.out, list);
    fmt::print(out, "wrote {}\n", a.out);
  }
  return 0;
}

struct ServeArgs {
  std::string root = ".";
  std::string host = "127.0.0.1";
  std::uint16_t port = 9400;
  bool ui = false;
  std::optional<std::uint16_t> ui_port;
  std::string static_dir;
  std::string live;
  double seconds = 0;
};

int cmd_serve(const ServeArgs &a, std::ostream &out) {
  net::ServerOptions so;
  so.host = a.host;
  so.port = a.port;
  net::FileServer files(a.root, so);
  fmt::print(out, "serving {} runs from {} on {}:{}\n", net::list_run_files(a.root).size(),
             a.root, a.host, files.port());
  std::unique_ptr<web::WebServer> ui;
  if (a.ui) {
    web::WebOptions wo;
    wo.root = a.root;
    wo.host = a.host;
    wo.port = a.ui_port ? *a.ui_port : (a.port == 0 ? 0 : static_cast<std::uint16_t>(a.port + 1));
    if (!a.static_dir.empty())
      wo.static_dir = a.static_dir;
    if (!a.live.empty()) {
      const auto [h, p] = net::parse_endpoint(a.live, net::default_port());
      wo.live = web::LiveEndpoint{h, p};
    }
    ui = std::make_unique<web::WebServer>(wo);
    fmt::print(out, "http api on http://{}:{}/api/runs\n", a.host, ui->port());
  }
  out.flush();
  wait_for_shutdown(a.seconds);
  if (ui)
    ui->stop();
  files.stop();
  return 0;
}

struct LiveArgs {
  std::string pattern;
  std::uint32_t side = 64, bins = 200;
  double rate = 1.0;
  std::uint64_t seed = 1;
  std::string host = "127.0.0.1";
  std::uint16_t port = 9400;
  std::uint32_t interval_ms = 1000;
  double seconds = 0;
};

int cmd_live(const LiveArgs &a, std::ostream &out) {
  DataSet pattern = DataSet::empty(XUnits::tof_us);
  if (a.pattern.empty()) {
    pattern = synth::make_live_pattern(a.side, a.bins, a.seed);
  } else {
    const auto run = io::read_run(a.pattern);
    pattern = run.datasets[pick_dataset(run, std::nullopt, a.pattern)].data;
  }
  net::ServerOptions so;
  so.host = a.host;
  so.port = a.port;
  net::LiveServer server(pattern, {a.rate, a.seed, 1.0}, so,
                         std::chrono::milliseconds(a.interval_ms));
  fmt::print(out, "live data for {} spectra on {}:{}\n", pattern.size(), a.host, server.port());
  out.flush();
  wait_for_shutdown(a.seconds);
  server.stop();
  return 0;
}

struct RasterArgs {
  std::filesystem::path file, out;
  std::uint32_t ds = 0;
  views::Viewport vp;
  bool no_compress = false, log = false, mean = false;
};

int cmd_raster(RasterArgs a, std::ostream &out) {
  if (a.vp.width_px == 0 || a.vp.height_px == 0)
    throw UsageError("--width and --height must be positive");
  io::LoadSelection sel;
  sel.dataset_indices = std::vector<std::uint32_t>{a.ds};
  const auto ds = io::read_runfile(a.file, sel).at(0);
  a.vp.horizontal_compression = !a.no_compress;
  a.vp.intensity_scale = a.log ? views::IntensityScale::log : views::IntensityScale::linear;
  a.vp.aggregation = a.mean ? views::Aggregation::mean : views::Aggregation::max;
  const auto rr = views::image_raster(ds, a.vp);
  const auto pgm = views::to_pgm(rr);
  std::ofstream f(a.out, std::ios::binary);
  if (!f.write(pgm.data(), static_cast<std::streamsize>(pgm.size())))
    throw IoError(fmt::format("cannot write {}", a.out));
  fmt::print(out, "wrote {} ({}x{}, {} rows per spectrum)\n", a.out, rr.width, rr.height,
             rr.rows_per_spectrum);
  return 0;
}

int cmd_gen_powder(const synth::PowderOptions &o, const std::filesystem::path &dir,
                   std::ostream &out) {
  std::filesystem::create_directories(dir / "runs");
  const auto paths = synth::write_powder_runs(dir / "runs", o);
  const auto script = dir / "reduce.tbs";
  std::ofstream(script) << reference_script();
  fmt::print(out, "wrote {} runs to {} and {}\n", paths.size(), dir / "runs", script);
  return 0;
}

struct ScdArgs {
  synth::ScdOptions opt;
  std::filesystem::path out, seeds_out;
  std::uint32_t n_seeds = 5;
};

int cmd_gen_scd(const ScdArgs &a, std::ostream &out) {
  const auto s = synth::make_scd(a.opt);
  io::write_runfile(a.out, "SCD", 1, 0, {peaks::volume_to_dataset(s.volume, "scd")});
  fmt::print(out, "wrote {} ({} reflections, {}x{}x{})\n", a.out, s.reflections.size(),
             a.opt.n_rows, a.opt.n_cols, a.opt.n_channels);
  if (!a.seeds_out.empty()) {
    peaks::write_seeds(a.seeds_out, synth::brightest_seeds(s, a.n_seeds));
    fmt::print(out, "wrote {} seeds to {}\n", a.n_seeds, a.seeds_out);
  }
  return 0;
}

int exit_code(const Error &e) { return static_cast<int>(e.kind()); }

} // namespace

std::string reference_script() {
  return R"(all = EmptyDataSet("tof_us")
for f in files("runs/*.trf")
  r = Load(f)
  b = ExtractBank(r, "bank_angle_deg", 90)
  b = Normalize(b, "monitor")
  b = SetLabel(b, "{run_number} {start_time}")
  all = Merge(all, b)
endfor
Save(all, "merged.trf", "trf")
)";
}

int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
  CLI::App app{"Time-of-flight data workbench", "tofbench"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  std::filesystem::path info_file;
  auto *info = app.add_subcommand("info", "Describe a TRF1 run file");
  info->add_option("file", info_file, "Run file")->required();

  ConvertArgs conv;
  auto *convert = app.add_subcommand("convert", "Convert TOF histograms to d, q or wavelength");
  convert->add_option("file", conv.file, "Run file")->required();
  convert->add_option("--to", conv.to, "d, q or wavelength")->required();
  convert->add_option("--focus", conv.focus, "REF_THETA_DEG,REF_L1_M,REF_L2_M");
  convert->add_option("--ds", conv.ds, "Only this dataset");
  convert->add_option("-o,--out", conv.out, "Output (.trf, .json, else ASCII columns)")->required();

  std::filesystem::path script_path;
  std::string script_dir;
  auto *reduce = app.add_subcommand("reduce", "Run a reduction script");
  reduce->add_option("--script", script_path, "Script file")->required();
  reduce->add_option("--dir", script_dir, "Directory relative paths resolve against (default: the script's)");

  PeaksArgs pk;
  auto *peaks_cmd = app.add_subcommand("peaks", "Find and index single-crystal peaks");
  peaks_cmd->add_option("file", pk.file, "TRF1 volume or peak list (.txt)")->required();
  peaks_cmd->add_flag("--find", pk.find, "Search the volume for peaks");
  peaks_cmd->add_flag("--index", pk.index, "Index with a UB from seeded assignments");
  peaks_cmd->add_option("--ub-from", pk.ub_from, "Seed assignments (row col channel h k l)");
  peaks_cmd->add_option("--ds", pk.ds, "Dataset holding the volume");
  peaks_cmd->add_option("--k-sigma", pk.search.k_sigma, "Detection threshold");
  peaks_cmd->add_option("--max-peaks", pk.search.max_peaks, "Keep at most this many");
  peaks_cmd->add_option("--tol", pk.tol, "Indexing tolerance in h, k, l");
  peaks_cmd->add_option("-o,--out", pk.out, "Peak list to write");

  ServeArgs sv;
  std::uint16_t ui_port = 0;
  auto *serve = app.add_subcommand("serve", "Serve run files over TCP");
  serve->add_option("--root", sv.root, "Directory of run files")->envname("TOFBENCH_ROOT");
  serve->add_option("--host", sv.host, "Address to bind");
  serve->add_option("--port", sv.port, "Port (0 picks one)")->envname("TOFBENCH_PORT");
  serve->add_flag("--ui", sv.ui, "Also serve the HTTP/WebSocket API");
  auto *ui_port_opt = serve->add_option("--ui-port", ui_port, "HTTP port (default: port + 1)");
  serve->add_option("--static", sv.static_dir, "Web UI files to serve");
  serve->add_option("--live", sv.live, "Live server HOST:PORT behind run=live");
  serve->add_option("--for", sv.seconds, "Stop after this many seconds");

  LiveArgs lv;
  auto *live = app.add_subcommand("live", "Simulate a live acquisition server");
  live->add_option("--pattern", lv.pattern, "Run file whose first histogram gives rates (counts/s)");
  live->add_option("--side", lv.side, "Detector side for the built-in pattern");
  live->add_option("--bins", lv.bins, "Channels for the built-in pattern");
  live->add_option("--rate", lv.rate, "Rate multiplier");
  live->add_option("--seed", lv.seed, "Random seed");
  live->add_option("--host", lv.host, "Address to bind");
  live->add_option("--port", lv.port, "Port (0 picks one)")->envname("TOFBENCH_PORT");
  live->add_option("--interval-ms", lv.interval_ms, "Wall time per acquisition second");
  live->add_option("--for", lv.seconds, "Stop after this many seconds");

  RasterArgs rs;
  auto *raster = app.add_subcommand("raster", "Render an image raster as binary PGM");
  raster->add_option("file", rs.file, "Run file")->required();
  raster->add_option("--ds", rs.ds, "Dataset index");
  raster->add_option("--width", rs.vp.width_px, "Width in pixels")->required();
  raster->add_option("--height", rs.vp.height_px, "Height in pixels")->required();
  raster->add_option("--row-offset", rs.vp.row_offset, "First spectrum shown");
  raster->add_option("--col-offset", rs.vp.col_offset, "First bin shown without compression");
  raster->add_flag("--no-compress", rs.no_compress, "One column per bin");
  raster->add_flag("--log", rs.log, "Logarithmic intensity");
  raster->add_flag("--mean", rs.mean, "Average instead of max when compressing");
  raster->add_option("-o,--out", rs.out, "Output .pgm")->required();

  auto *gen = app.add_subcommand("gen", "Generate synthetic data");
  gen->require_subcommand(1);
  synth::PowderOptions po;
  std::filesystem::path powder_dir = ".";
  auto *gen_powder = gen->add_subcommand("powder", "Powder run series plus reduce.tbs");
  gen_powder->add_option("--out", powder_dir, "Directory (runs go to OUT/runs)");
  gen_powder->add_option("--runs", po.n_runs, "Number of runs");
  gen_powder->add_option("--spectra", po.n_spectra, "Spectra per run");
  gen_powder->add_option("--bins", po.n_bins, "Bins per spectrum");
  gen_powder->add_option("--seed", po.seed, "Random seed");

  ScdArgs sc;
  auto *gen_scd = gen->add_subcommand("scd", "Single-crystal detector volume");
  gen_scd->add_option("-o,--out", sc.out, "Output .trf")->required();
  gen_scd->add_option("--seed", sc.opt.seed, "Random seed");
  gen_scd->add_option("--reflections", sc.opt.n_reflections, "Reflections placed");
  gen_scd->add_option("--noise", sc.opt.q_noise, "Relative q noise");
  gen_scd->add_option("--seeds-out", sc.seeds_out, "Write seed assignments here");
  gen_scd->add_option("--n-seeds", sc.n_seeds, "Seeds written");

  std::filesystem::path live_out;
  std::uint32_t live_side = 64, live_bins = 200;
  std::uint64_t live_seed = 1;
  auto *gen_live = gen->add_subcommand("live", "Rate pattern for the live server");
  gen_live->add_option("-o,--out", live_out, "Output .trf")->required();
  gen_live->add_option("--side", live_side, "Detector side");
  gen_live->add_option("--bins", live_bins, "Channels");
  gen_live->add_option("--seed", live_seed, "Random seed");

  std::filesystem::path large_out;
  std::uint32_t large_spectra = 10000, large_bins = 1000;
  std::uint64_t large_seed = 1;
  auto *gen_large = gen->add_subcommand("large", "Large TOF dataset with dead detectors");
  gen_large->add_option("-o,--out", large_out, "Output .trf")->required();
  gen_large->add_option("--spectra", large_spectra, "Spectra");
  gen_large->add_option("--bins", large_bins, "Bins");
  gen_large->add_option("--seed", large_seed, "Random seed");

  std::vector<std::string> argv_store{"tofbench"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char *> argv;
  for (const auto &a : argv_store)
    argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*info)
      return cmd_info(info_file, out);
    if (*convert)
      return cmd_convert(conv, out);
    if (*reduce)
      return cmd_reduce(script_path, script_dir, out);
    if (*peaks_cmd)
      return cmd_peaks(pk, out);
    if (*serve) {
      if (*ui_port_opt)
        sv.ui_port = ui_port;
      return cmd_serve(sv, out);
    }
    if (*live)
      return cmd_live(lv, out);
    if (*raster)
      return cmd_raster(rs, out);
    if (*gen_powder)
      return cmd_gen_powder(po, powder_dir, out);
    if (*gen_scd)
      return cmd_gen_scd(sc, out);
    if (*gen_live) {
      io::write_runfile(live_out, "LIVE", 0, 0, {synth::make_live_pattern(live_side, live_bins, live_seed)});
      fmt::print(out, "wrote {}\n", live_out);
      return 0;
    }
    if (*gen_large) {
      io::write_runfile(large_out, "LARGE", 1, 0,
                        {synth::make_large_dataset(large_spectra, large_bins, large_seed)});
      fmt::print(out, "wrote {}\n", large_out);
      return 0;
    }
  } catch (const Error &e) {
    fmt::print(err, "tofbench: {}\n", e.what());
    return exit_code(e);
  } catch (const std::filesystem::filesystem_error &e) {
    fmt::print(err, "tofbench: {}\n", e.what());
    return static_cast<int>(ErrorKind::io);
  } catch (const std::exception &e) {
    fmt::print(err, "tofbench: {}\n", e.what());
    return static_cast<int>(ErrorKind::data);
  }
  return 1;
}

} // namespace tofbench::cli
