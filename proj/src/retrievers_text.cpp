#include "json_codec.hpp"

#include "tofbench/retrievers.hpp"

#include <fmt/format.h>
#include "fmt_path.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace tofbench::io {

using jsonc::json;

namespace {

constexpr std::string_view dataset_meta = "# @dataset ";
constexpr std::string_view spectrum_meta = "# @spectrum ";

template <class T>
bool parse_number(std::string_view tok, T &out) {
  if (!tok.empty() && tok.front() == '+')
    tok.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return ec == std::errc() && ptr == tok.data() + tok.size();
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> toks;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i])))
      ++i;
    const auto start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i])))
      ++i;
    if (i > start)
      toks.push_back(line.substr(start, i - start));
  }
  return toks;
}

bool is_blank(std::string_view line) {
  return line.find_first_not_of(" \t\r") == std::string_view::npos;
}

json parse_meta(std::string_view text, std::size_t line_no) {
  try {
    return json::parse(text);
  } catch (const json::exception &e) {
    throw DataError(fmt::format("line {}: malformed metadata: {}", line_no,
                                e.what()));
  }
}

struct Block {
  std::size_t first_line = 0;
  std::vector<std::pair<std::size_t, std::vector<std::string_view>>> rows;
  std::optional<json> meta;
};

Spectrum build_spectrum(Block &b, std::uint32_t default_id,
                        const std::filesystem::path &path) {
  auto &rows = b.rows;
  const bool edges = rows.back().second.size() == 1;
  const std::size_t n_data = edges ? rows.size() - 1 : rows.size();
  if (n_data == 0)
    throw DataError(fmt::format("{}:{}: block has no count rows", path,
                                b.first_line));
  const std::size_t width = rows.front().second.size();
  if (width < 2 || width > 3)
    throw DataError(fmt::format("{}:{}: expected 2 or 3 columns, found {}",
                                path, rows.front().first, width));

  std::vector<double> x(rows.size());
  std::vector<float> counts(n_data), errors(n_data);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto &[line_no, toks] = rows[i];
    const bool closing = edges && i + 1 == rows.size();
    if (!closing && toks.size() != width)
      throw DataError(fmt::format(
          "{}:{}: ragged columns: expected {} values, found {}", path,
          line_no, width, toks.size()));
    if (!parse_number(toks[0], x[i]))
      throw DataError(fmt::format("{}:{}: non-numeric token '{}'", path,
                                  line_no, toks[0]));
    if (closing)
      continue;
    if (!parse_number(toks[1], counts[i]))
      throw DataError(fmt::format("{}:{}: non-numeric token '{}'", path,
                                  line_no, toks[1]));
    if (width == 3 && !parse_number(toks[2], errors[i]))
      throw DataError(fmt::format("{}:{}: non-numeric token '{}'", path,
                                  line_no, toks[2]));
  }

  std::optional<std::vector<float>> err;
  if (width == 3)
    err = std::move(errors);

  try {
    if (b.meta) {
      const jsonc::Node m(*b.meta, fmt::format("line {}", b.first_line));
      XScale xs = jsonc::xscale_from_json(m["xscale"]);
      if (xs.bin_count() != n_data)
        m["xscale"].fail(fmt::format("declares {} bins but the block has {}",
                                     xs.bin_count(), n_data));
      return Spectrum(m["id"].u32(), std::move(xs), std::move(counts),
                      std::move(err), jsonc::attributes_from_json(m["attributes"]),
                      m["label"].string(), m["group_id"].u32(),
                      jsonc::geometry_from_json(m["geometry"]));
    }
    if (edges)
      return Spectrum(default_id, XScale::explicit_edges(std::move(x)),
                      std::move(counts), std::move(err));
    if (n_data < 2)
      throw DataError(fmt::format(
          "{}:{}: cannot infer a bin width from a single bin center", path,
          b.first_line));
    const double w = (x.back() - x.front()) / static_cast<double>(n_data - 1);
    return Spectrum(default_id,
                    XScale::uniform(x.front() - 0.5 * w, x.back() + 0.5 * w,
                                    static_cast<std::uint32_t>(n_data)),
                    std::move(counts), std::move(err));
  } catch (const jsonc::SchemaError &) {
    throw;
  } catch (const DataError &e) {
    throw DataError(fmt::format("{}:{}: {}", path, b.first_line, e.what()));
  }
}

} // namespace

DataSet read_ascii_columns(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in)
    throw IoError(fmt::format("cannot open {}", path));
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);)
    lines.push_back(std::move(line));

  std::optional<json> ds_meta;
  std::optional<json> pending_meta;
  std::vector<Block> blocks;
  Block current;
  auto flush = [&] {
    if (!current.rows.empty())
      blocks.push_back(std::move(current));
    current = Block{};
  };

  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string_view line = lines[i];
    const auto line_no = i + 1;
    if (line.starts_with(dataset_meta)) {
      ds_meta = parse_meta(line.substr(dataset_meta.size()), line_no);
      continue;
    }
    if (line.starts_with(spectrum_meta)) {
      flush();
      pending_meta = parse_meta(line.substr(spectrum_meta.size()), line_no);
      continue;
    }
    const auto first = line.find_first_not_of(" \t");
    if (first != std::string_view::npos && line[first] == '#')
      continue;
    if (is_blank(line)) {
      flush();
      continue;
    }
    if (current.rows.empty()) {
      current.first_line = line_no;
      current.meta = std::move(pending_meta);
      pending_meta.reset();
    } else if (current.rows.back().second.size() == 1) {
      throw DataError(fmt::format(
          "{}:{}: data after a closing edge row; separate spectra with a "
          "blank line",
          path, line_no));
    }
    current.rows.emplace_back(line_no, split_ws(line));
  }
  flush();

  if (blocks.empty() && !ds_meta)
    throw DataError(fmt::format("{}: no data", path));

  std::vector<Spectrum> spectra;
  spectra.reserve(blocks.size());
  for (std::size_t k = 0; k < blocks.size(); ++k)
    spectra.push_back(
        build_spectrum(blocks[k], static_cast<std::uint32_t>(k), path));

  if (!ds_meta)
    return DataSet(path.stem().string(), XUnits::tof_us, "counts",
                   std::move(spectra));
  const jsonc::Node m(*ds_meta, "dataset");
  return DataSet(m["title"].string(), parse_xunits(m["x_units"].string()),
                 m["y_units"].string(), std::move(spectra),
                 jsonc::attributes_from_json(m["attributes"]));
}

void write_ascii_columns(const DataSet &ds, const std::filesystem::path &path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out)
    throw IoError(fmt::format("cannot open {} for writing", path));

  out << "# tofbench ascii columns v1\n"
      << "# title: " << json(ds.title()).dump() << '\n'
      << "# units: x " << to_string(ds.x_units()) << ", y "
      << json(ds.y_units()).dump() << '\n'
      << "# columns: x count error. x holds bin edges: an n-bin spectrum has "
         "n+1 rows and the last row carries only the closing edge.\n";
  json dmeta{{"title", ds.title()},
             {"x_units", to_string(ds.x_units())},
             {"y_units", ds.y_units()},
             {"attributes", jsonc::attributes_to_json(ds.attributes())}};
  out << dataset_meta << dmeta.dump() << '\n';

  fmt::memory_buffer buf;
  for (const auto &s : ds.spectra()) {
    json smeta{{"id", s.id()},
               {"group_id", s.group_id()},
               {"label", s.label()},
               {"xscale", jsonc::xscale_to_json(s.xscale(), false)},
               {"geometry", jsonc::geometry_to_json(s.geometry())},
               {"attributes", jsonc::attributes_to_json(s.attributes())}};
    out << '\n' << spectrum_meta << smeta.dump() << '\n';
    buf.clear();
    const auto edges = s.xscale().edges();
    for (std::size_t i = 0; i < s.counts().size(); ++i)
      fmt::format_to(std::back_inserter(buf), "{} {} {}\n", edges[i],
                     s.counts()[i], s.errors()[i]);
    fmt::format_to(std::back_inserter(buf), "{}\n", edges.back());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  }
  out.flush();
  if (!out)
    throw IoError(fmt::format("write failed for {}", path));
}

void write_hierarchical(const Run &run, const std::filesystem::path &path) {
  json data = json::array();
  for (const auto &rd : run.datasets) {
    const auto &ds = rd.data;
    json spectra = json::array();
    for (const auto &s : ds.spectra())
      spectra.push_back(
          {{"id", s.id()},
           {"group_id", s.group_id()},
           {"label", s.label()},
           {"xscale", jsonc::xscale_to_json(s.xscale(), true)},
           {"counts", jsonc::floats_to_base64(s.counts())},
           {"errors", jsonc::floats_to_base64(s.errors())},
           {"geometry", jsonc::geometry_to_json(s.geometry())},
           {"attributes", jsonc::attributes_to_json(s.attributes())}});
    data.push_back({{"name", ds.title()},
                    {"kind", to_string(rd.kind)},
                    {"x_units", to_string(ds.x_units())},
                    {"y_units", ds.y_units()},
                    {"attributes", jsonc::attributes_to_json(ds.attributes())},
                    {"spectra", std::move(spectra)}});
  }
  json doc{{"format", "tofbench-hierarchical"},
           {"version", 1},
           {"entry",
            {{"instrument", {{"name", run.instrument}}},
             {"run_number", run.run_number},
             {"start_time", run.start_time},
             {"data", std::move(data)}}}};

  std::ofstream out(path, std::ios::trunc);
  if (!out)
    throw IoError(fmt::format("cannot open {} for writing", path));
  out << doc.dump(1) << '\n';
  out.flush();
  if (!out)
    throw IoError(fmt::format("write failed for {}", path));
}

Run read_hierarchical(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in)
    throw IoError(fmt::format("cannot open {}", path));
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception &e) {
    throw DataError(fmt::format("{}: not valid JSON: {}", path, e.what()));
  }
  const jsonc::Node root(doc, "");
  const auto entry = root["entry"];

  Run run;
  run.instrument = entry["instrument"]["name"].string();
  run.run_number = entry["run_number"].u32();
  run.start_time = entry["start_time"].integer();
  const auto data = entry["data"];
  for (std::size_t d = 0; d < data.size(); ++d) {
    const auto g = data[d];
    const auto kind_name = g["kind"].string();
    DatasetKind kind;
    if (kind_name == "monitor")
      kind = DatasetKind::monitor;
    else if (kind_name == "histogram")
      kind = DatasetKind::histogram;
    else if (kind_name == "pulse_height")
      kind = DatasetKind::pulse_height;
    else
      g["kind"].fail(fmt::format("unknown dataset kind '{}'", kind_name));

    std::vector<Spectrum> spectra;
    const auto sp = g["spectra"];
    for (std::size_t k = 0; k < sp.size(); ++k) {
      const auto s = sp[k];
      auto xs = jsonc::xscale_from_json(s["xscale"]);
      auto counts = jsonc::floats_from_base64(s["counts"]);
      auto errors = jsonc::floats_from_base64(s["errors"]);
      try {
        spectra.emplace_back(s["id"].u32(), std::move(xs), std::move(counts),
                             std::move(errors),
                             jsonc::attributes_from_json(s["attributes"]),
                             s["label"].string(), s["group_id"].u32(),
                             jsonc::geometry_from_json(s["geometry"]));
      } catch (const jsonc::SchemaError &) {
        throw;
      } catch (const DataError &e) {
        s.fail(e.what());
      }
    }
    XUnits units;
    try {
      units = parse_xunits(g["x_units"].string());
    } catch (const jsonc::SchemaError &) {
      throw;
    } catch (const DataError &e) {
      g["x_units"].fail(e.what());
    }
    try {
      run.datasets.push_back(
          {kind, DataSet(g["name"].string(), units, g["y_units"].string(),
                         std::move(spectra),
                         jsonc::attributes_from_json(g["attributes"]))});
    } catch (const jsonc::SchemaError &) {
      throw;
    } catch (const DataError &e) {
      g.fail(e.what());
    }
  }
  return run;
}

} // namespace tofbench::io
