#include "tofbench/webapi.hpp"

#include "tofbench/base64.hpp"
#include "tofbench/retrievers.hpp"
#include "tofbench/views.hpp"

#include "json_codec.hpp"

#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <fmt/format.h>

#include <poll.h>

#include <charconv>
#include <fstream>
#include <sstream>

namespace tofbench::web {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using jsonc::json;

namespace {

class HttpError : public std::runtime_error {
public:
  HttpError(int status, const std::string &what) : std::runtime_error(what), status_(status) {}
  int status() const noexcept { return status_; }

private:
  int status_;
};

using Query = std::map<std::string, std::string>;

int hex_value(char c) {
  if (c >= '0' && c <= '9')
    return c - '0';
  if (c >= 'a' && c <= 'f')
    return c - 'a' + 10;
  if (c >= 'A' && c <= 'F')
    return c - 'A' + 10;
  return -1;
}

std::string url_decode(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '+') {
      out += ' ';
    } else if (s[i] == '%' && i + 2 < s.size() && hex_value(s[i + 1]) >= 0 &&
               hex_value(s[i + 2]) >= 0) {
      out += static_cast<char>(hex_value(s[i + 1]) * 16 + hex_value(s[i + 2]));
      i += 2;
    } else {
      out += s[i];
    }
  }
  return out;
}

std::optional<std::string> param(const Query &q, const std::string &name) {
  auto it = q.find(name);
  if (it == q.end())
    return std::nullopt;
  return it->second;
}

std::uint32_t parse_u32(const std::string &name, const std::string &text) {
  std::uint32_t v = 0;
  const auto *end = text.data() + text.size();
  auto [p, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || p != end || text.empty())
    throw UsageError(fmt::format("parameter {} must be an unsigned integer, got '{}'", name, text));
  return v;
}

std::uint32_t get_u32(const Query &q, const std::string &name,
                      std::optional<std::uint32_t> fallback = std::nullopt) {
  auto v = param(q, name);
  if (!v) {
    if (fallback)
      return *fallback;
    throw UsageError(fmt::format("missing parameter {}", name));
  }
  return parse_u32(name, *v);
}

bool get_bool(const Query &q, const std::string &name, bool fallback) {
  auto v = param(q, name);
  if (!v)
    return fallback;
  if (*v == "1" || *v == "true")
    return true;
  if (*v == "0" || *v == "false")
    return false;
  throw UsageError(fmt::format("parameter {} must be true/false or 1/0, got '{}'", name, *v));
}

std::optional<std::uint32_t> run_param(const std::string &text) {
  if (text == "live")
    return std::nullopt;
  return parse_u32("run", text);
}

DataSet fetch_live(const WebOptions &opt) {
  if (!opt.live)
    throw HttpError(404, "no live server configured");
  net::Client c(opt.live->host, opt.live->port);
  auto ds = c.fetch_live();
  c.close();
  return ds;
}

std::filesystem::path run_path(const WebOptions &opt, std::uint32_t run) {
  auto p = net::find_run_file(opt.root, run);
  if (!p)
    throw HttpError(404, fmt::format("unknown run {}", run));
  return *p;
}

/// The dataset named by run/ds, restricted to `ids` when given.
DataSet load(const WebOptions &opt, const Query &q,
             std::optional<std::vector<std::uint32_t>> ids = std::nullopt) {
  const auto run_text = param(q, "run");
  if (!run_text)
    throw UsageError("missing parameter run");
  const auto ds_index = get_u32(q, "ds", 0);
  const auto run = run_param(*run_text);
  if (!run) {
    if (ds_index != 0)
      throw HttpError(404, fmt::format("live data has one dataset, not {}", ds_index + 1));
    auto ds = fetch_live(opt);
    return ids ? dataset_select(ds, *ids) : ds;
  }
  const auto path = run_path(opt, *run);
  const auto dir = io::probe(path);
  if (ds_index >= dir.entries.size())
    throw HttpError(404, fmt::format("run {} has no dataset {}", *run, ds_index));
  io::LoadSelection sel;
  sel.dataset_indices = std::vector<std::uint32_t>{ds_index};
  sel.spectrum_ids = std::move(ids);
  return io::read_runfile(path, sel).at(0);
}

views::Viewport viewport(const Query &q) {
  views::Viewport vp;
  vp.width_px = get_u32(q, "width");
  vp.height_px = get_u32(q, "height");
  vp.row_offset = get_u32(q, "row_offset", 0);
  vp.col_offset = get_u32(q, "col_offset", 0);
  vp.horizontal_compression = get_bool(q, "compress", true);
  const auto scale = param(q, "scale").value_or("linear");
  if (scale == "linear")
    vp.intensity_scale = views::IntensityScale::linear;
  else if (scale == "log")
    vp.intensity_scale = views::IntensityScale::log;
  else
    throw UsageError(fmt::format("scale must be linear or log, got '{}'", scale));
  const auto agg = param(q, "agg").value_or("max");
  if (agg == "max")
    vp.aggregation = views::Aggregation::max;
  else if (agg == "mean")
    vp.aggregation = views::Aggregation::mean;
  else
    throw UsageError(fmt::format("agg must be max or mean, got '{}'", agg));
  return vp;
}

json summary_json(const net::RunSummary &s) {
  return {{"run_number", s.run_number}, {"instrument", s.instrument},
          {"start_time", s.start_time}, {"file_name", s.file_name},
          {"n_datasets", s.n_datasets}, {"file_bytes", s.file_bytes}};
}

json runs_json(const WebOptions &opt) {
  json runs = json::array();
  for (const auto &s : net::list_run_files(opt.root))
    runs.push_back(summary_json(s));
  return {{"runs", runs}, {"live", opt.live.has_value()}};
}

json datasets_json(const WebOptions &opt, const std::string &run_text) {
  const auto run = run_param(run_text);
  json list = json::array();
  if (!run) {
    const auto ds = fetch_live(opt);
    const auto nb = ds.is_empty() ? 0u : ds.spectra().front().xscale().bin_count();
    list.push_back({{"index", 0}, {"name", ds.title()}, {"kind", "histogram"},
                    {"n_spectra", ds.size()}, {"n_bins", nb}, {"bytes", dataset_payload_bytes(ds)}});
    return {{"run", "live"}, {"datasets", list}};
  }
  const auto dir = io::probe(run_path(opt, *run));
  for (std::size_t i = 0; i < dir.entries.size(); ++i) {
    const auto &e = dir.entries[i];
    list.push_back({{"index", i}, {"name", e.name}, {"kind", io::to_string(e.kind)},
                    {"n_spectra", e.n_spectra}, {"n_bins", e.n_bins}, {"bytes", e.length}});
  }
  return {{"run", *run},
          {"instrument", dir.instrument},
          {"start_time", dir.start_time},
          {"datasets", list}};
}

json raster_json(const views::RasterResult &rr) {
  json rows = json::array();
  for (const auto &r : rr.row_map)
    rows.push_back(r ? json(*r) : json(nullptr));
  json cols = json::array();
  for (const auto &c : rr.col_map)
    cols.push_back({c.first, c.last});
  return {{"width", rr.width},
          {"height", rr.height},
          {"rows_per_spectrum", rr.rows_per_spectrum},
          {"pixels", base64_encode(std::as_bytes(std::span(rr.pixels)))},
          {"row_map", rows},
          {"col_map", cols},
          {"value_range", {rr.value_range.first, rr.value_range.second}}};
}

json readout_json(const DataSet &ds, const Query &q) {
  const auto rr = views::image_raster(ds, viewport(q));
  const auto px = get_u32(q, "px");
  const auto py = get_u32(q, "py");
  const auto r = views::cursor_readout(ds, rr, px, py);
  return {{"spectrum_id", r.spectrum_id}, {"label", r.label},
          {"bin_index", r.bin_index},     {"x", r.x_at_cursor},
          {"y", r.y_value},               {"error", r.y_error},
          {"channel", views::find_slice_for_cursor(ds, rr, px, py)}};
}

json spectrum_json(const Spectrum &s, const DataSet &ds) {
  return {{"id", s.id()},
          {"label", s.label()},
          {"group_id", s.group_id()},
          {"x_units", to_string(ds.x_units())},
          {"y_units", ds.y_units()},
          {"edges", s.xscale().edges()},
          {"counts", std::vector<float>(s.counts().begin(), s.counts().end())},
          {"errors", std::vector<float>(s.errors().begin(), s.errors().end())},
          {"attributes", jsonc::attributes_to_json(s.attributes())},
          {"geometry", jsonc::geometry_to_json(s.geometry())}};
}

json grid_json(const views::Grid &g) {
  return {{"rows", g.rows}, {"cols", g.cols}, {"values", g.values}};
}

json points_json(const DataSet &ds, const std::string &mode) {
  std::optional<std::uint32_t> channel;
  if (mode != "total")
    channel = parse_u32("mode", mode);
  json pts = json::array();
  for (const auto &p : views::point_cloud(ds, channel))
    pts.push_back({{"x", p.x}, {"y", p.y}, {"z", p.z}, {"intensity", p.intensity}, {"id", p.id}});
  return {{"mode", mode}, {"points", pts}};
}

std::string_view content_type_for(const std::filesystem::path &p) {
  const auto ext = p.extension().string();
  if (ext == ".html")
    return "text/html; charset=utf-8";
  if (ext == ".js")
    return "text/javascript";
  if (ext == ".css")
    return "text/css";
  if (ext == ".json")
    return "application/json";
  if (ext == ".svg")
    return "image/svg+xml";
  if (ext == ".png")
    return "image/png";
  return "application/octet-stream";
}

Response static_file(const WebOptions &opt, std::string_view path) {
  if (!opt.static_dir)
    throw HttpError(404, fmt::format("no such path {}", path));
  std::string rel = url_decode(path.substr(1));
  if (rel.empty())
    rel = "index.html";
  const std::filesystem::path p(rel);
  for (const auto &part : p)
    if (part == "..")
      throw HttpError(404, fmt::format("no such path {}", path));
  const auto full = *opt.static_dir / p;
  std::ifstream in(full, std::ios::binary);
  if (!in || std::filesystem::is_directory(full))
    throw HttpError(404, fmt::format("no such path {}", path));
  std::ostringstream ss;
  ss << in.rdbuf();
  return {200, std::string(content_type_for(full)), ss.str()};
}

Response dispatch(const WebOptions &opt, std::string_view path, const Query &q) {
  auto ok = [](const json &j) { return Response{200, "application/json", j.dump()}; };
  if (path == "/api/runs")
    return ok(runs_json(opt));
  if (path.starts_with("/api/runs/") && path.ends_with("/datasets")) {
    const auto run = path.substr(10, path.size() - 10 - 9);
    if (!run.empty() && run.find('/') == std::string_view::npos)
      return ok(datasets_json(opt, url_decode(run)));
  }
  if (path == "/api/raster") {
    const auto vp = viewport(q);
    return ok(raster_json(views::image_raster(load(opt, q), vp)));
  }
  if (path == "/api/readout")
    return ok(readout_json(load(opt, q), q));
  if (path == "/api/spectrum") {
    const auto id = get_u32(q, "id");
    std::optional<DataSet> ds;
    try {
      ds = load(opt, q, std::vector<std::uint32_t>{id});
    } catch (const io::FormatError &) {
      throw;
    } catch (const DataError &e) {
      throw HttpError(404, e.what());
    }
    const auto *s = ds->find(id);
    if (!s)
      throw HttpError(404, fmt::format("no spectrum {}", id));
    return ok(spectrum_json(*s, *ds));
  }
  if (path == "/api/slice") {
    const auto channel = get_u32(q, "channel");
    auto j = grid_json(views::time_slice(load(opt, q), channel));
    j["channel"] = channel;
    return ok(j);
  }
  if (path == "/api/points")
    return ok(points_json(load(opt, q), param(q, "mode").value_or("total")));
  if (path.starts_with("/api/") || path == "/api")
    throw HttpError(404, fmt::format("no such endpoint {}", path));
  return static_file(opt, path);
}

Response error_response(int status, const std::string &msg) {
  return {status, "application/json", json{{"error", msg}}.dump()};
}

// Live WebSocket feed.

std::string f32_base64(const std::vector<float> &v) {
  return base64_encode(std::as_bytes(std::span(v)));
}

json snapshot_json(const DataSet &ds) {
  const auto nb = ds.is_empty() ? 0u : ds.spectra().front().xscale().bin_count();
  std::vector<float> counts, errors;
  counts.reserve(ds.size() * std::size_t{nb});
  errors.reserve(ds.size() * std::size_t{nb});
  json ids = json::array();
  double total = 0;
  for (const auto &s : ds.spectra()) {
    ids.push_back(s.id());
    counts.insert(counts.end(), s.counts().begin(), s.counts().end());
    errors.insert(errors.end(), s.errors().begin(), s.errors().end());
    total += s.total_counts();
  }
  const auto *seq = ds.attribute("live_sequence");
  const auto *el = ds.attribute("elapsed_s");
  return {{"type", "snapshot"},
          {"sequence", seq ? as_number(*seq).value_or(0) : 0.0},
          {"elapsed_s", el ? as_number(*el).value_or(0) : 0.0},
          {"total_counts", total},
          {"n_spectra", ds.size()},
          {"n_bins", nb},
          {"ids", ids},
          {"counts", f32_base64(counts)},
          {"errors", f32_base64(errors)}};
}

json delta_json(const net::Delta &d) {
  json changes = json::array();
  for (const auto &c : d.changes)
    changes.push_back({c.spectrum, c.bin, c.count, c.error});
  return {{"type", "delta"},        {"from", d.from_sequence}, {"to", d.to_sequence},
          {"elapsed_s", d.elapsed_s}, {"n_spectra", d.n_spectra}, {"n_bins", d.n_bins},
          {"changes", changes}};
}

json status_json(const net::Status &s) {
  return {{"type", "status"},
          {"sequence", s.sequence},
          {"elapsed_s", s.elapsed_s},
          {"total_counts", s.total_counts},
          {"paused", s.paused}};
}

} // namespace

std::map<std::string, std::string> parse_query(std::string_view query) {
  std::map<std::string, std::string> out;
  while (!query.empty()) {
    const auto amp = query.find('&');
    const auto part = query.substr(0, amp);
    if (!part.empty()) {
      const auto eq = part.find('=');
      if (eq == std::string_view::npos)
        out[url_decode(part)] = "";
      else
        out[url_decode(part.substr(0, eq))] = url_decode(part.substr(eq + 1));
    }
    if (amp == std::string_view::npos)
      break;
    query.remove_prefix(amp + 1);
  }
  return out;
}

Response handle_get(const WebOptions &opt, std::string_view target) {
  const auto qpos = target.find('?');
  const auto path = target.substr(0, qpos);
  const auto query = qpos == std::string_view::npos ? std::string_view{} : target.substr(qpos + 1);
  try {
    return dispatch(opt, path, parse_query(query));
  } catch (const HttpError &e) {
    return error_response(e.status(), e.what());
  } catch (const io::FormatError &e) {
    return error_response(500, e.what());
  } catch (const NetworkError &e) {
    return error_response(502, e.what());
  } catch (const IoError &e) {
    return error_response(500, e.what());
  } catch (const Error &e) {
    return error_response(400, e.what());
  } catch (const std::exception &e) {
    return error_response(500, e.what());
  }
}

WebServer::WebServer(WebOptions opt) : opt_(std::move(opt)) {
  if (!std::filesystem::is_directory(opt_.root))
    throw IoError(fmt::format("data root {} is not a directory", opt_.root.string()));
  server_ = std::make_unique<net::TcpServer>(opt_.host, opt_.port,
                                             [this](net::tcp::socket &s) { session(s); });
}

WebServer::~WebServer() { server_->stop(); }

namespace {

void live_feed(const WebOptions &opt, const net::TcpServer &server, net::tcp::socket &s,
               http::request<http::string_body> req) {
  const std::string target(req.target());
  const auto qpos = target.find('?');
  const auto q = parse_query(qpos == std::string::npos ? "" : std::string_view(target).substr(qpos + 1));

  websocket::stream<net::tcp::socket &> ws(s);
  ws.accept(req);
  ws.text(true);
  auto send = [&](const json &j) { ws.write(boost::asio::buffer(j.dump())); };

  std::optional<net::Client> client;
  try {
    if (!opt.live)
      throw HttpError(404, "no live server configured");
    client.emplace(opt.live->host, opt.live->port);
  } catch (const std::exception &e) {
    send({{"type", "error"}, {"error", e.what()}});
    ws.close(websocket::close_code::try_again_later);
    return;
  }

  std::uint64_t last = 0;
  if (auto since = param(q, "since")) {
    last = parse_u32("since", *since);
  } else {
    const auto snap = client->fetch_live();
    const auto j = snapshot_json(snap);
    last = j["sequence"].get<std::uint64_t>();
    send(j);
  }
  send(status_json(client->status()));

  beast::flat_buffer buf;
  while (!server.stopping()) {
    pollfd p{s.native_handle(), POLLIN, 0};
    if (::poll(&p, 1, opt.live_poll_ms) > 0) {
      // Anything from the browser other than control frames is ignored;
      // a close frame ends the read with an error.
      beast::error_code ec;
      ws.read(buf, ec);
      if (ec)
        return;
      buf.consume(buf.size());
    }
    auto d = client->poll(last);
    if (d.to_sequence == last)
      continue;
    last = d.to_sequence;
    send(delta_json(d));
    send(status_json(client->status()));
  }
  beast::error_code ec;
  ws.close(websocket::close_code::going_away, ec);
}

} // namespace

void WebServer::session(net::tcp::socket &s) {
  beast::flat_buffer buf;
  for (;;) {
    http::request<http::string_body> req;
    beast::error_code ec;
    http::read(s, buf, req, ec);
    if (ec)
      return;
    if (websocket::is_upgrade(req)) {
      const auto target = req.target();
      if (target == "/api/live" || target.starts_with("/api/live?")) {
        try {
          live_feed(opt_, *server_, s, std::move(req));
        } catch (const std::exception &) {
        }
        return;
      }
    }
    Response r;
    if (req.method() == http::verb::get || req.method() == http::verb::head)
      r = handle_get(opt_, std::string_view(req.target().data(), req.target().size()));
    else
      r = error_response(405, "only GET is supported");
    http::response<http::string_body> res{static_cast<http::status>(r.status), req.version()};
    res.set(http::field::server, "tofbench");
    res.set(http::field::content_type, r.content_type);
    res.keep_alive(req.keep_alive());
    if (req.method() != http::verb::head)
      res.body() = std::move(r.body);
    res.prepare_payload();
    http::write(s, res, ec);
    if (ec || !req.keep_alive())
      return;
  }
}

} // namespace tofbench::web
