#pragma once

// HTTP/JSON and WebSocket endpoints over the view computations. Every
// request reads what it needs from the run files or the live server; the
// web server holds no per-client state.

#include "tofbench/dataserver.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

namespace tofbench::web {

struct LiveEndpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
};

struct WebOptions {
  std::filesystem::path root;
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
  /// Live data server behind run=live and /api/live.
  std::optional<LiveEndpoint> live;
  /// Static files served for paths outside /api.
  std::optional<std::filesystem::path> static_dir;
  int live_poll_ms = 100;
};

struct Response {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

/// Decoded query parameters; later duplicates win.
std::map<std::string, std::string> parse_query(std::string_view query);

/// Answers one GET request target ("/api/raster?run=1&..."). Errors come
/// back as {"error": message} with 400, 404 or 500.
Response handle_get(const WebOptions &opt, std::string_view target);

class WebServer {
public:
  explicit WebServer(WebOptions opt);
  ~WebServer();

  std::uint16_t port() const noexcept { return server_->port(); }
  void stop() { server_->stop(); }

private:
  void session(net::tcp::socket &s);

  WebOptions opt_;
  std::unique_ptr<net::TcpServer> server_;
};

} // namespace tofbench::web
