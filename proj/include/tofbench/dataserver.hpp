#pragma once

// TCP file-data and live-data servers, and the blocking client.

#include "tofbench/protocol.hpp"

#include <boost/asio/ip/tcp.hpp>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <thread>

namespace tofbench::net {

using boost::asio::ip::tcp;

/// Accepts connections on a background thread and runs each one on its own
/// thread. stop() shuts every open socket down and joins.
class TcpServer {
public:
  using Handler = std::function<void(tcp::socket &)>;

  TcpServer(const std::string &host, std::uint16_t port, Handler handler);
  ~TcpServer();
  TcpServer(const TcpServer &) = delete;
  TcpServer &operator=(const TcpServer &) = delete;

  std::uint16_t port() const noexcept { return port_; }
  bool stopping() const noexcept { return stopping_; }
  void stop();

private:
  struct Conn {
    std::shared_ptr<tcp::socket> socket;
    std::thread thread;
    std::atomic<bool> done{false};
  };
  void accept_loop();
  void reap();

  boost::asio::io_context io_;
  tcp::acceptor acceptor_;
  Handler handler_;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::mutex mu_;
  std::list<Conn> conns_;
  std::thread accept_thread_;
};

/// Reads and writes whole frames on a blocking socket.
class FrameChannel {
public:
  /// timeout_ms < 0 waits forever.
  explicit FrameChannel(tcp::socket &s, int timeout_ms = -1) : s_(s), timeout_ms_(timeout_ms) {}

  struct Closed {};
  using ReadResult = std::variant<Frame, FrameError, Closed>;

  /// Unknown types have their payload skipped so the stream stays in sync;
  /// an oversized length leaves the stream unusable.
  ReadResult read_frame();
  void write(const Message &m);
  void write_frame(const Frame &f);
  void write_bytes(std::span<const std::byte> b);
  void write_chunked(MsgType type, const Bytes &body, std::size_t max_body);
  /// True when a read would not block.
  bool readable(int wait_ms);

private:
  bool read_exact(std::byte *dst, std::size_t n, bool eof_ok);

  tcp::socket &s_;
  int timeout_ms_;
};

struct ServerOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0; // 0 picks a free port
  /// Largest body carried by one GET_DATA or DELTA frame.
  std::size_t max_chunk = max_frame_payload - 1;
};

/// TRF1 run files directly under root, ordered by run number. Files that
/// do not probe cleanly are left out.
std::vector<RunSummary> list_run_files(const std::filesystem::path &root);
std::optional<std::filesystem::path> find_run_file(const std::filesystem::path &root,
                                                   std::uint32_t run);

/// Serves TRF1 run files found directly under root.
class FileServer {
public:
  FileServer(std::filesystem::path root, ServerOptions opt = {});
  std::uint16_t port() const noexcept { return server_->port(); }
  void stop() { server_->stop(); }

private:
  void session(tcp::socket &s);

  std::filesystem::path root_;
  ServerOptions opt_;
  std::unique_ptr<TcpServer> server_;
};

struct LiveOptions {
  double rate_scale = 1.0;
  std::uint64_t seed = 1;
  /// Simulated acquisition seconds per tick.
  double tick_s = 1.0;
};

/// Accumulating live histogram fed by Poisson draws from a rate pattern.
/// Every tick bumps the sequence; each bin remembers the sequence at which
/// it last changed so deltas hold only changed bins.
class LiveState {
public:
  LiveState(DataSet pattern, LiveOptions opt = {});

  void tick(std::size_t n = 1);
  std::uint64_t sequence() const;
  Status status(bool paused = false) const;
  /// Accumulated counts with live_sequence and elapsed_s attributes.
  DataSet snapshot() const;
  /// Bins changed after `since`, with their current values.
  Delta delta_since(std::uint64_t since) const;
  /// Waits until the sequence passes `seen` or the timeout expires.
  bool wait_past(std::uint64_t seen, std::chrono::milliseconds timeout) const;

  static float error_of(double count);

private:
  DataSet pattern_;
  LiveOptions opt_;
  std::uint32_t n_bins_ = 0;
  mutable std::shared_mutex mu_;
  mutable std::condition_variable_any cv_;
  std::mt19937_64 rng_;
  std::vector<double> counts_;
  std::vector<std::uint64_t> changed_at_;
  std::uint64_t sequence_ = 0;
  double total_ = 0;
};

/// Live server: a LiveState advanced on a timer, plus the request handler.
class LiveServer {
public:
  LiveServer(DataSet pattern, LiveOptions live = {}, ServerOptions opt = {},
             std::chrono::milliseconds interval = std::chrono::milliseconds(1000),
             bool start_paused = false);
  ~LiveServer();

  std::uint16_t port() const noexcept { return server_->port(); }
  void stop();
  void pause();
  void resume();
  bool paused() const;
  /// Advances n ticks immediately, paused or not.
  void step(std::size_t n = 1);
  const LiveState &state() const noexcept { return state_; }

private:
  void session(tcp::socket &s);
  void follow(FrameChannel &ch, std::uint64_t since);
  void run_timer();

  LiveState state_;
  ServerOptions opt_;
  std::chrono::milliseconds interval_;
  mutable std::mutex timer_mu_;
  std::condition_variable timer_cv_;
  bool paused_;
  bool quit_ = false;
  std::thread timer_;
  std::unique_ptr<TcpServer> server_;
};

struct ClientOptions {
  std::string name = "tofbench";
  std::uint32_t version = protocol_version;
  int timeout_ms = 30000;
};

/// Blocking client; one connection per object.
class Client {
public:
  Client(const std::string &host, std::uint16_t port, ClientOptions opt = {});
  ~Client();
  Client(const Client &) = delete;
  Client &operator=(const Client &) = delete;

  const Hello &server_hello() const noexcept { return server_hello_; }

  std::vector<RunSummary> list_runs();
  io::RunFileDirectory run_info(std::uint32_t run);
  std::vector<DataSet> fetch(std::uint32_t run, const io::LoadSelection &sel = {});
  /// Current accumulated dataset of a live server.
  DataSet fetch_live();
  Status status();
  /// One-shot delta since a sequence.
  Delta poll(std::uint64_t since);

  /// Follow mode: the server pushes a delta whenever the state advances.
  void subscribe(std::uint64_t since);
  Delta next_delta();
  void unsubscribe();

  /// Sends BYE and closes.
  void close();

  /// Size and frame count of the last GET_DATA or DELTA reply body.
  std::uint64_t last_body_bytes() const noexcept { return last_body_bytes_; }
  std::size_t last_body_frames() const noexcept { return last_body_frames_; }

  /// Raw access for protocol tests.
  void send_bytes(std::span<const std::byte> b);
  Message receive();

private:
  Message request(const Message &m);
  Bytes read_body(MsgType type);

  ClientOptions opt_;
  boost::asio::io_context io_;
  tcp::socket socket_;
  std::unique_ptr<FrameChannel> ch_;
  Hello server_hello_;
  bool following_ = false;
  bool open_ = false;
  std::uint64_t last_body_bytes_ = 0;
  std::size_t last_body_frames_ = 0;
};

/// "host:port", ":port" or "port"; missing parts fall back to the defaults.
std::pair<std::string, std::uint16_t> parse_endpoint(const std::string &text,
                                                     std::uint16_t default_port);

/// TOFBENCH_PORT when set and valid, otherwise `fallback`.
std::uint16_t default_port(std::uint16_t fallback = 9400);

} // namespace tofbench::net
