#include "tofbench/dataserver.hpp"

#include "fmt_path.hpp"

#include <boost/asio/connect.hpp>
#include <boost/asio/read.hpp>
#include <boost/asio/write.hpp>
#include <fmt/format.h>

#include <poll.h>
#include <sys/socket.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>

namespace tofbench::net {

namespace asio = boost::asio;

// TcpServer

TcpServer::TcpServer(const std::string &host, std::uint16_t port, Handler handler)
    : acceptor_(io_), handler_(std::move(handler)) {
  try {
    const tcp::endpoint ep(asio::ip::make_address(host), port);
    acceptor_.open(ep.protocol());
    acceptor_.set_option(tcp::acceptor::reuse_address(true));
    acceptor_.bind(ep);
    acceptor_.listen();
    port_ = acceptor_.local_endpoint().port();
  } catch (const boost::system::system_error &e) {
    throw NetworkError(fmt::format("cannot listen on {}:{}: {}", host, port, e.what()));
  }
  accept_thread_ = std::thread([this] { accept_loop(); });
}

TcpServer::~TcpServer() { stop(); }

void TcpServer::accept_loop() {
  while (!stopping_) {
    pollfd p{acceptor_.native_handle(), POLLIN, 0};
    if (::poll(&p, 1, 50) <= 0)
      continue;
    auto sock = std::make_shared<tcp::socket>(io_);
    boost::system::error_code ec;
    acceptor_.accept(*sock, ec);
    if (ec)
      continue;
    sock->set_option(tcp::no_delay(true), ec);
    std::lock_guard lock(mu_);
    reap();
    if (stopping_)
      break;
    auto &c = conns_.emplace_back();
    c.socket = sock;
    c.thread = std::thread([this, &c] {
      try {
        handler_(*c.socket);
      } catch (...) {
      }
      std::lock_guard lock(mu_);
      boost::system::error_code ignored;
      c.socket->shutdown(tcp::socket::shutdown_both, ignored);
      c.socket->close(ignored);
      c.done = true;
    });
  }
}

void TcpServer::reap() {
  for (auto it = conns_.begin(); it != conns_.end();) {
    if (it->done) {
      if (it->thread.joinable())
        it->thread.join();
      it = conns_.erase(it);
    } else {
      ++it;
    }
  }
}

void TcpServer::stop() {
  if (stopping_.exchange(true))
    return;
  if (accept_thread_.joinable())
    accept_thread_.join();
  boost::system::error_code ec;
  acceptor_.close(ec);
  std::list<Conn> conns;
  {
    std::lock_guard lock(mu_);
    for (auto &c : conns_)
      if (!c.done)
        ::shutdown(c.socket->native_handle(), SHUT_RDWR);
    conns.splice(conns.end(), conns_);
  }
  for (auto &c : conns)
    if (c.thread.joinable())
      c.thread.join();
}

// FrameChannel

bool FrameChannel::readable(int wait_ms) {
  pollfd p{s_.native_handle(), POLLIN, 0};
  return ::poll(&p, 1, wait_ms) > 0;
}

bool FrameChannel::read_exact(std::byte *dst, std::size_t n, bool eof_ok) {
  std::size_t got = 0;
  while (got < n) {
    if (timeout_ms_ >= 0 && !readable(timeout_ms_))
      throw NetworkError(fmt::format("timed out after {} ms waiting for data", timeout_ms_));
    boost::system::error_code ec;
    got += s_.read_some(asio::buffer(dst + got, n - got), ec);
    if (ec == asio::error::eof || ec == asio::error::connection_reset) {
      if (eof_ok && got == 0)
        return false;
      throw NetworkError("connection closed in the middle of a frame");
    }
    if (ec)
      throw NetworkError(fmt::format("socket read failed: {}", ec.message()));
  }
  return true;
}

FrameChannel::ReadResult FrameChannel::read_frame() {
  std::array<std::byte, frame_header_bytes> header;
  if (!read_exact(header.data(), header.size(), true))
    return Closed{};
  std::uint32_t len;
  std::memcpy(&len, header.data(), 4);
  auto res = decode_frame(header);
  if (auto *err = std::get_if<FrameError>(&res)) {
    if (err->code == ErrorCode::unknown_type) {
      std::array<std::byte, 65536> scratch;
      for (std::uint32_t left = len; left > 0;) {
        const auto n = std::min<std::uint32_t>(left, scratch.size());
        read_exact(scratch.data(), n, false);
        left -= n;
      }
    }
    return *err;
  }
  Frame f{static_cast<MsgType>(header[4]), Bytes(len)};
  if (len)
    read_exact(f.payload.data(), len, false);
  return f;
}

void FrameChannel::write_bytes(std::span<const std::byte> b) {
  boost::system::error_code ec;
  asio::write(s_, asio::buffer(b.data(), b.size()), ec);
  if (ec)
    throw NetworkError(fmt::format("socket write failed: {}", ec.message()));
}

void FrameChannel::write_frame(const Frame &f) { write_bytes(encode_frame(f)); }

void FrameChannel::write(const Message &m) { write_frame(to_frame(m)); }

void FrameChannel::write_chunked(MsgType type, const Bytes &body, std::size_t max_body) {
  for (const auto &c : split_body(type, body, max_body))
    write(c);
}

// Server sessions

namespace {

ErrorReply error_reply(const std::exception &e) {
  if (const auto *p = dynamic_cast<const ProtocolError *>(&e))
    return {p->code(), p->what()};
  if (const auto *t = dynamic_cast<const Error *>(&e))
    return {t->kind() == ErrorKind::io ? ErrorCode::internal : ErrorCode::bad_request,
            t->what()};
  return {ErrorCode::internal, e.what()};
}

/// HELLO exchange; false when the connection must be dropped.
bool handshake(FrameChannel &ch, std::string_view server_name) {
  auto first = ch.read_frame();
  if (std::holds_alternative<FrameChannel::Closed>(first))
    return false;
  if (auto *err = std::get_if<FrameError>(&first)) {
    ch.write(ErrorReply{err->code, err->message});
    return false;
  }
  const auto &f = std::get<Frame>(first);
  if (f.type != MsgType::hello) {
    ch.write(ErrorReply{ErrorCode::bad_request,
                        fmt::format("expected HELLO, got {}", to_string(f.type))});
    return false;
  }
  Hello h;
  try {
    h = std::get<Hello>(from_frame(f, Direction::to_server));
  } catch (const ProtocolError &e) {
    ch.write(ErrorReply{e.code(), e.what()});
    return false;
  }
  if (h.version != protocol_version) {
    ch.write(ErrorReply{ErrorCode::version_mismatch,
                        fmt::format("server speaks protocol version {}, client asked for {}",
                                    protocol_version, h.version)});
    return false;
  }
  ch.write(Hello{protocol_version, std::string(server_name)});
  return true;
}

/// Request loop shared by both servers. on_request writes its own replies
/// and returns false to end the session.
template <class F>
void run_session(tcp::socket &s, std::string_view server_name, F &&on_request) {
  FrameChannel ch(s);
  try {
    if (!handshake(ch, server_name))
      return;
    for (;;) {
      auto next = ch.read_frame();
      if (std::holds_alternative<FrameChannel::Closed>(next))
        return;
      if (auto *err = std::get_if<FrameError>(&next)) {
        ch.write(ErrorReply{err->code, err->message});
        if (err->code == ErrorCode::length_overrun)
          return;
        continue;
      }
      const auto &f = std::get<Frame>(next);
      Message m;
      try {
        m = from_frame(f, Direction::to_server);
      } catch (const ProtocolError &e) {
        ch.write(ErrorReply{e.code(), e.what()});
        continue;
      }
      if (std::holds_alternative<Bye>(m)) {
        ch.write(Bye{});
        return;
      }
      if (std::holds_alternative<Hello>(m)) {
        ch.write(ErrorReply{ErrorCode::bad_request, "HELLO after handshake"});
        continue;
      }
      if (message_direction(m) != Direction::to_server) {
        ch.write(ErrorReply{ErrorCode::bad_request,
                            fmt::format("{} is not a request", to_string(f.type))});
        continue;
      }
      bool keep = true;
      try {
        keep = on_request(m, ch);
      } catch (const NetworkError &e) {
        if (!dynamic_cast<const ProtocolError *>(&e))
          throw;
        ch.write(error_reply(e));
      } catch (const std::exception &e) {
        ch.write(error_reply(e));
      }
      if (!keep)
        return;
    }
  } catch (const std::exception &) {
    // Broken connection; nothing left to tell the peer.
  }
}

} // namespace

// FileServer

FileServer::FileServer(std::filesystem::path root, ServerOptions opt)
    : root_(std::move(root)), opt_(std::move(opt)) {
  std::error_code ec;
  if (!std::filesystem::is_directory(root_, ec))
    throw IoError(fmt::format("{} is not a readable directory", root_));
  server_ = std::make_unique<TcpServer>(opt_.host, opt_.port,
                                        [this](tcp::socket &s) { session(s); });
}

std::vector<RunSummary> list_run_files(const std::filesystem::path &root) {
  std::vector<RunSummary> out;
  std::error_code ec;
  for (const auto &e : std::filesystem::directory_iterator(root, ec)) {
    if (!e.is_regular_file() || e.path().extension() != ".trf")
      continue;
    try {
      const auto dir = io::probe(e.path());
      out.push_back({dir.run_number, dir.instrument, dir.start_time,
                     e.path().filename().string(),
                     static_cast<std::uint32_t>(dir.entries.size()), e.file_size()});
    } catch (const Error &) {
      // Not a readable run file; leave it out of the listing.
    }
  }
  std::sort(out.begin(), out.end(), [](const RunSummary &a, const RunSummary &b) {
    return std::tie(a.run_number, a.file_name) < std::tie(b.run_number, b.file_name);
  });
  return out;
}

std::optional<std::filesystem::path> find_run_file(const std::filesystem::path &root,
                                                   std::uint32_t run) {
  for (const auto &s : list_run_files(root))
    if (s.run_number == run)
      return root / s.file_name;
  return std::nullopt;
}

void FileServer::session(tcp::socket &s) {
  run_session(s, "tofbench-files", [this](const Message &m, FrameChannel &ch) {
    if (std::holds_alternative<ListRunsRequest>(m)) {
      ch.write(RunList{list_run_files(root_)});
      return true;
    }
    auto locate = [this](std::uint32_t run) {
      auto p = find_run_file(root_, run);
      if (!p)
        throw ProtocolError(ErrorCode::not_found, fmt::format("no run {} on this server", run));
      return *p;
    };
    if (const auto *r = std::get_if<RunInfoRequest>(&m)) {
      ch.write(RunInfo{io::probe(locate(r->run))});
      return true;
    }
    if (const auto *g = std::get_if<GetDataRequest>(&m)) {
      const auto data = io::read_runfile(locate(g->run), g->selection);
      ByteWriter w;
      io::records::encode_datasets(w, data);
      ch.write_chunked(MsgType::get_data, w.bytes(), opt_.max_chunk);
      return true;
    }
    throw ProtocolError(ErrorCode::unsupported, "the file server has no live data");
  });
}

// LiveState

LiveState::LiveState(DataSet pattern, LiveOptions opt)
    : pattern_(std::move(pattern)), opt_(opt), rng_(opt.seed) {
  if (pattern_.size() == 0)
    throw DataError("live pattern has no spectra");
  if (!(opt_.tick_s > 0) || !(opt_.rate_scale >= 0) || !std::isfinite(opt_.rate_scale))
    throw DataError("live tick length must be positive and the rate scale non-negative");
  n_bins_ = pattern_.spectra().front().xscale().bin_count();
  for (const auto &s : pattern_.spectra()) {
    if (s.xscale().bin_count() != n_bins_)
      throw DataError(fmt::format("live pattern spectrum {} has {} bins, expected {}", s.id(),
                                  s.xscale().bin_count(), n_bins_));
    for (float r : s.counts())
      if (!(r >= 0) || !std::isfinite(r))
        throw DataError(fmt::format("live pattern spectrum {} has a bad rate {}", s.id(), r));
  }
  counts_.assign(pattern_.size() * n_bins_, 0.0);
  changed_at_.assign(counts_.size(), 0);
}

float LiveState::error_of(double count) { return static_cast<float>(std::sqrt(count)); }

void LiveState::tick(std::size_t n) {
  {
    std::unique_lock lock(mu_);
    const double scale = opt_.rate_scale * opt_.tick_s;
    for (std::size_t t = 0; t < n; ++t) {
      ++sequence_;
      std::size_t i = 0;
      for (const auto &s : pattern_.spectra()) {
        for (float r : s.counts()) {
          const double mean = r * scale;
          if (mean > 0) {
            const auto k = std::poisson_distribution<long>(mean)(rng_);
            if (k > 0) {
              counts_[i] += static_cast<double>(k);
              changed_at_[i] = sequence_;
              total_ += static_cast<double>(k);
            }
          }
          ++i;
        }
      }
    }
  }
  cv_.notify_all();
}

std::uint64_t LiveState::sequence() const {
  std::shared_lock lock(mu_);
  return sequence_;
}

Status LiveState::status(bool paused) const {
  std::shared_lock lock(mu_);
  return {sequence_, static_cast<double>(sequence_) * opt_.tick_s, total_, paused};
}

DataSet LiveState::snapshot() const {
  std::shared_lock lock(mu_);
  std::vector<Spectrum> spectra;
  spectra.reserve(pattern_.size());
  std::size_t i = 0;
  for (const auto &s : pattern_.spectra()) {
    std::vector<float> c(n_bins_), e(n_bins_);
    for (std::uint32_t b = 0; b < n_bins_; ++b, ++i) {
      c[b] = static_cast<float>(counts_[i]);
      e[b] = error_of(counts_[i]);
    }
    spectra.push_back(s.with_data(s.xscale(), std::move(c), std::move(e)));
  }
  Attributes attrs;
  for (const auto &a : pattern_.attributes())
    if (a.name != "live_sequence" && a.name != "elapsed_s")
      attrs.push_back(a);
  attrs.emplace_back("live_sequence", static_cast<std::int64_t>(sequence_));
  attrs.emplace_back("elapsed_s", static_cast<double>(sequence_) * opt_.tick_s);
  return DataSet("live", pattern_.x_units(), "counts", std::move(spectra), std::move(attrs));
}

Delta LiveState::delta_since(std::uint64_t since) const {
  std::shared_lock lock(mu_);
  if (since > sequence_)
    throw ProtocolError(ErrorCode::bad_request,
                        fmt::format("subscription from sequence {} is ahead of the live state ({})",
                                    since, sequence_));
  Delta d{since, sequence_, static_cast<double>(sequence_) * opt_.tick_s,
          static_cast<std::uint32_t>(pattern_.size()), n_bins_, {}};
  for (std::size_t i = 0; i < counts_.size(); ++i)
    if (changed_at_[i] > since)
      d.changes.push_back({static_cast<std::uint32_t>(i / n_bins_),
                           static_cast<std::uint32_t>(i % n_bins_),
                           static_cast<float>(counts_[i]), error_of(counts_[i])});
  return d;
}

bool LiveState::wait_past(std::uint64_t seen, std::chrono::milliseconds timeout) const {
  std::shared_lock lock(mu_);
  return cv_.wait_for(lock, timeout, [&] { return sequence_ > seen; });
}

// LiveServer

LiveServer::LiveServer(DataSet pattern, LiveOptions live, ServerOptions opt,
                       std::chrono::milliseconds interval, bool start_paused)
    : state_(std::move(pattern), live), opt_(std::move(opt)), interval_(interval),
      paused_(start_paused) {
  if (interval_.count() <= 0)
    throw DataError("live tick interval must be positive");
  timer_ = std::thread([this] { run_timer(); });
  try {
    server_ = std::make_unique<TcpServer>(opt_.host, opt_.port,
                                          [this](tcp::socket &s) { session(s); });
  } catch (...) {
    stop();
    throw;
  }
}

LiveServer::~LiveServer() { stop(); }

void LiveServer::stop() {
  if (server_)
    server_->stop();
  {
    std::lock_guard lock(timer_mu_);
    quit_ = true;
  }
  timer_cv_.notify_all();
  if (timer_.joinable())
    timer_.join();
}

void LiveServer::run_timer() {
  std::unique_lock lock(timer_mu_);
  while (!quit_) {
    timer_cv_.wait_for(lock, interval_, [this] { return quit_; });
    if (quit_)
      break;
    if (!paused_) {
      lock.unlock();
      state_.tick();
      lock.lock();
    }
  }
}

void LiveServer::pause() {
  std::lock_guard lock(timer_mu_);
  paused_ = true;
}

void LiveServer::resume() {
  std::lock_guard lock(timer_mu_);
  paused_ = false;
}

bool LiveServer::paused() const {
  std::lock_guard lock(timer_mu_);
  return paused_;
}

void LiveServer::step(std::size_t n) { state_.tick(n); }

void LiveServer::follow(FrameChannel &ch, std::uint64_t since) {
  auto send = [&](std::uint64_t from) {
    const auto d = state_.delta_since(from);
    ch.write_chunked(MsgType::delta, encode_delta(d), opt_.max_chunk);
    return d.to_sequence;
  };
  auto last = send(since);
  while (!server_->stopping()) {
    if (ch.readable(0)) {
      auto next = ch.read_frame();
      if (std::holds_alternative<FrameChannel::Closed>(next))
        throw NetworkError("client left while following");
      const auto *f = std::get_if<Frame>(&next);
      if (f && f->type == MsgType::bye) {
        ch.write(Bye{});
        return;
      }
      ch.write(ErrorReply{ErrorCode::bad_request, "only BYE is accepted while following"});
      continue;
    }
    if (state_.wait_past(last, std::chrono::milliseconds(20)))
      last = send(last);
  }
}

void LiveServer::session(tcp::socket &s) {
  run_session(s, "tofbench-live", [this](const Message &m, FrameChannel &ch) {
    if (std::holds_alternative<StatusRequest>(m)) {
      ch.write(state_.status(paused()));
      return true;
    }
    if (const auto *sub = std::get_if<SubscribeRequest>(&m)) {
      if (sub->follow) {
        follow(ch, sub->since_sequence);
        return true;
      }
      ch.write_chunked(MsgType::delta, encode_delta(state_.delta_since(sub->since_sequence)),
                       opt_.max_chunk);
      return true;
    }
    if (const auto *g = std::get_if<GetDataRequest>(&m)) {
      const auto &sel = g->selection;
      if (sel.dataset_indices || sel.spectrum_ids || sel.bin_range)
        throw ProtocolError(ErrorCode::unsupported, "live fetches take no selection");
      ByteWriter w;
      io::records::encode_datasets(w, {state_.snapshot()});
      ch.write_chunked(MsgType::get_data, w.bytes(), opt_.max_chunk);
      return true;
    }
    throw ProtocolError(ErrorCode::unsupported, "the live server has no run files");
  });
}

// Client

Client::Client(const std::string &host, std::uint16_t port, ClientOptions opt)
    : opt_(std::move(opt)), socket_(io_) {
  try {
    tcp::resolver resolver(io_);
    asio::connect(socket_, resolver.resolve(host, std::to_string(port)));
    socket_.set_option(tcp::no_delay(true));
  } catch (const boost::system::system_error &e) {
    throw NetworkError(fmt::format("cannot connect to {}:{}: {}", host, port, e.what()));
  }
  ch_ = std::make_unique<FrameChannel>(socket_, opt_.timeout_ms);
  open_ = true;
  ch_->write(Hello{opt_.version, opt_.name});
  const auto reply = receive();
  if (const auto *e = std::get_if<ErrorReply>(&reply)) {
    open_ = false;
    boost::system::error_code ec;
    socket_.close(ec);
    throw ProtocolError(e->code, fmt::format("server refused the connection ({}): {}",
                                             to_string(e->code), e->message));
  }
  const auto *h = std::get_if<Hello>(&reply);
  if (!h || h->version != opt_.version)
    throw ProtocolError(ErrorCode::version_mismatch, "server did not answer HELLO in kind");
  server_hello_ = *h;
}

Client::~Client() {
  try {
    close();
  } catch (...) {
  }
}

void Client::close() {
  if (!open_)
    return;
  open_ = false;
  try {
    if (following_)
      unsubscribe();
    ch_->write(Bye{});
    for (;;) {
      const auto next = ch_->read_frame();
      const auto *f = std::get_if<Frame>(&next);
      if (!f || f->type == MsgType::bye)
        break;
    }
  } catch (const Error &) {
  }
  boost::system::error_code ec;
  socket_.shutdown(tcp::socket::shutdown_both, ec);
  socket_.close(ec);
}

void Client::send_bytes(std::span<const std::byte> b) { ch_->write_bytes(b); }

Message Client::receive() {
  auto next = ch_->read_frame();
  if (std::holds_alternative<FrameChannel::Closed>(next))
    throw NetworkError("connection closed by the server");
  if (auto *err = std::get_if<FrameError>(&next))
    throw ProtocolError(err->code, err->message);
  return from_frame(std::get<Frame>(next), Direction::to_client);
}

namespace {
[[noreturn]] void raise(const ErrorReply &e) {
  throw ProtocolError(e.code, fmt::format("server error ({}): {}", to_string(e.code), e.message));
}
} // namespace

Message Client::request(const Message &m) {
  if (following_)
    throw UsageError("client is following a live stream; unsubscribe first");
  ch_->write(m);
  auto reply = receive();
  if (const auto *e = std::get_if<ErrorReply>(&reply))
    raise(*e);
  if (message_type(reply) != message_type(m))
    throw ProtocolError(ErrorCode::malformed,
                        fmt::format("expected a {} reply, got {}", to_string(message_type(m)),
                                    to_string(message_type(reply))));
  return reply;
}

Bytes Client::read_body(MsgType type) {
  Bytes body;
  last_body_bytes_ = 0;
  last_body_frames_ = 0;
  for (;;) {
    auto m = receive();
    if (const auto *e = std::get_if<ErrorReply>(&m))
      raise(*e);
    auto *c = std::get_if<Chunk>(&m);
    if (!c || c->type != type)
      throw ProtocolError(ErrorCode::malformed,
                          fmt::format("expected {} data, got {}", to_string(type),
                                      to_string(message_type(m))));
    body.insert(body.end(), c->body.begin(), c->body.end());
    last_body_bytes_ = body.size();
    ++last_body_frames_;
    if (!c->more)
      return body;
  }
}

std::vector<RunSummary> Client::list_runs() {
  return std::get<RunList>(request(ListRunsRequest{})).runs;
}

io::RunFileDirectory Client::run_info(std::uint32_t run) {
  return std::get<RunInfo>(request(RunInfoRequest{run})).directory;
}

namespace {
std::vector<DataSet> decode_body(const Bytes &body) {
  ByteReader r(body);
  try {
    auto out = io::records::decode_datasets(r);
    if (r.remaining())
      throw DataError(fmt::format("{} trailing bytes", r.remaining()));
    return out;
  } catch (const DataError &e) {
    throw ProtocolError(ErrorCode::malformed, fmt::format("bad GET_DATA body: {}", e.what()));
  }
}

Delta decode_delta_body(const Bytes &body) {
  try {
    return decode_delta(body);
  } catch (const DataError &e) {
    throw ProtocolError(ErrorCode::malformed, fmt::format("bad DELTA body: {}", e.what()));
  }
}
} // namespace

std::vector<DataSet> Client::fetch(std::uint32_t run, const io::LoadSelection &sel) {
  if (following_)
    throw UsageError("client is following a live stream; unsubscribe first");
  ch_->write(GetDataRequest{run, sel});
  return decode_body(read_body(MsgType::get_data));
}

DataSet Client::fetch_live() {
  auto v = fetch(0);
  if (v.size() != 1)
    throw ProtocolError(ErrorCode::malformed, "live fetch did not return one dataset");
  return std::move(v.front());
}

Status Client::status() { return std::get<Status>(request(StatusRequest{})); }

Delta Client::poll(std::uint64_t since) {
  if (following_)
    throw UsageError("client is following a live stream; unsubscribe first");
  ch_->write(SubscribeRequest{since, false});
  return decode_delta_body(read_body(MsgType::delta));
}

void Client::subscribe(std::uint64_t since) {
  if (following_)
    throw UsageError("already following a live stream");
  ch_->write(SubscribeRequest{since, true});
  following_ = true;
}

Delta Client::next_delta() {
  if (!following_)
    throw UsageError("not following a live stream");
  return decode_delta_body(read_body(MsgType::delta));
}

void Client::unsubscribe() {
  if (!following_)
    return;
  ch_->write(Bye{});
  for (;;) {
    auto m = receive();
    if (std::holds_alternative<Bye>(m))
      break;
  }
  following_ = false;
}

// Endpoints

std::pair<std::string, std::uint16_t> parse_endpoint(const std::string &text,
                                                     std::uint16_t default_port) {
  std::string host = "127.0.0.1";
  std::string port_text = text;
  if (const auto colon = text.rfind(':'); colon != std::string::npos) {
    if (colon > 0)
      host = text.substr(0, colon);
    port_text = text.substr(colon + 1);
  } else if (!text.empty() && !std::isdigit(static_cast<unsigned char>(text[0]))) {
    return {text, default_port};
  }
  if (port_text.empty())
    return {host, default_port};
  unsigned port = 0;
  const auto [p, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
  if (ec != std::errc{} || p != port_text.data() + port_text.size() || port > 65535)
    throw UsageError(fmt::format("bad port in '{}'", text));
  return {host, static_cast<std::uint16_t>(port)};
}

std::uint16_t default_port(std::uint16_t fallback) {
  const char *env = std::getenv("TOFBENCH_PORT");
  if (!env || !*env)
    return fallback;
  unsigned port = 0;
  const std::string_view s(env);
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), port);
  if (ec != std::errc{} || p != s.data() + s.size() || port > 65535)
    throw UsageError(fmt::format("TOFBENCH_PORT='{}' is not a port number", s));
  return static_cast<std::uint16_t>(port);
}

} // namespace tofbench::net
