#include "doctest.h"

#include "net_support.hpp"

#include "tofbench/dataserver.hpp"
#include "tofbench/synth.hpp"

#include <fmt/format.h>

#include <fstream>
#include <future>
#include <thread>

using namespace tofbench;
using namespace tofbench::net;
using testsupport::ScratchDir;

namespace {

Bytes frame_bytes(std::uint32_t len, std::uint8_t type, const Bytes &payload = {}) {
  ByteWriter w;
  w.put(len);
  w.put(type);
  w.put_bytes(payload);
  return w.take();
}

/// Two small runs with different shapes.
std::vector<std::filesystem::path> write_two_runs(const std::filesystem::path &dir) {
  std::mt19937_64 rng(5);
  std::vector<std::filesystem::path> out;
  for (std::uint32_t k = 0; k < 2; ++k) {
    io::Run run;
    run.instrument = "TEST";
    run.run_number = 100 + k;
    run.start_time = 1000 + k;
    for (int d = 0; d < 2 + static_cast<int>(k); ++d) {
      auto ds = testsupport::random_dataset(rng, 10, 30);
      run.datasets.push_back({io::DatasetKind::histogram, ds});
    }
    out.push_back(dir / fmt::format("TEST{}.trf", run.run_number));
    io::write_runfile(out.back(), run);
  }
  std::ofstream(dir / "notes.txt") << "not a run";
  std::ofstream(dir / "broken.trf") << "TRF1 but not really";
  return out;
}

DataSet small_pattern() { return synth::make_live_pattern(6, 40, 3); }

} // namespace

TEST_CASE("frame codec examples") {
  const auto hello = to_frame(Hello{1, "client"});
  const auto bytes = encode_frame(hello);
  CHECK(bytes.size() == 5 + 4 + 2 + 6);
  const auto res = decode_frame(bytes);
  REQUIRE(std::holds_alternative<Decoded>(res));
  CHECK(std::get<Decoded>(res).consumed == bytes.size());
  CHECK(std::get<Hello>(from_frame(std::get<Decoded>(res).frame, Direction::to_server)) ==
        Hello{1, "client"});

  // Truncation asks for exactly the missing bytes.
  const auto part = std::span(bytes).first(3);
  CHECK(std::get<NeedMoreBytes>(decode_frame(part)).n == 2);
  const auto part2 = std::span(bytes).first(9);
  CHECK(std::get<NeedMoreBytes>(decode_frame(part2)).n == bytes.size() - 9);

  const auto bad = frame_bytes(0, 0xFF);
  CHECK(std::get<FrameError>(decode_frame(bad)).code == ErrorCode::unknown_type);
  const auto huge = frame_bytes(max_frame_payload + 1, 1);
  CHECK(std::get<FrameError>(decode_frame(huge)).code == ErrorCode::length_overrun);

  CHECK_THROWS_AS(from_frame(Frame{MsgType::hello, Bytes(3)}, Direction::to_server),
                  ProtocolError);
  CHECK_THROWS_AS(from_frame(Frame{MsgType::bye, Bytes(1)}, Direction::to_server),
                  ProtocolError);
  CHECK_THROWS_AS(from_frame(Frame{MsgType::delta, {}}, Direction::to_server), ProtocolError);
}

TEST_CASE("frame codec round trip and corruption") {
  std::mt19937_64 rng(99);
  for (int i = 0; i < 20000; ++i) {
    const auto m = testsupport::random_message(rng);
    const auto dir = message_direction(m);
    const auto bytes = encode_frame(to_frame(m));
    const auto res = decode_frame(bytes);
    REQUIRE(std::holds_alternative<Decoded>(res));
    const auto back = from_frame(std::get<Decoded>(res).frame, dir);
    CHECK(back == m);

    const auto bad = testsupport::corrupt(rng, bytes);
    const auto out = testsupport::check_decode(bad, dir);
    if (!out.ok)
      FAIL(out.problem << " in " << to_string(message_type(m)));
  }
}

TEST_CASE("chunk splitting and delta bodies") {
  Bytes body(2500);
  for (std::size_t i = 0; i < body.size(); ++i)
    body[i] = static_cast<std::byte>(i * 7);
  const auto chunks = split_body(MsgType::get_data, body, 1000);
  REQUIRE(chunks.size() == 3);
  CHECK(chunks[0].more);
  CHECK(chunks[1].more);
  CHECK_FALSE(chunks[2].more);
  Bytes joined;
  for (const auto &c : chunks)
    joined.insert(joined.end(), c.body.begin(), c.body.end());
  CHECK(joined == body);
  CHECK(split_body(MsgType::delta, {}, 10).size() == 1);

  Delta d{3, 7, 7.0, 2, 4, {{0, 1, 5, 2.2f}, {1, 3, 9, 3}}};
  CHECK(decode_delta(encode_delta(d)) == d);
  auto broken = encode_delta(d);
  broken.pop_back();
  CHECK_THROWS_AS(decode_delta(broken), DataError);
  Delta outside = d;
  outside.changes[0].bin = 4;
  CHECK_THROWS_AS(decode_delta(encode_delta(outside)), DataError);
}

TEST_CASE("endpoint parsing") {
  CHECK(parse_endpoint("example:81", 9) == std::pair<std::string, std::uint16_t>{"example", 81});
  CHECK(parse_endpoint(":81", 9) == std::pair<std::string, std::uint16_t>{"127.0.0.1", 81});
  CHECK(parse_endpoint("81", 9) == std::pair<std::string, std::uint16_t>{"127.0.0.1", 81});
  CHECK(parse_endpoint("host", 9) == std::pair<std::string, std::uint16_t>{"host", 9});
  CHECK_THROWS_AS(parse_endpoint("host:99999", 9), UsageError);
  CHECK_THROWS_AS(parse_endpoint("host:x", 9), UsageError);
}

TEST_CASE("file server") {
  ScratchDir dir("files");
  const auto paths = write_two_runs(dir.path());
  FileServer server(dir.path());
  Client c("127.0.0.1", server.port());
  CHECK(c.server_hello().version == protocol_version);

  const auto runs = c.list_runs();
  REQUIRE(runs.size() == 2);
  CHECK(runs[0].run_number == 100);
  CHECK(runs[1].file_name == "TEST101.trf");
  CHECK(runs[1].n_datasets == 3);
  CHECK(runs[0].file_bytes == std::filesystem::file_size(paths[0]));

  CHECK(c.run_info(101) == io::probe(paths[1]));
  try {
    c.run_info(7);
    FAIL("expected NotFound");
  } catch (const ProtocolError &e) {
    CHECK(e.code() == ErrorCode::not_found);
  }

  for (std::size_t k = 0; k < 2; ++k)
    CHECK(c.fetch(runs[k].run_number) == io::read_runfile(paths[k]));

  std::mt19937_64 rng(3);
  const auto full = io::read_runfile(paths[1]);
  for (int i = 0; i < 30; ++i) {
    const auto sel = testsupport::random_selection(rng, full);
    CHECK(c.fetch(101, sel) == testsupport::restrict_selection(full, sel));
  }

  io::LoadSelection bad;
  bad.dataset_indices = std::vector<std::uint32_t>{9};
  try {
    c.fetch(101, bad);
    FAIL("expected a request error");
  } catch (const ProtocolError &e) {
    CHECK(e.code() == ErrorCode::bad_request);
  }
  // The connection survives request errors.
  CHECK(c.list_runs().size() == 2);
  CHECK_THROWS_AS(c.status(), ProtocolError);
}

TEST_CASE("partial fetch moves proportionally fewer bytes") {
  ScratchDir dir("partial");
  const auto ds = synth::make_large_dataset(50, 400, 2);
  io::write_runfile(dir / "big.trf", "BIG", 5, 0, {ds});
  FileServer server(dir.path());
  Client c("127.0.0.1", server.port());
  const auto full = c.fetch(5);
  const auto full_bytes = c.last_body_bytes();
  io::LoadSelection one;
  one.spectrum_ids = std::vector<std::uint32_t>{ds.spectra()[0].id()};
  const auto part = c.fetch(5, one);
  const auto part_bytes = c.last_body_bytes();
  REQUIRE(part.size() == 1);
  CHECK(part[0].size() == 1);
  // Byte-count oracle: the records encoding of exactly what was selected.
  ByteWriter w;
  io::records::encode_datasets(w, testsupport::restrict_selection(full, one));
  CHECK(part_bytes == w.size());
  const double ratio = static_cast<double>(part_bytes) / static_cast<double>(full_bytes);
  CHECK(ratio == doctest::Approx(1.0 / 50).epsilon(0.2));
}

TEST_CASE("chunked replies") {
  ScratchDir dir("chunks");
  const auto ds = synth::make_large_dataset(8, 300, 4);
  io::write_runfile(dir / "c.trf", "C", 1, 0, {ds});
  ServerOptions opt;
  opt.max_chunk = 1000;
  FileServer server(dir.path(), opt);
  Client c("127.0.0.1", server.port());
  CHECK(c.fetch(1) == io::read_runfile(dir / "c.trf"));
  CHECK(c.last_body_frames() == (c.last_body_bytes() + 999) / 1000);
  CHECK(c.last_body_frames() > 5);
}

TEST_CASE("handshake and protocol errors") {
  ScratchDir dir("proto");
  write_two_runs(dir.path());
  FileServer server(dir.path());

  ClientOptions v2;
  v2.version = 2;
  try {
    Client c("127.0.0.1", server.port(), v2);
    FAIL("expected version mismatch");
  } catch (const ProtocolError &e) {
    CHECK(e.code() == ErrorCode::version_mismatch);
  }

  Client c("127.0.0.1", server.port());
  c.send_bytes(frame_bytes(3, 0xFF, Bytes(3)));
  auto reply = c.receive();
  REQUIRE(std::holds_alternative<ErrorReply>(reply));
  CHECK(std::get<ErrorReply>(reply).code == ErrorCode::unknown_type);
  c.send_bytes(frame_bytes(0, static_cast<std::uint8_t>(MsgType::run_info)));
  reply = c.receive();
  REQUIRE(std::holds_alternative<ErrorReply>(reply));
  CHECK(std::get<ErrorReply>(reply).code == ErrorCode::malformed);
  c.send_bytes(encode_frame(to_frame(Status{})));
  CHECK(std::get<ErrorReply>(c.receive()).code == ErrorCode::malformed);
  c.send_bytes(encode_frame(to_frame(ErrorReply{ErrorCode::internal, "x"})));
  CHECK(std::get<ErrorReply>(c.receive()).code == ErrorCode::bad_request);
  CHECK(c.list_runs().size() == 2);

  c.send_bytes(frame_bytes(0xFFFFFFF0u, 1));
  reply = c.receive();
  CHECK(std::get<ErrorReply>(reply).code == ErrorCode::length_overrun);
  CHECK_THROWS_AS(c.receive(), NetworkError);

  // A client that skips HELLO is refused.
  Client ok("127.0.0.1", server.port());
  {
    boost::asio::io_context io;
    tcp::socket s(io);
    s.connect(tcp::endpoint(boost::asio::ip::make_address("127.0.0.1"), server.port()));
    FrameChannel ch(s, 5000);
    ch.write(ListRunsRequest{});
    auto r = ch.read_frame();
    REQUIRE(std::holds_alternative<Frame>(r));
    const auto m = from_frame(std::get<Frame>(r), Direction::to_client);
    CHECK(std::get<ErrorReply>(m).code == ErrorCode::bad_request);
    CHECK(std::holds_alternative<FrameChannel::Closed>(ch.read_frame()));
  }
  CHECK(ok.list_runs().size() == 2);
}

TEST_CASE("sixteen concurrent clients") {
  ScratchDir dir("many");
  const auto paths = write_two_runs(dir.path());
  FileServer server(dir.path());
  const auto full = io::read_runfile(paths[1]);
  std::vector<io::LoadSelection> sels;
  std::mt19937_64 rng(8);
  for (int i = 0; i < 16; ++i)
    sels.push_back(testsupport::random_selection(rng, full));

  std::vector<std::future<int>> jobs;
  for (int i = 0; i < 16; ++i)
    jobs.push_back(std::async(std::launch::async, [&, i] {
      Client c("127.0.0.1", server.port());
      int good = 0;
      for (int k = 0; k < 5; ++k)
        good += c.fetch(101, sels[i]) == testsupport::restrict_selection(full, sels[i]);
      return good;
    }));
  for (auto &j : jobs)
    CHECK(j.get() == 5);
}

TEST_CASE("live state") {
  LiveState a(small_pattern(), {1.0, 42, 1.0});
  LiveState b(small_pattern(), {1.0, 42, 1.0});
  CHECK(a.sequence() == 0);
  CHECK(a.delta_since(0).changes.empty());
  a.tick(5);
  b.tick(3);
  b.tick(2);
  CHECK(a.snapshot() == b.snapshot());
  CHECK(a.status().total_counts > 0);
  CHECK(a.status().elapsed_s == 5.0);
  CHECK_THROWS_AS(a.delta_since(6), ProtocolError);

  // Replay from every earlier sequence.
  LiveState s(small_pattern(), {2.0, 7, 0.5});
  std::vector<DataSet> snaps{s.snapshot()};
  for (int k = 0; k < 6; ++k) {
    s.tick();
    snaps.push_back(s.snapshot());
  }
  for (std::size_t j = 0; j < snaps.size(); ++j)
    CHECK(apply_delta(snaps[j], s.delta_since(j)) == snaps.back());
  CHECK_THROWS_AS(apply_delta(snaps[1], s.delta_since(2)), DataError);

  CHECK_THROWS_AS(LiveState(DataSet::empty(XUnits::tof_us)), DataError);
}

TEST_CASE("live server") {
  LiveServer server(small_pattern(), {1.0, 11, 1.0}, {}, std::chrono::milliseconds(5), true);
  Client c("127.0.0.1", server.port());
  auto s1 = c.status();
  CHECK(s1.paused);
  CHECK(s1.sequence == 0);
  server.step(3);
  auto s2 = c.status();
  CHECK(s2.sequence == 3);
  CHECK(s2.total_counts >= s1.total_counts);

  // Paused: nothing changed since the current sequence.
  const auto empty = c.poll(s2.sequence);
  CHECK(empty.changes.empty());
  CHECK(empty.to_sequence == s2.sequence);

  const auto at_j = c.fetch_live();
  CHECK(std::get<std::int64_t>(*find_attribute(at_j.attributes(), "live_sequence")) == 3);
  server.step(4);
  const auto d = c.poll(3);
  const auto at_k = c.fetch_live();
  CHECK(apply_delta(at_j, d) == at_k);
  CHECK(at_k == server.state().snapshot());

  try {
    c.poll(1000);
    FAIL("expected a subscription error");
  } catch (const ProtocolError &e) {
    CHECK(e.code() == ErrorCode::bad_request);
  }
  CHECK_THROWS_AS(c.list_runs(), ProtocolError);
  io::LoadSelection sel;
  sel.spectrum_ids = std::vector<std::uint32_t>{1};
  CHECK_THROWS_AS(c.fetch(0, sel), ProtocolError);

  // Follow mode: apply pushed deltas, then compare with a fresh fetch.
  auto view = c.fetch_live();
  c.subscribe(7);
  auto first = c.next_delta();
  CHECK(first.changes.empty());
  std::uint64_t last = first.to_sequence;
  for (int i = 0; i < 5; ++i) {
    server.step();
    const auto next = c.next_delta();
    CHECK(next.to_sequence > last);
    CHECK(next.from_sequence == last);
    last = next.to_sequence;
    view = apply_delta(view, next);
  }
  c.unsubscribe();
  CHECK(view == c.fetch_live());

  // The timer keeps ticking when resumed.
  server.resume();
  const auto before = c.status();
  std::this_thread::sleep_for(std::chrono::milliseconds(60));
  const auto after = c.status();
  CHECK(after.sequence > before.sequence);
  CHECK(after.total_counts >= before.total_counts);
  c.close();
  server.stop();
}

TEST_CASE("client errors") {
  std::uint16_t port;
  {
    ScratchDir dir("gone");
    FileServer s(dir.path());
    port = s.port();
  }
  CHECK_THROWS_AS(Client("127.0.0.1", port), NetworkError);
  CHECK_THROWS_AS(FileServer("/nonexistent/dir"), IoError);
}
