#include "tofbench/protocol.hpp"

#include <fmt/format.h>

#include <algorithm>

namespace tofbench::net {

bool is_known_type(std::uint8_t t) { return t <= static_cast<std::uint8_t>(MsgType::bye); }

std::string_view to_string(MsgType t) {
  switch (t) {
  case MsgType::hello: return "HELLO";
  case MsgType::list_runs: return "LIST_RUNS";
  case MsgType::run_info: return "RUN_INFO";
  case MsgType::get_data: return "GET_DATA";
  case MsgType::subscribe: return "SUBSCRIBE";
  case MsgType::delta: return "DELTA";
  case MsgType::status: return "STATUS";
  case MsgType::error: return "ERROR";
  case MsgType::bye: return "BYE";
  }
  return "?";
}

std::string_view to_string(ErrorCode c) {
  switch (c) {
  case ErrorCode::unknown_type: return "UnknownType";
  case ErrorCode::length_overrun: return "LengthOverrun";
  case ErrorCode::truncated: return "Truncated";
  case ErrorCode::malformed: return "Malformed";
  case ErrorCode::not_found: return "NotFound";
  case ErrorCode::version_mismatch: return "VersionMismatch";
  case ErrorCode::bad_request: return "BadRequest";
  case ErrorCode::unsupported: return "Unsupported";
  case ErrorCode::internal: return "Internal";
  }
  return "?";
}

Bytes encode_frame(const Frame &f) {
  if (f.payload.size() > max_frame_payload)
    throw ProtocolError(ErrorCode::length_overrun,
                        fmt::format("frame payload of {} bytes exceeds the {} byte limit",
                                    f.payload.size(), max_frame_payload));
  ByteWriter w;
  w.put(static_cast<std::uint32_t>(f.payload.size()));
  w.put(static_cast<std::uint8_t>(f.type));
  w.put_bytes(f.payload);
  return w.take();
}

DecodeResult decode_frame(std::span<const std::byte> buf) {
  if (buf.size() < frame_header_bytes)
    return NeedMoreBytes{frame_header_bytes - buf.size()};
  ByteReader r(buf);
  const auto len = r.get<std::uint32_t>();
  const auto type = r.get<std::uint8_t>();
  if (len > max_frame_payload)
    return FrameError{ErrorCode::length_overrun,
                      fmt::format("frame length {} exceeds the {} byte limit", len,
                                  max_frame_payload)};
  if (!is_known_type(type))
    return FrameError{ErrorCode::unknown_type, fmt::format("unknown message type {}", type)};
  if (r.remaining() < len)
    return NeedMoreBytes{len - r.remaining()};
  const auto *p = buf.data() + frame_header_bytes;
  return Decoded{Frame{static_cast<MsgType>(type), Bytes(p, p + len)},
                 frame_header_bytes + len};
}

namespace {

template <class T> void put_ids(ByteWriter &w, const std::optional<std::vector<T>> &v) {
  w.put(static_cast<std::uint8_t>(v.has_value()));
  if (!v)
    return;
  w.put(static_cast<std::uint32_t>(v->size()));
  w.put_array(std::span<const T>(*v));
}

bool get_bool(ByteReader &r) {
  const auto v = r.get<std::uint8_t>();
  if (v > 1)
    throw DataError(fmt::format("bad boolean {}", v));
  return v == 1;
}

std::optional<std::vector<std::uint32_t>> get_ids(ByteReader &r) {
  if (!get_bool(r))
    return std::nullopt;
  const auto n = r.get<std::uint32_t>();
  if (n > r.remaining() / 4)
    throw TruncatedError(r.tell(), std::uint64_t{n} * 4);
  std::vector<std::uint32_t> v(n);
  r.read(v.data(), std::size_t{n} * 4);
  return v;
}

void put_chunk(ByteWriter &w, const Chunk &c) {
  w.put(static_cast<std::uint8_t>(c.more));
  w.put_bytes(c.body);
}

Chunk get_chunk(MsgType t, ByteReader &r) {
  Chunk c{t, false, {}};
  const auto flag = r.get<std::uint8_t>();
  if (flag > 1)
    throw DataError(fmt::format("bad continuation flag {}", flag));
  c.more = flag == 1;
  c.body.resize(r.remaining());
  r.read(c.body.data(), c.body.size());
  return c;
}

struct Encoder {
  ByteWriter &w;
  void operator()(const Hello &m) {
    w.put(m.version);
    w.put_string(m.name);
  }
  void operator()(const ListRunsRequest &) {}
  void operator()(const RunList &m) {
    w.put(static_cast<std::uint32_t>(m.runs.size()));
    for (const auto &s : m.runs) {
      w.put(s.run_number);
      w.put_string(s.instrument);
      w.put(s.start_time);
      w.put_string(s.file_name);
      w.put(s.n_datasets);
      w.put(s.file_bytes);
    }
  }
  void operator()(const RunInfoRequest &m) { w.put(m.run); }
  void operator()(const RunInfo &m) {
    io::records::encode_directory(w, m.directory);
    w.put(m.directory.format_version);
    w.put(m.directory.header_bytes);
  }
  void operator()(const GetDataRequest &m) {
    w.put(m.run);
    put_ids(w, m.selection.dataset_indices);
    put_ids(w, m.selection.spectrum_ids);
    w.put(static_cast<std::uint8_t>(m.selection.bin_range.has_value()));
    if (m.selection.bin_range) {
      w.put(m.selection.bin_range->first);
      w.put(m.selection.bin_range->second);
    }
  }
  void operator()(const Chunk &m) { put_chunk(w, m); }
  void operator()(const SubscribeRequest &m) {
    w.put(m.since_sequence);
    w.put(static_cast<std::uint8_t>(m.follow));
  }
  void operator()(const StatusRequest &) {}
  void operator()(const Status &m) {
    w.put(m.sequence);
    w.put(m.elapsed_s);
    w.put(m.total_counts);
    w.put(static_cast<std::uint8_t>(m.paused));
  }
  void operator()(const ErrorReply &m) {
    w.put(static_cast<std::uint16_t>(m.code));
    w.put_string(m.message);
  }
  void operator()(const Bye &) {}
};

Message decode_payload(MsgType t, Direction dir, ByteReader &r) {
  const bool up = dir == Direction::to_server;
  switch (t) {
  case MsgType::hello: {
    Hello m;
    m.version = r.get<std::uint32_t>();
    m.name = r.get_string();
    return m;
  }
  case MsgType::list_runs: {
    if (up)
      return ListRunsRequest{};
    RunList m;
    const auto n = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < n; ++i) {
      RunSummary s;
      s.run_number = r.get<std::uint32_t>();
      s.instrument = r.get_string();
      s.start_time = r.get<std::int64_t>();
      s.file_name = r.get_string();
      s.n_datasets = r.get<std::uint32_t>();
      s.file_bytes = r.get<std::uint64_t>();
      m.runs.push_back(std::move(s));
    }
    return m;
  }
  case MsgType::run_info:
    if (up)
      return RunInfoRequest{r.get<std::uint32_t>()};
  {
    RunInfo m{io::records::decode_directory(r)};
    m.directory.format_version = r.get<std::uint32_t>();
    m.directory.header_bytes = r.get<std::uint64_t>();
    return m;
  }
  case MsgType::get_data: {
    if (!up)
      return get_chunk(t, r);
    GetDataRequest m;
    m.run = r.get<std::uint32_t>();
    m.selection.dataset_indices = get_ids(r);
    m.selection.spectrum_ids = get_ids(r);
    if (get_bool(r)) {
      const auto a = r.get<std::uint32_t>();
      const auto b = r.get<std::uint32_t>();
      m.selection.bin_range = std::pair{a, b};
    }
    return m;
  }
  case MsgType::subscribe: {
    if (!up)
      throw DataError("SUBSCRIBE is a request");
    SubscribeRequest m;
    m.since_sequence = r.get<std::uint64_t>();
    m.follow = get_bool(r);
    return m;
  }
  case MsgType::delta:
    if (up)
      throw DataError("DELTA is a reply");
    return get_chunk(t, r);
  case MsgType::status: {
    if (up)
      return StatusRequest{};
    Status m;
    m.sequence = r.get<std::uint64_t>();
    m.elapsed_s = r.get<double>();
    m.total_counts = r.get<double>();
    m.paused = get_bool(r);
    return m;
  }
  case MsgType::error: {
    ErrorReply m;
    const auto code = r.get<std::uint16_t>();
    if (code < 1 || code > static_cast<std::uint16_t>(ErrorCode::internal))
      throw DataError(fmt::format("unknown error code {}", code));
    m.code = static_cast<ErrorCode>(code);
    m.message = r.get_string();
    return m;
  }
  case MsgType::bye:
    return Bye{};
  }
  throw DataError("unknown message type");
}

} // namespace

bool GetDataRequest::operator==(const GetDataRequest &o) const {
  return run == o.run && selection.dataset_indices == o.selection.dataset_indices &&
         selection.spectrum_ids == o.selection.spectrum_ids &&
         selection.bin_range == o.selection.bin_range;
}

MsgType message_type(const Message &m) {
  struct V {
    MsgType operator()(const Hello &) { return MsgType::hello; }
    MsgType operator()(const ListRunsRequest &) { return MsgType::list_runs; }
    MsgType operator()(const RunList &) { return MsgType::list_runs; }
    MsgType operator()(const RunInfoRequest &) { return MsgType::run_info; }
    MsgType operator()(const RunInfo &) { return MsgType::run_info; }
    MsgType operator()(const GetDataRequest &) { return MsgType::get_data; }
    MsgType operator()(const Chunk &c) { return c.type; }
    MsgType operator()(const SubscribeRequest &) { return MsgType::subscribe; }
    MsgType operator()(const StatusRequest &) { return MsgType::status; }
    MsgType operator()(const Status &) { return MsgType::status; }
    MsgType operator()(const ErrorReply &) { return MsgType::error; }
    MsgType operator()(const Bye &) { return MsgType::bye; }
  };
  return std::visit(V{}, m);
}

Direction message_direction(const Message &m) {
  if (std::holds_alternative<ListRunsRequest>(m) || std::holds_alternative<RunInfoRequest>(m) ||
      std::holds_alternative<GetDataRequest>(m) || std::holds_alternative<SubscribeRequest>(m) ||
      std::holds_alternative<StatusRequest>(m))
    return Direction::to_server;
  return Direction::to_client;
}

Frame to_frame(const Message &m) {
  if (const auto *c = std::get_if<Chunk>(&m);
      c && c->type != MsgType::get_data && c->type != MsgType::delta)
    throw DataError(fmt::format("{} frames do not carry chunks", to_string(c->type)));
  ByteWriter w;
  std::visit(Encoder{w}, m);
  return Frame{message_type(m), w.take()};
}

Message from_frame(const Frame &f, Direction dir) {
  ByteReader r(f.payload);
  try {
    auto m = decode_payload(f.type, dir, r);
    if (r.remaining())
      throw DataError(fmt::format("{} trailing bytes", r.remaining()));
    return m;
  } catch (const ProtocolError &) {
    throw;
  } catch (const Error &e) {
    throw ProtocolError(ErrorCode::malformed,
                        fmt::format("malformed {} payload: {}", to_string(f.type), e.what()));
  }
}

std::vector<Chunk> split_body(MsgType type, const Bytes &body, std::size_t max_body) {
  if (max_body == 0)
    throw DataError("chunk size must be positive");
  std::vector<Chunk> out;
  std::size_t at = 0;
  do {
    const auto n = std::min(max_body, body.size() - at);
    Chunk c{type, false, Bytes(body.begin() + at, body.begin() + at + n)};
    at += n;
    c.more = at < body.size();
    out.push_back(std::move(c));
  } while (at < body.size());
  return out;
}

Bytes encode_delta(const Delta &d) {
  ByteWriter w;
  w.put(d.from_sequence);
  w.put(d.to_sequence);
  w.put(d.elapsed_s);
  w.put(d.n_spectra);
  w.put(d.n_bins);
  w.put(static_cast<std::uint32_t>(d.changes.size()));
  for (const auto &c : d.changes) {
    w.put(c.spectrum);
    w.put(c.bin);
    w.put(c.count);
    w.put(c.error);
  }
  return w.take();
}

Delta decode_delta(std::span<const std::byte> body) {
  ByteReader r(body);
  Delta d;
  d.from_sequence = r.get<std::uint64_t>();
  d.to_sequence = r.get<std::uint64_t>();
  d.elapsed_s = r.get<double>();
  d.n_spectra = r.get<std::uint32_t>();
  d.n_bins = r.get<std::uint32_t>();
  const auto n = r.get<std::uint32_t>();
  if (n != r.remaining() / 16 || r.remaining() % 16)
    throw DataError(fmt::format("delta declares {} changes but carries {} bytes", n,
                                r.remaining()));
  d.changes.resize(n);
  for (auto &c : d.changes) {
    c.spectrum = r.get<std::uint32_t>();
    c.bin = r.get<std::uint32_t>();
    c.count = r.get<float>();
    c.error = r.get<float>();
    if (c.spectrum >= d.n_spectra || c.bin >= d.n_bins)
      throw DataError(fmt::format("delta entry ({}, {}) outside {}x{}", c.spectrum, c.bin,
                                  d.n_spectra, d.n_bins));
  }
  if (d.to_sequence < d.from_sequence)
    throw DataError("delta runs backwards");
  return d;
}

DataSet apply_delta(const DataSet &snapshot, const Delta &d) {
  if (snapshot.size() != d.n_spectra)
    throw DataError(fmt::format("delta is for {} spectra, snapshot has {}", d.n_spectra,
                                snapshot.size()));
  const auto *seq = find_attribute(snapshot.attributes(), "live_sequence");
  if (seq && as_number(*seq) != static_cast<double>(d.from_sequence))
    throw DataError(fmt::format("delta starts at sequence {} but snapshot is at {}",
                                d.from_sequence, tofbench::to_string(*seq)));
  std::vector<std::vector<float>> counts(d.n_spectra), errors(d.n_spectra);
  for (std::uint32_t i = 0; i < d.n_spectra; ++i) {
    const auto &s = snapshot.spectra()[i];
    if (s.xscale().bin_count() != d.n_bins)
      throw DataError(fmt::format("spectrum {} has {} bins, delta expects {}", s.id(),
                                  s.xscale().bin_count(), d.n_bins));
    counts[i].assign(s.counts().begin(), s.counts().end());
    errors[i].assign(s.errors().begin(), s.errors().end());
  }
  for (const auto &c : d.changes) {
    counts[c.spectrum][c.bin] = c.count;
    errors[c.spectrum][c.bin] = c.error;
  }
  std::vector<Spectrum> spectra;
  spectra.reserve(d.n_spectra);
  for (std::uint32_t i = 0; i < d.n_spectra; ++i) {
    const auto &s = snapshot.spectra()[i];
    spectra.push_back(s.with_data(s.xscale(), std::move(counts[i]), std::move(errors[i])));
  }
  Attributes attrs;
  for (const auto &a : snapshot.attributes())
    if (a.name != "live_sequence" && a.name != "elapsed_s")
      attrs.push_back(a);
  attrs.emplace_back("live_sequence", static_cast<std::int64_t>(d.to_sequence));
  attrs.emplace_back("elapsed_s", d.elapsed_s);
  return DataSet(snapshot.title(), snapshot.x_units(), snapshot.y_units(), std::move(spectra),
                 std::move(attrs));
}

} // namespace tofbench::net
