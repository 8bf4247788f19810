#pragma once

// Framed binary protocol shared by the file and live data servers.
//
// Every message is a frame: u32 LE payload length, u8 message type, payload.
// Requests and replies reuse the same type codes, so decoding a payload
// needs to know which way the frame travelled.

#include "tofbench/binary.hpp"
#include "tofbench/retrievers.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace tofbench::net {

inline constexpr std::uint32_t protocol_version = 1;
inline constexpr std::size_t frame_header_bytes = 5;
inline constexpr std::uint32_t max_frame_payload = 64u << 20;

enum class MsgType : std::uint8_t {
  hello = 0,
  list_runs = 1,
  run_info = 2,
  get_data = 3,
  subscribe = 4,
  delta = 5,
  status = 6,
  error = 7,
  bye = 8,
};

bool is_known_type(std::uint8_t t);
std::string_view to_string(MsgType t);

/// Codes carried by ERROR frames.
enum class ErrorCode : std::uint16_t {
  unknown_type = 1,
  length_overrun = 2,
  truncated = 3,
  malformed = 4,
  not_found = 5,
  version_mismatch = 6,
  bad_request = 7,
  unsupported = 8,
  internal = 9,
};

std::string_view to_string(ErrorCode c);

struct Frame {
  MsgType type;
  Bytes payload;

  bool operator==(const Frame &) const = default;
};

Bytes encode_frame(const Frame &f);

/// Stream decoding outcome: a whole frame, a request for more input, or a
/// protocol violation.
struct Decoded {
  Frame frame;
  std::size_t consumed;
};
struct NeedMoreBytes {
  std::size_t n;
};
struct FrameError {
  ErrorCode code;
  std::string message;
};
using DecodeResult = std::variant<Decoded, NeedMoreBytes, FrameError>;

/// Decodes the first frame in buf. Unknown types and oversized lengths are
/// reported from the header alone, before any payload is buffered.
DecodeResult decode_frame(std::span<const std::byte> buf);

// Messages.

enum class Direction { to_server, to_client };

struct Hello {
  std::uint32_t version = protocol_version;
  std::string name;
  bool operator==(const Hello &) const = default;
};
struct ListRunsRequest {
  bool operator==(const ListRunsRequest &) const = default;
};
struct RunSummary {
  std::uint32_t run_number = 0;
  std::string instrument;
  std::int64_t start_time = 0;
  std::string file_name;
  std::uint32_t n_datasets = 0;
  std::uint64_t file_bytes = 0;
  bool operator==(const RunSummary &) const = default;
};
struct RunList {
  std::vector<RunSummary> runs;
  bool operator==(const RunList &) const = default;
};
struct RunInfoRequest {
  std::uint32_t run = 0;
  bool operator==(const RunInfoRequest &) const = default;
};
struct RunInfo {
  io::RunFileDirectory directory;
  bool operator==(const RunInfo &) const = default;
};
struct GetDataRequest {
  std::uint32_t run = 0;
  io::LoadSelection selection;
  bool operator==(const GetDataRequest &other) const;
};
/// Piece of a reply body that may span several frames; `more` is set on
/// every piece but the last. Used by GET_DATA and DELTA replies.
struct Chunk {
  MsgType type;
  bool more = false;
  Bytes body;
  bool operator==(const Chunk &) const = default;
};
struct SubscribeRequest {
  std::uint64_t since_sequence = 0;
  /// Keep pushing deltas as the state advances, until BYE.
  bool follow = false;
  bool operator==(const SubscribeRequest &) const = default;
};
struct StatusRequest {
  bool operator==(const StatusRequest &) const = default;
};
struct Status {
  std::uint64_t sequence = 0;
  double elapsed_s = 0;
  double total_counts = 0;
  bool paused = false;
  bool operator==(const Status &) const = default;
};
struct ErrorReply {
  ErrorCode code = ErrorCode::internal;
  std::string message;
  bool operator==(const ErrorReply &) const = default;
};
struct Bye {
  bool operator==(const Bye &) const = default;
};

using Message =
    std::variant<Hello, ListRunsRequest, RunList, RunInfoRequest, RunInfo,
                 GetDataRequest, Chunk, SubscribeRequest, StatusRequest, Status,
                 ErrorReply, Bye>;

MsgType message_type(const Message &m);
Direction message_direction(const Message &m);

Frame to_frame(const Message &m);
/// Throws ProtocolError(malformed) when the payload does not parse.
Message from_frame(const Frame &f, Direction dir);

class ProtocolError : public NetworkError {
public:
  ProtocolError(ErrorCode code, const std::string &what)
      : NetworkError(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

/// Splits a body into chunk messages of at most max_body bytes each.
std::vector<Chunk> split_body(MsgType type, const Bytes &body,
                              std::size_t max_body);

// Live-data deltas.

struct BinChange {
  std::uint32_t spectrum = 0; // index within the dataset
  std::uint32_t bin = 0;
  float count = 0;
  float error = 0;
  bool operator==(const BinChange &) const = default;
};

struct Delta {
  std::uint64_t from_sequence = 0;
  std::uint64_t to_sequence = 0;
  double elapsed_s = 0;
  std::uint32_t n_spectra = 0;
  std::uint32_t n_bins = 0;
  std::vector<BinChange> changes;
  bool operator==(const Delta &) const = default;
};

Bytes encode_delta(const Delta &d);
Delta decode_delta(std::span<const std::byte> body);

/// Overwrites the changed bins of a live snapshot and stamps the new
/// sequence and elapsed time.
DataSet apply_delta(const DataSet &snapshot, const Delta &d);

} // namespace tofbench::net
