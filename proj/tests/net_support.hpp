#pragma once

// Random protocol messages and frame corruptions for codec tests.

#include "support.hpp"

#include "tofbench/protocol.hpp"

#include <random>

namespace testsupport {

using namespace tofbench::net;

inline Bytes random_bytes(std::mt19937_64 &rng, std::size_t max_len) {
  Bytes b(rng() % (max_len + 1));
  for (auto &x : b)
    x = static_cast<std::byte>(rng());
  return b;
}

inline io::RunFileDirectory random_directory(std::mt19937_64 &rng) {
  io::RunFileDirectory d;
  d.instrument = random_text(rng, 8);
  d.run_number = static_cast<std::uint32_t>(rng());
  d.start_time = static_cast<std::int64_t>(rng());
  const auto n = rng() % 4;
  for (std::size_t i = 0; i < n; ++i)
    d.entries.push_back({random_text(rng, 12), static_cast<io::DatasetKind>(rng() % 3),
                         static_cast<std::uint32_t>(rng() % 1000),
                         static_cast<std::uint32_t>(rng() % 1000), rng() % 100000,
                         rng() % 100000});
  return d;
}

inline Message random_message(std::mt19937_64 &rng) {
  auto ids = [&]() -> std::optional<std::vector<std::uint32_t>> {
    if (rng() % 2)
      return std::nullopt;
    std::vector<std::uint32_t> v(rng() % 6);
    for (auto &x : v)
      x = static_cast<std::uint32_t>(rng());
    return v;
  };
  switch (rng() % 14) {
  case 0:
    return Hello{static_cast<std::uint32_t>(rng() % 3), random_text(rng, 20)};
  case 1:
    return ListRunsRequest{};
  case 2: {
    RunList m;
    const auto n = rng() % 4;
    for (std::size_t i = 0; i < n; ++i)
      m.runs.push_back({static_cast<std::uint32_t>(rng()), random_text(rng, 6),
                        static_cast<std::int64_t>(rng()), random_text(rng, 12),
                        static_cast<std::uint32_t>(rng() % 9), rng()});
    return m;
  }
  case 3:
    return RunInfoRequest{static_cast<std::uint32_t>(rng())};
  case 4:
    return RunInfo{random_directory(rng)};
  case 5: {
    GetDataRequest m{static_cast<std::uint32_t>(rng()), {}};
    m.selection.dataset_indices = ids();
    m.selection.spectrum_ids = ids();
    if (rng() % 2)
      m.selection.bin_range = std::pair{static_cast<std::uint32_t>(rng() % 100),
                                        static_cast<std::uint32_t>(rng() % 100)};
    return m;
  }
  case 6:
  case 7:
    return Chunk{rng() % 2 ? MsgType::get_data : MsgType::delta, rng() % 2 == 0,
                 random_bytes(rng, 64)};
  case 8:
    return SubscribeRequest{rng(), rng() % 2 == 0};
  case 9:
    return StatusRequest{};
  case 10:
    return Status{rng(), static_cast<double>(rng() % 100000) / 7.0,
                  static_cast<double>(rng() % 1000000), rng() % 2 == 0};
  case 11:
    return ErrorReply{static_cast<ErrorCode>(1 + rng() % 9), random_text(rng, 30)};
  case 12:
    return Bye{};
  default: {
    Delta d{rng() % 100, 100 + rng() % 100, static_cast<double>(rng() % 1000),
            1 + static_cast<std::uint32_t>(rng() % 5),
            1 + static_cast<std::uint32_t>(rng() % 50), {}};
    const auto n = rng() % 10;
    for (std::size_t i = 0; i < n; ++i)
      d.changes.push_back({static_cast<std::uint32_t>(rng() % d.n_spectra),
                           static_cast<std::uint32_t>(rng() % d.n_bins),
                           static_cast<float>(rng() % 1000), static_cast<float>(rng() % 40)});
    return Chunk{MsgType::delta, false, encode_delta(d)};
  }
  }
}

/// Outcome of decoding one possibly corrupted buffer.
struct FuzzOutcome {
  bool ok = true;
  std::string problem;
};

/// Decodes a buffer the way a receiver would and checks that every outcome
/// is one of the legal ones: a frame whose payload either parses or is
/// rejected as malformed, a request for more bytes, or a header error whose
/// code matches the header.
inline FuzzOutcome check_decode(std::span<const std::byte> buf, Direction dir) {
  FuzzOutcome out;
  auto fail = [&](std::string why) {
    out.ok = false;
    out.problem = std::move(why);
  };
  try {
    const auto res = decode_frame(buf);
    std::uint32_t len = 0;
    std::uint8_t type = 0;
    if (buf.size() >= 5) {
      std::memcpy(&len, buf.data(), 4);
      type = static_cast<std::uint8_t>(buf[4]);
    }
    if (const auto *need = std::get_if<NeedMoreBytes>(&res)) {
      const std::size_t want = buf.size() < 5 ? 5 : 5 + std::size_t{len};
      if (want != buf.size() + need->n)
        fail("wrong NeedMoreBytes count");
    } else if (const auto *err = std::get_if<FrameError>(&res)) {
      if (len > max_frame_payload) {
        if (err->code != ErrorCode::length_overrun)
          fail("oversized length not reported as overrun");
      } else if (!is_known_type(type)) {
        if (err->code != ErrorCode::unknown_type)
          fail("bad type not reported as unknown");
      } else {
        fail("unexpected header error");
      }
    } else {
      const auto &d = std::get<Decoded>(res);
      if (d.consumed != 5 + std::size_t{len} || !is_known_type(type) ||
          len > max_frame_payload)
        fail("accepted a bad header");
      try {
        const auto m = from_frame(d.frame, dir);
        if (to_frame(m) != d.frame)
          fail("payload decoded to a different message");
      } catch (const ProtocolError &e) {
        if (e.code() != ErrorCode::malformed)
          fail("payload error with the wrong code");
      }
    }
  } catch (const std::exception &e) {
    fail(std::string("escaped exception: ") + e.what());
  }
  return out;
}

/// Applies one random corruption: byte flip, length-field damage,
/// truncation or appended garbage.
inline Bytes corrupt(std::mt19937_64 &rng, Bytes b) {
  switch (rng() % 4) {
  case 0:
    if (!b.empty())
      b[rng() % b.size()] ^= static_cast<std::byte>(1 + rng() % 255);
    break;
  case 1:
    b[rng() % 4] = static_cast<std::byte>(rng());
    break;
  case 2:
    b.resize(rng() % b.size());
    break;
  default: {
    const auto extra = random_bytes(rng, 16);
    b.insert(b.end(), extra.begin(), extra.end());
  }
  }
  return b;
}

} // namespace testsupport
