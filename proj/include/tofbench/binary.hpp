#pragma once

// Little-endian byte buffers shared by the run-file format and the wire
// protocol.

#include "tofbench/error.hpp"

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace tofbench {

static_assert(std::endian::native == std::endian::little,
              "binary codecs assume a little-endian host");

using Bytes = std::vector<std::byte>;

class ByteWriter {
public:
  template <class T>
    requires std::is_arithmetic_v<T>
  void put(T v) {
    const auto at = buf_.size();
    buf_.resize(at + sizeof(T));
    std::memcpy(buf_.data() + at, &v, sizeof(T));
  }

  /// u16 length followed by UTF-8 bytes.
  void put_string(std::string_view s);

  template <class T>
    requires std::is_arithmetic_v<T>
  void put_array(std::span<const T> v) {
    const auto at = buf_.size();
    buf_.resize(at + v.size_bytes());
    if (!v.empty())
      std::memcpy(buf_.data() + at, v.data(), v.size_bytes());
  }

  void put_bytes(std::span<const std::byte> b) {
    buf_.insert(buf_.end(), b.begin(), b.end());
  }

  void pad_to(std::size_t alignment) {
    while (buf_.size() % alignment)
      buf_.push_back(std::byte{0});
  }

  std::size_t size() const noexcept { return buf_.size(); }
  const Bytes &bytes() const noexcept { return buf_; }
  Bytes take() { return std::move(buf_); }

private:
  Bytes buf_;
};

/// Raised when a decoder runs past the end of its input.
class TruncatedError : public DataError {
public:
  TruncatedError(std::uint64_t offset, std::uint64_t wanted)
      : DataError("truncated input: needed " + std::to_string(wanted) +
                  " bytes at byte offset " + std::to_string(offset)),
        offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

private:
  std::uint64_t offset_;
};

/// Bounds-checked reader over an in-memory buffer.
class ByteReader {
public:
  explicit ByteReader(std::span<const std::byte> data,
                      std::uint64_t base_offset = 0)
      : data_(data), base_(base_offset) {}

  void read(void *dst, std::size_t n) {
    need(n);
    if (n)
      std::memcpy(dst, data_.data() + pos_, n);
    pos_ += n;
  }

  void skip(std::uint64_t n) {
    need(n);
    pos_ += n;
  }

  template <class T>
    requires std::is_arithmetic_v<T>
  T get() {
    T v;
    read(&v, sizeof(T));
    return v;
  }

  std::string get_string() {
    const auto n = get<std::uint16_t>();
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }

  std::uint64_t tell() const noexcept { return base_ + pos_; }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }

private:
  void need(std::uint64_t n) const {
    if (n > data_.size() - pos_)
      throw TruncatedError(base_ + pos_, n);
  }

  std::span<const std::byte> data_;
  std::uint64_t base_;
  std::size_t pos_ = 0;
};

} // namespace tofbench
