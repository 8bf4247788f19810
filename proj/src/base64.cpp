#include "tofbench/base64.hpp"

#include <boost/beast/core/detail/base64.hpp>

namespace tofbench {

namespace b64 = boost::beast::detail::base64;

std::string base64_encode(std::span<const std::byte> data) {
  std::string out(b64::encoded_size(data.size()), '\0');
  out.resize(b64::encode(out.data(), data.data(), data.size()));
  return out;
}

std::optional<std::vector<std::byte>> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0)
    return std::nullopt;
  std::vector<std::byte> out(b64::decoded_size(text.size()));
  auto [written, consumed] = b64::decode(out.data(), text.data(), text.size());
  out.resize(written);
  // The decoder stops silently at the first invalid character; requiring
  // the canonical re-encoding rejects that case.
  if (base64_encode(out) != text)
    return std::nullopt;
  return out;
}

} // namespace tofbench
