#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tofbench {

std::string base64_encode(std::span<const std::byte> data);
/// nullopt when the text is not canonical padded base64.
std::optional<std::vector<std::byte>> base64_decode(std::string_view text);

} // namespace tofbench
