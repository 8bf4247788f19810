#pragma once

#include <fmt/format.h>

#include <filesystem>
#include <string>

template <>
struct fmt::formatter<std::filesystem::path> : fmt::formatter<std::string> {
  template <class Ctx>
  auto format(const std::filesystem::path &p, Ctx &ctx) const {
    return fmt::formatter<std::string>::format(p.string(), ctx);
  }
};
