#pragma once

#include <stdexcept>
#include <string>

namespace tofbench {

/// Broad failure categories. The CLI maps them onto stable exit codes.
enum class ErrorKind { usage = 1, data = 2, io = 3, network = 4 };

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string &what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

/// Malformed values, failed preconditions of an operation.
class DataError : public Error {
public:
  explicit DataError(const std::string &what) : Error(ErrorKind::data, what) {}
};

class IoError : public Error {
public:
  explicit IoError(const std::string &what) : Error(ErrorKind::io, what) {}
};

class NetworkError : public Error {
public:
  explicit NetworkError(const std::string &what)
      : Error(ErrorKind::network, what) {}
};

class UsageError : public Error {
public:
  explicit UsageError(const std::string &what)
      : Error(ErrorKind::usage, what) {}
};

} // namespace tofbench
