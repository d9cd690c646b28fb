#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace vat {

// Exit codes shared by every command-line entry point.
enum class ErrorKind : int {
  kInput = 2,       // malformed input or failed validation
  kUpstream = 3,    // model endpoint / network failure
  kDegenerate = 4,  // degenerate result promoted to an error in strict mode
};

/// Base error carrying the module that raised it and the exit class.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string module, const std::string& message)
      : std::runtime_error(message), kind_(kind), module_(std::move(module)) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }
  const std::string& module() const noexcept { return module_; }

 private:
  ErrorKind kind_;
  std::string module_;
};

class InputError : public Error {
 public:
  InputError(std::string module, const std::string& message)
      : Error(ErrorKind::kInput, std::move(module), message) {}
};

class UpstreamError : public Error {
 public:
  UpstreamError(std::string module, const std::string& message)
      : Error(ErrorKind::kUpstream, std::move(module), message) {}
};

class DegenerateError : public Error {
 public:
  DegenerateError(std::string module, const std::string& message)
      : Error(ErrorKind::kDegenerate, std::move(module), message) {}
};

}  // namespace vat
