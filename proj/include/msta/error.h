#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace msta {

enum class ErrorKind {
  kDimension,
  kConfig,
  kIndex,
  kDegenerate,
  kVocabulary,
  kState,
  kFormat,
  kTransport,
  kNumeric,
  kUsage,
  kIo,
};

std::string_view error_kind_name(ErrorKind kind);

// Exit code contract of the command-line tool: 2 usage, 3 data/format, 4 numeric.
int exit_code_for(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void raise(ErrorKind kind, const std::string& message);

}  // namespace msta
