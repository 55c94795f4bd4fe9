#include "msta/error.h"

namespace msta {

std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDimension: return "dimension";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kIndex: return "index";
    case ErrorKind::kDegenerate: return "degenerate";
    case ErrorKind::kVocabulary: return "vocabulary";
    case ErrorKind::kState: return "state";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kTransport: return "transport";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kUsage: return "usage";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage:
    case ErrorKind::kConfig:
      return 2;
    case ErrorKind::kNumeric:
    case ErrorKind::kDegenerate:
      return 4;
    default:
      return 3;
  }
}

void raise(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace msta
