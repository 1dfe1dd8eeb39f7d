#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fdnet {

enum class ErrorCode {
  DuplicateWorkerPeriod,
  MissingColumn,
  NonNumericField,
  MalformedRow,
  DimensionMismatch,
  NonFinite,
  TraceNotInteger,
  RankDeficient,
  SingularDesign,
  ZeroDegreesOfFreedom,
  CapExceeded,
  UnknownCase,
  NoInformativeBlocks,
  NonConvergence,
  NoMoverBlocks,
  InfeasibleConfig,
  InvalidArgument,
  Unsupported,
};

std::string_view to_string(ErrorCode code);

// Domain error carrying a machine-readable code. The CLI maps these to exit
// status 1; everything else that escapes is a bug.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace fdnet
