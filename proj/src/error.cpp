#include "fdnet/error.hpp"

namespace fdnet {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DuplicateWorkerPeriod: return "DuplicateWorkerPeriod";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::NonNumericField: return "NonNumericField";
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::TraceNotInteger: return "TraceNotInteger";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::SingularDesign: return "SingularDesign";
    case ErrorCode::ZeroDegreesOfFreedom: return "ZeroDegreesOfFreedom";
    case ErrorCode::CapExceeded: return "CapExceeded";
    case ErrorCode::UnknownCase: return "UnknownCase";
    case ErrorCode::NoInformativeBlocks: return "NoInformativeBlocks";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::NoMoverBlocks: return "NoMoverBlocks";
    case ErrorCode::InfeasibleConfig: return "InfeasibleConfig";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Unsupported: return "Unsupported";
  }
  return "Unknown";
}

}  // namespace fdnet
