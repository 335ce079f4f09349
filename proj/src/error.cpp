#include "driftlens/error.hpp"

namespace driftlens {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kOk: return "Ok";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kIo: return "Io";
    case ErrorCode::kMissingColumn: return "MissingColumn";
    case ErrorCode::kNonNumericCell: return "NonNumericCell";
    case ErrorCode::kEmptyDataset: return "EmptyDataset";
    case ErrorCode::kConstantTime: return "ConstantTime";
    case ErrorCode::kDegenerateSplit: return "DegenerateSplit";
    case ErrorCode::kTooFewSamples: return "TooFewSamples";
    case ErrorCode::kSingleClass: return "SingleClass";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kWrongModelKind: return "WrongModelKind";
    case ErrorCode::kDomainError: return "DomainError";
    case ErrorCode::kDisconnectedGraph: return "DisconnectedGraph";
    case ErrorCode::kEmptyGroup: return "EmptyGroup";
    case ErrorCode::kKTooLarge: return "KTooLarge";
    case ErrorCode::kSingularFit: return "SingularFit";
    case ErrorCode::kNoTargetSamples: return "NoTargetSamples";
    case ErrorCode::kEmptyReservoir: return "EmptyReservoir";
    case ErrorCode::kUnknownKind: return "UnknownKind";
    case ErrorCode::kTooManyFeatures: return "TooManyFeatures";
    case ErrorCode::kCyclicGraph: return "CyclicGraph";
    case ErrorCode::kIndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::kSingleClassTruth: return "SingleClassTruth";
    case ErrorCode::kMismatchedDataset: return "MismatchedDataset";
    case ErrorCode::kParse: return "Parse";
    case ErrorCode::kPartialFailure: return "PartialFailure";
    case ErrorCode::kInternal: return "Internal";
  }
  return "Unknown";
}

}  // namespace driftlens
