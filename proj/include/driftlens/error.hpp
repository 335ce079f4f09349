#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace driftlens {

// Stable error taxonomy. The numeric values are mirrored by dl_status in
// driftlens.h and must not be reordered.
enum class ErrorCode : int {
  kOk = 0,
  kInvalidArgument = 1,
  kIo = 2,
  kMissingColumn = 3,
  kNonNumericCell = 4,
  kEmptyDataset = 5,
  kConstantTime = 6,
  kDegenerateSplit = 7,
  kTooFewSamples = 8,
  kSingleClass = 9,
  kDimensionMismatch = 10,
  kWrongModelKind = 11,
  kDomainError = 12,
  kDisconnectedGraph = 13,
  kEmptyGroup = 14,
  kKTooLarge = 15,
  kSingularFit = 16,
  kNoTargetSamples = 17,
  kEmptyReservoir = 18,
  kUnknownKind = 19,
  kTooManyFeatures = 20,
  kCyclicGraph = 21,
  kIndexOutOfRange = 22,
  kSingleClassTruth = 23,
  kMismatchedDataset = 24,
  kParse = 25,
  kPartialFailure = 26,
  kInternal = 27,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace driftlens
