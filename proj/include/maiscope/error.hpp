#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace maiscope {

// Stable numeric values; mirrored by ms_status in maiscope.h.
enum class ErrorCode : int {
  kOk = 0,
  kInvalidArgument = 1,
  kMalformedHeader = 2,
  kTruncatedPayload = 3,
  kUnsupportedBitDepth = 4,
  kEmptyCrop = 5,
  kWrongInputSize = 6,
  kBackendUnavailable = 7,
  kZeroAreaBox = 8,
  kSchemaError = 9,
  kUnknownClassName = 10,
  kInvertedBox = 11,
  kEmptyDataset = 12,
  kBadFractions = 13,
  kPlacementOverflow = 14,
  kNoGroundTruth = 15,
  kKeyMismatch = 16,
  kLengthMismatch = 17,
  kEmptySet = 18,
  kStorageFull = 19,
  kIoFailure = 20,
  kNotFound = 21,
  kEndpointUnreachable = 22,
  kEndOfFrames = 23,
  kPortInUse = 24,
  kBadConfig = 25,
  kEmptySlide = 26,
  kOracleMiss = 27,
  kInvalidTransition = 28,
  kInternal = 99,
};

std::string_view error_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace maiscope
