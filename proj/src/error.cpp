#include "maiscope/error.hpp"

namespace maiscope {

std::string_view error_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kOk: return "Ok";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kMalformedHeader: return "MalformedHeader";
    case ErrorCode::kTruncatedPayload: return "TruncatedPayload";
    case ErrorCode::kUnsupportedBitDepth: return "UnsupportedBitDepth";
    case ErrorCode::kEmptyCrop: return "EmptyCrop";
    case ErrorCode::kWrongInputSize: return "WrongInputSize";
    case ErrorCode::kBackendUnavailable: return "BackendUnavailable";
    case ErrorCode::kZeroAreaBox: return "ZeroAreaBox";
    case ErrorCode::kSchemaError: return "SchemaError";
    case ErrorCode::kUnknownClassName: return "UnknownClassName";
    case ErrorCode::kInvertedBox: return "InvertedBox";
    case ErrorCode::kEmptyDataset: return "EmptyDataset";
    case ErrorCode::kBadFractions: return "BadFractions";
    case ErrorCode::kPlacementOverflow: return "PlacementOverflow";
    case ErrorCode::kNoGroundTruth: return "NoGroundTruth";
    case ErrorCode::kKeyMismatch: return "KeyMismatch";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kEmptySet: return "EmptySet";
    case ErrorCode::kStorageFull: return "StorageFull";
    case ErrorCode::kIoFailure: return "IoFailure";
    case ErrorCode::kNotFound: return "NotFound";
    case ErrorCode::kEndpointUnreachable: return "EndpointUnreachable";
    case ErrorCode::kEndOfFrames: return "EndOfFrames";
    case ErrorCode::kPortInUse: return "PortInUse";
    case ErrorCode::kBadConfig: return "BadConfig";
    case ErrorCode::kEmptySlide: return "EmptySlide";
    case ErrorCode::kOracleMiss: return "OracleMiss";
    case ErrorCode::kInvalidTransition: return "InvalidTransition";
    case ErrorCode::kInternal: return "Internal";
  }
  return "Unknown";
}

}  // namespace maiscope
