#include "crskit/error.h"

namespace crskit {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kEmptyDialog: return "EmptyDialog";
    case ErrorCode::kBadRole: return "BadRole";
    case ErrorCode::kUnbalancedEntityTag: return "UnbalancedEntityTag";
    case ErrorCode::kNestedEntityTag: return "NestedEntityTag";
    case ErrorCode::kEmptyEntity: return "EmptyEntity";
    case ErrorCode::kReservedToken: return "ReservedToken";
    case ErrorCode::kUnknownSubTokenizer: return "UnknownSubTokenizer";
    case ErrorCode::kIdOutOfRange: return "IdOutOfRange";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kNotFound: return "NotFound";
    case ErrorCode::kDigestMismatch: return "DigestMismatch";
    case ErrorCode::kUnknownModuleType: return "UnknownModuleType";
    case ErrorCode::kManifestInvalid: return "ManifestInvalid";
    case ErrorCode::kAuthError: return "AuthError";
    case ErrorCode::kTransportError: return "TransportError";
    case ErrorCode::kBadMagic: return "BadMagic";
    case ErrorCode::kUnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::kTruncatedFile: return "TruncatedFile";
    case ErrorCode::kMalformedWeights: return "MalformedWeights";
    case ErrorCode::kNoUserTurn: return "NoUserTurn";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kEmptyBatch: return "EmptyBatch";
    case ErrorCode::kDivergenceDetected: return "DivergenceDetected";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kInvalidTemplate: return "InvalidTemplate";
    case ErrorCode::kMissingApiKey: return "MissingApiKey";
    case ErrorCode::kRemoteError: return "RemoteError";
    case ErrorCode::kCancelled: return "Cancelled";
    case ErrorCode::kInsufficientRecommendations: return "InsufficientRecommendations";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kMalformedTrace: return "MalformedTrace";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message),
      code_(code) {}

void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace crskit
