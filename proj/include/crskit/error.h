#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace crskit {

// Error kinds raised across the toolkit. Each maps to one failure named in the
// module contracts, so callers (and the HTTP layer) can branch on code().
enum class ErrorCode {
  // protocol
  kEmptyDialog,
  kBadRole,
  kUnbalancedEntityTag,
  kNestedEntityTag,
  kEmptyEntity,
  kReservedToken,
  // tokenization
  kUnknownSubTokenizer,
  kIdOutOfRange,
  // artifacts and weights
  kIoError,
  kNotFound,
  kDigestMismatch,
  kUnknownModuleType,
  kManifestInvalid,
  kAuthError,
  kTransportError,
  kBadMagic,
  kUnsupportedVersion,
  kTruncatedFile,
  kMalformedWeights,
  // modules
  kNoUserTurn,
  kShapeMismatch,
  kEmptyBatch,
  kDivergenceDetected,
  kInvalidArgument,
  kInvalidTemplate,
  kMissingApiKey,
  kRemoteError,
  kCancelled,
  // pipelines / monitor
  kInsufficientRecommendations,
  kInvalidConfig,
  kMalformedTrace,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const { return code_; }

  // Name of the module that raised the error, set by the pipeline on the way
  // out. Empty otherwise.
  const std::string& module() const { return module_; }
  void set_module(std::string module) { module_ = std::move(module); }

 private:
  ErrorCode code_;
  std::string module_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace crskit
