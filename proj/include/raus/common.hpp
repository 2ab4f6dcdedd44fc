#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace raus {

// Category index used for a missing cell.
inline constexpr int kMissing = -1;

enum class ErrorCode {
  kParse,
  kSchema,
  kDegenerateVariable,
  kStratumTooSmall,
  kEmptyStratum,
  kEmptyInput,
  kNoRankableVariables,
  kParentSpaceTooLarge,
  kInvalidStructure,
  kInconsistentEvidence,
  kTreewidthTooLarge,
  kHorizonExceeded,
  kOracleTooLarge,
  kUndefinedMetric,
  kUnstableBootstrap,
  kConvergenceFailure,
  kLayout,
  kIo,
  kConfig,
  kInvalidArgument,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        message_(message) {}

  ErrorCode code() const noexcept { return code_; }
  // The text without the code prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

}  // namespace raus
