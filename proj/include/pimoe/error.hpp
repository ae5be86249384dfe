#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pimoe {

enum class ErrorCode {
  InvalidArgument,
  InvalidDataset,
  InsufficientData,
  OutOfRange,
  MalformedCycle,
  InsufficientRelaxation,
  HorizonTooLong,
  NotFitted,
  ShapeError,
  GraphError,
  ModelContractError,
  TrainingDiverged,
  IncompatibleCheckpoint,
  ChecksumError,
  Underdetermined,
  CalibrationAmbiguous,
  IngestError,
  ConfigError,
  IoError,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI exit-code mapping) can branch without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace pimoe
