#include "pimoe/error.hpp"

namespace pimoe {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidDataset: return "InvalidDataset";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::MalformedCycle: return "MalformedCycle";
    case ErrorCode::InsufficientRelaxation: return "InsufficientRelaxation";
    case ErrorCode::HorizonTooLong: return "HorizonTooLong";
    case ErrorCode::NotFitted: return "NotFitted";
    case ErrorCode::ShapeError: return "ShapeError";
    case ErrorCode::GraphError: return "GraphError";
    case ErrorCode::ModelContractError: return "ModelContractError";
    case ErrorCode::TrainingDiverged: return "TrainingDiverged";
    case ErrorCode::IncompatibleCheckpoint: return "IncompatibleCheckpoint";
    case ErrorCode::ChecksumError: return "ChecksumError";
    case ErrorCode::Underdetermined: return "Underdetermined";
    case ErrorCode::CalibrationAmbiguous: return "CalibrationAmbiguous";
    case ErrorCode::IngestError: return "IngestError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace pimoe
