#include "parkcast/error.hpp"

namespace parkcast {

std::string_view to_string(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::OccupancyOutOfBounds: return "OccupancyOutOfBounds";
    case ErrorCode::EmptyGrid: return "EmptyGrid";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::TooFewRows: return "TooFewRows";
    case ErrorCode::FileUnreadable: return "FileUnreadable";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InvalidCutoff: return "InvalidCutoff";
    case ErrorCode::IncompleteRow: return "IncompleteRow";
    case ErrorCode::EmptyResult: return "EmptyResult";
    case ErrorCode::UnknownCategory: return "UnknownCategory";
    case ErrorCode::NoFeatures: return "NoFeatures";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::Divergence: return "Divergence";
    case ErrorCode::InsufficientHistory: return "InsufficientHistory";
    case ErrorCode::DigestMismatch: return "DigestMismatch";
    case ErrorCode::CorruptArtifact: return "CorruptArtifact";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::NaiveZero: return "NaiveZero";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::WindowUncovered: return "WindowUncovered";
    case ErrorCode::StaleFeed: return "StaleFeed";
    case ErrorCode::IncompleteState: return "IncompleteState";
    case ErrorCode::CoverageGap: return "CoverageGap";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    }
    return "Unknown";
}

}  // namespace parkcast
