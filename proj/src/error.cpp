#include "fetqc/error.hpp"

namespace fetqc {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::UnsupportedDatatype: return "UnsupportedDatatype";
    case ErrorCode::DimensionError: return "DimensionError";
    case ErrorCode::NotBids: return "NotBids";
    case ErrorCode::DuplicateStackId: return "DuplicateStackId";
    case ErrorCode::UnknownSplit: return "UnknownSplit";
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::TooFewSlices: return "TooFewSlices";
    case ErrorCode::DegeneratePair: return "DegeneratePair";
    case ErrorCode::EmptyRegion: return "EmptyRegion";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::SingularFit: return "SingularFit";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::AllZeroStd: return "AllZeroStd";
    case ErrorCode::EqualMeans: return "EqualMeans";
    case ErrorCode::ConstantImage: return "ConstantImage";
    case ErrorCode::UnmappedLabel: return "UnmappedLabel";
    case ErrorCode::ConfigConflict: return "ConfigConflict";
    case ErrorCode::AlignmentError: return "AlignmentError";
    case ErrorCode::FeatureMismatch: return "FeatureMismatch";
    case ErrorCode::TooFewFeatures: return "TooFewFeatures";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::TooFewGroups: return "TooFewGroups";
    case ErrorCode::ScopeEmpty: return "ScopeEmpty";
    case ErrorCode::NoOverlap: return "NoOverlap";
    case ErrorCode::SingleClassAUC: return "SingleClassAUC";
    case ErrorCode::InfeasibleCell: return "InfeasibleCell";
    case ErrorCode::RenderError: return "RenderError";
    case ErrorCode::AddressInUse: return "AddressInUse";
    case ErrorCode::CorruptRatings: return "CorruptRatings";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::UnknownStackId: return "UnknownStackId";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace fetqc
