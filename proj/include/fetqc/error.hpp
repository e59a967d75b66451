#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fetqc {

enum class ErrorCode {
  // ingestion
  MalformedHeader,
  UnsupportedDatatype,
  DimensionError,
  NotBids,
  DuplicateStackId,
  UnknownSplit,
  MissingFile,
  ParseError,
  // metric failures, turned into NaN flags by the extraction pipeline
  TooFewSlices,
  DegeneratePair,
  EmptyRegion,
  EmptyMask,
  SingularFit,
  ZeroVariance,
  AllZeroStd,
  EqualMeans,
  ConstantImage,
  UnmappedLabel,
  // pipeline / model
  ConfigConflict,
  AlignmentError,
  FeatureMismatch,
  TooFewFeatures,
  InvalidArgument,
  // evaluation
  TooFewGroups,
  ScopeEmpty,
  NoOverlap,
  SingleClassAUC,
  InfeasibleCell,
  // report service
  RenderError,
  AddressInUse,
  CorruptRatings,
  ValidationError,
  UnknownStackId,
  Io,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace fetqc
