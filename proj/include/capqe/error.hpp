#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace capqe {

enum class ErrorKind {
  InvalidArgument,
  DimensionMismatch,
  NonFiniteValue,
  ParseError,
  MalformedRecord,
  DuplicateKey,
  IoError,
  TooFewImages,
  VersionMismatch,
  CorruptCheckpoint,
  NoOverlap,
  LengthMismatch,
  ShapeMismatch,
  MissingTarget,
  InvalidTarget,
  EmptyDataset,
  NonFiniteLoss,
  NonFiniteIntermediate,
  NonSquare,
  ConstantVector,
  KeyMismatch,
  NoPositives,
  TooFewPoints,
  NoQualifyingPoint,
};

constexpr std::string_view to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NonFiniteValue: return "NonFiniteValue";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::MalformedRecord: return "MalformedRecord";
    case ErrorKind::DuplicateKey: return "DuplicateKey";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::TooFewImages: return "TooFewImages";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
    case ErrorKind::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorKind::NoOverlap: return "NoOverlap";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::MissingTarget: return "MissingTarget";
    case ErrorKind::InvalidTarget: return "InvalidTarget";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::NonFiniteIntermediate: return "NonFiniteIntermediate";
    case ErrorKind::NonSquare: return "NonSquare";
    case ErrorKind::ConstantVector: return "ConstantVector";
    case ErrorKind::KeyMismatch: return "KeyMismatch";
    case ErrorKind::NoPositives: return "NoPositives";
    case ErrorKind::TooFewPoints: return "TooFewPoints";
    case ErrorKind::NoQualifyingPoint: return "NoQualifyingPoint";
  }
  return "Unknown";
}

// Every failure the library reports carries a machine-checkable kind; the
// message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), message_(what) {}

  ErrorKind kind() const noexcept { return kind_; }
  // The message without the kind prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorKind kind_;
  std::string message_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace capqe
