#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mediqa {

/// Base class for every error raised by the library. `kind()` is a short
/// stable token used by the CLI for machine-parsable error lines.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define MEDIQA_DEFINE_ERROR(Name, token)                              \
  class Name : public Error {                                         \
   public:                                                            \
    explicit Name(const std::string& what) : Error(token, what) {}    \
  };

MEDIQA_DEFINE_ERROR(DimensionError, "dimension")
MEDIQA_DEFINE_ERROR(ContractError, "contract")
MEDIQA_DEFINE_ERROR(NumericError, "numeric")
MEDIQA_DEFINE_ERROR(EvaluationError, "evaluation")
MEDIQA_DEFINE_ERROR(VocabularyError, "vocabulary")
MEDIQA_DEFINE_ERROR(ConfigError, "config")
MEDIQA_DEFINE_ERROR(IoError, "io")
MEDIQA_DEFINE_ERROR(CorruptCheckpointError, "corrupt-checkpoint")
MEDIQA_DEFINE_ERROR(NotDicomError, "not-dicom")
MEDIQA_DEFINE_ERROR(UnsupportedSyntaxError, "unsupported-syntax")
MEDIQA_DEFINE_ERROR(UnusableSampleError, "unusable-sample")
MEDIQA_DEFINE_ERROR(DegenerateRangeError, "degenerate-range")
MEDIQA_DEFINE_ERROR(UndefinedCorrelationError, "undefined-correlation")
MEDIQA_DEFINE_ERROR(UsageError, "usage")

#undef MEDIQA_DEFINE_ERROR

/// Malformed DICOM stream; carries the byte offset where parsing failed.
class DicomParseError : public Error {
 public:
  DicomParseError(std::size_t offset, const std::string& what)
      : Error("dicom-parse", what + " at byte offset " + std::to_string(offset)),
        offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace mediqa
