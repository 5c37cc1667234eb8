#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ragtune {

enum class Errc {
  FileNotFound,
  IoError,
  MalformedRecord,
  DuplicateId,
  EmptyCorpus,
  InvalidArgument,
  NoQueriesFound,
  ClientError,
  AllFailed,
  EmptyQuestion,
  CorpusTooSmall,
  DanglingQueryReference,
  InsufficientQueries,
  InvalidDims,
  UnsupportedVersion,
  CorruptFile,
  DimensionMismatch,
  DegenerateText,
  FingerprintMismatch,
  MissingJudgment,
  ZeroIdealGain,
  EmptyReference,
  EmptyText,
  EmptyEvalSet,
  IdSetMismatch,
  QueryAloneExceedsCap,
  GeneratorError,
  StageFailure,
};

std::string_view to_string(Errc code) noexcept;

/// Library-wide exception. `subject()` carries the offending id, line number,
/// stage name, or text, depending on the code.
class Error : public std::runtime_error {
 public:
  Error(Errc code, std::string subject, const std::string& message = {});

  Errc code() const noexcept { return code_; }
  const std::string& subject() const noexcept { return subject_; }

 private:
  Errc code_;
  std::string subject_;
};

}  // namespace ragtune
