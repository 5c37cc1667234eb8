#include "ragtune/error.hpp"

namespace ragtune {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::FileNotFound: return "FileNotFound";
    case Errc::IoError: return "IoError";
    case Errc::MalformedRecord: return "MalformedRecord";
    case Errc::DuplicateId: return "DuplicateId";
    case Errc::EmptyCorpus: return "EmptyCorpus";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::NoQueriesFound: return "NoQueriesFound";
    case Errc::ClientError: return "ClientError";
    case Errc::AllFailed: return "AllFailed";
    case Errc::EmptyQuestion: return "EmptyQuestion";
    case Errc::CorpusTooSmall: return "CorpusTooSmall";
    case Errc::DanglingQueryReference: return "DanglingQueryReference";
    case Errc::InsufficientQueries: return "InsufficientQueries";
    case Errc::InvalidDims: return "InvalidDims";
    case Errc::UnsupportedVersion: return "UnsupportedVersion";
    case Errc::CorruptFile: return "CorruptFile";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::DegenerateText: return "DegenerateText";
    case Errc::FingerprintMismatch: return "FingerprintMismatch";
    case Errc::MissingJudgment: return "MissingJudgment";
    case Errc::ZeroIdealGain: return "ZeroIdealGain";
    case Errc::EmptyReference: return "EmptyReference";
    case Errc::EmptyText: return "EmptyText";
    case Errc::EmptyEvalSet: return "EmptyEvalSet";
    case Errc::IdSetMismatch: return "IdSetMismatch";
    case Errc::QueryAloneExceedsCap: return "QueryAloneExceedsCap";
    case Errc::GeneratorError: return "GeneratorError";
    case Errc::StageFailure: return "StageFailure";
  }
  return "Unknown";
}

namespace {

std::string compose(Errc code, const std::string& subject, const std::string& message) {
  std::string out(to_string(code));
  if (!subject.empty()) out += "(" + subject + ")";
  if (!message.empty()) out += ": " + message;
  return out;
}

}  // namespace

Error::Error(Errc code, std::string subject, const std::string& message)
    : std::runtime_error(compose(code, subject, message)),
      code_(code),
      subject_(std::move(subject)) {}

}  // namespace ragtune
