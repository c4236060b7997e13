#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace commdyn {

enum class ErrorCode {
  InvalidParams,
  InvalidPair,
  InvalidInterval,
  ParseError,
  IoError,
  EmptyEpisode,
  MissingFeatures,
  EmptyTraining,
  NeedsBothClasses,
  EmptyCombination,
  ModelFormat,
};

/// Machine-readable name of an error code, e.g. "needs-both-classes".
std::string_view code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace commdyn
