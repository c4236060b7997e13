#include "commdyn/error.hpp"

namespace commdyn {

std::string_view code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidParams: return "invalid-params";
    case ErrorCode::InvalidPair: return "invalid-pair";
    case ErrorCode::InvalidInterval: return "invalid-interval";
    case ErrorCode::ParseError: return "parse-error";
    case ErrorCode::IoError: return "io-error";
    case ErrorCode::EmptyEpisode: return "empty-episode";
    case ErrorCode::MissingFeatures: return "missing-features";
    case ErrorCode::EmptyTraining: return "empty-training";
    case ErrorCode::NeedsBothClasses: return "needs-both-classes";
    case ErrorCode::EmptyCombination: return "empty-combination";
    case ErrorCode::ModelFormat: return "model-format";
  }
  return "unknown";
}

}  // namespace commdyn
