#pragma once

#include <stdexcept>
#include <string>

namespace skillloop {

enum class ErrorCode {
    StoreUnavailable,
    SkillNotFound,
    MalformedSkill,
    DimensionMismatch,
    InvalidUserId,
    ConfirmationRequired,
    CompressionFailed,
    ProviderError,
    SubAgentConfigError,
    IllegalPhase,
    SuggestionNotFound,
    SessionNotFound,
    TurnNotFound,
    TurnWithoutSkill,
    ReplayError,
    InvalidArgument,
    UserNotFound,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace skillloop
