#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace evsynth {

/// Every failure surfaced by the library carries one of these codes so that
/// callers (the HTTP service in particular) can map errors without string
/// matching.
enum class ErrorCode {
    InvalidArgument,
    // corpus
    MissingTitle,
    InvalidYear,
    NoFullText,
    StoreUnavailable,
    // stores
    UnknownDocument,
    DimensionMismatch,
    UnknownNode,
    DanglingEdge,
    UnknownField,
    SnapshotGone,
    // provider
    ProviderUnavailable,
    EmptyContextForFactualTask,
    // screen
    EmptyTrainingSet,
    UntrainedModel,
    MissingDimension,
    // retrieve
    EmptyCandidates,
    // agent
    NoApplicableTool,
    ToolFailure,
    DisciplineViolation,
    EmptyEvidence,
    UngroundableOutput,
    UnknownSession,
    // structq
    Unresolvable,
    InvalidQuery,
    // topics
    TooFewDocuments,
    UnfittedModel,
    MissingYear,
    UnknownTopic,
    // eval
    EmptyCounts,
    LengthMismatch,
    EmptyQuerySet,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace evsynth
