#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fiscalrag {

enum class ErrorCode {
    // ingest
    NotFound,
    Undecodable,
    EmptyDocument,
    UnsupportedFormat,
    NotADirectory,
    InvalidParams,
    // embed / llm
    EmptyText,
    ProviderUnavailable,
    Timeout,
    ContextTooLarge,
    ScriptMiss,
    MissingVariable,
    UnknownRoleSection,
    // index
    DimensionMismatch,
    IoError,
    CorruptFile,
    // rag
    EmptyIndex,
    ContextBudgetExceeded,
    // eval
    NoContexts,
    EmptyGroundTruth,
    EmptyDataset,
    // feedback
    UnknownResponse,
    UnknownEntry,
    InvalidRating,
    AlreadyCurated,
    MissingCorrection,
    EmptySelection,
    // service
    PathTraversal,
    InvalidArgument,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the engine carries one of the codes above. `subject`
/// names the offending item (a variable name, an input index, a prompt hash)
/// when there is one.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message, std::string subject = {})
        : std::runtime_error(std::string(to_string(code)) + ": " + message),
          code_(code),
          subject_(std::move(subject)) {}

    ErrorCode code() const noexcept { return code_; }
    const std::string& subject() const noexcept { return subject_; }

private:
    ErrorCode code_;
    std::string subject_;
};

} // namespace fiscalrag
