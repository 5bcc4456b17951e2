#pragma once

#include "fiscalrag/ingest.hpp"
#include "fiscalrag/llm.hpp"
#include "fiscalrag/rag.hpp"

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace fiscalrag::feedback {

inline constexpr int kSchemaVersion = 1;

/// One served answer, keyed by its response id.
struct AnswerRecord {
    std::string response_id;
    std::string question;
    rag::AnswerPayload payload;
    std::string created_at;
};

void to_json(nlohmann::json& j, const AnswerRecord& record);
void from_json(const nlohmann::json& j, AnswerRecord& record);

/// Append-only JSONL log of served answers. Loaded into memory on open.
class AnswerLog {
public:
    explicit AnswerLog(std::filesystem::path path);

    void append(const AnswerRecord& record);
    std::optional<AnswerRecord> find(const std::string& response_id) const;
    std::size_t size() const;

private:
    std::filesystem::path path_;
    mutable std::shared_mutex mutex_;
    std::map<std::string, AnswerRecord> records_;
};

enum class Disposition { pending, approve_finetune, approve_corpus, rejected };

std::string_view to_string(Disposition disposition) noexcept;
std::optional<Disposition> parse_disposition(std::string_view name) noexcept;

struct FeedbackEntry {
    std::string id;
    std::string response_id;
    int rating = 0;
    std::optional<std::string> comment;
    std::string created_at;
    Disposition disposition = Disposition::pending;
    std::optional<std::string> corrected_answer;
    std::optional<std::string> curated_at;
};

void to_json(nlohmann::json& j, const FeedbackEntry& entry);
void from_json(const nlohmann::json& j, FeedbackEntry& entry);

struct FeedbackPolicy {
    /// When set, approve_finetune without a correction is allowed for ratings
    /// at or above min_as_is_rating (the model answer is used as-is).
    bool allow_as_is = true;
    int min_as_is_rating = 4;
};

struct CurationResult {
    FeedbackEntry entry;
    /// Set for approve_corpus: the (question, answer) pair as an ingestable document.
    std::optional<ingest::Document> corpus_document;
};

/// Feedback entries over an append-only JSONL log. Each line carries
/// schema_version and a type: "feedback" records a new entry, "curation" a
/// disposition change. Opening the store replays the log.
class FeedbackStore {
public:
    FeedbackStore(std::filesystem::path path, const AnswerLog& answers, FeedbackPolicy policy = {});

    /// Throws InvalidRating outside 1..5 and UnknownResponse for ids missing
    /// from the answer log.
    FeedbackEntry record_feedback(const std::string& response_id, int rating,
                                  std::optional<std::string> comment = std::nullopt);

    /// Throws UnknownEntry, AlreadyCurated, MissingCorrection, or
    /// InvalidArgument when asked to curate back to pending.
    CurationResult curate(const std::string& entry_id, Disposition disposition,
                          std::optional<std::string> corrected_answer = std::nullopt);

    std::optional<FeedbackEntry> get(const std::string& entry_id) const;
    /// Entries in creation order.
    std::vector<FeedbackEntry> entries() const;

    const AnswerLog& answers() const { return answers_; }

private:
    void append_line(const nlohmann::json& line);
    void replay();

    std::filesystem::path path_;
    const AnswerLog& answers_;
    FeedbackPolicy policy_;
    mutable std::shared_mutex mutex_;
    std::vector<std::string> order_;
    std::map<std::string, FeedbackEntry> entries_;
};

/// Text of the document created when an entry is approved for the corpus.
ingest::Document corpus_document(const FeedbackEntry& entry, const std::string& question,
                                 const std::string& answer);

struct ExportManifest {
    std::size_t count = 0;
    std::vector<std::string> entry_ids;
    std::size_t imported_pairs = 0;
    std::string dataset;
    std::string created_at;
};

void to_json(nlohmann::json& j, const ExportManifest& manifest);

/// Writes `out` (one {"messages": [system, user, assistant]} object per line)
/// and `out` + ".manifest.json". Selects entries approved for fine-tuning
/// plus any imported pairs; the assistant turn is the correction when present,
/// otherwise the served answer. Throws EmptySelection when nothing qualifies.
ExportManifest export_finetune(const FeedbackStore& store, const llm::TemplateStore& templates,
                               const std::filesystem::path& out,
                               const std::vector<ingest::QAPair>& imported = {});

/// nullopt when the record has exactly system, user and assistant messages in
/// that order, each with non-empty content; otherwise the reason.
std::optional<std::string> validate_finetune_record(const nlohmann::json& record);

/// Number of lines in a dataset file that fail validation.
std::size_t count_invalid_records(const std::filesystem::path& dataset);

} // namespace fiscalrag::feedback
