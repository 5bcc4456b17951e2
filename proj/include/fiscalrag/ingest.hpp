#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace fiscalrag::ingest {

enum class Format { txt, md, csv, json, pdf_text };

std::string_view to_string(Format format) noexcept;
std::optional<Format> parse_format(std::string_view name) noexcept;
/// Maps a file name to its format. ".pdf.txt" is checked before ".txt".
std::optional<Format> format_from_path(const std::filesystem::path& path);

struct Document {
    std::string id;  // sha256 over (source_uri, text)
    std::string source_uri;
    Format format = Format::txt;
    std::string text;
    std::map<std::string, std::string> metadata;
};

std::string document_id(std::string_view source_uri, std::string_view text);

/// Builds a Document from in-memory text, enforcing the same invariants as the
/// file loaders.
Document make_document(std::string source_uri, Format format, std::string text,
                       std::map<std::string, std::string> metadata = {});

struct Span {
    std::size_t start = 0;  // code points
    std::size_t end = 0;

    bool operator==(const Span&) const = default;
};

struct Chunk {
    std::string doc_id;
    std::size_t seq = 0;
    std::string text;
    Span span;

    std::string key() const { return doc_id + ":" + std::to_string(seq); }
};

inline constexpr std::size_t kDefaultChunkSize = 1000;
inline constexpr std::size_t kDefaultChunkOverlap = 200;

/// CSV rows render as "header1: value1; header2: value2", one line per row.
std::string render_csv(std::string_view csv);

Document load_document(const std::filesystem::path& path,
                       std::optional<Format> format_hint = std::nullopt,
                       std::optional<std::string> source_uri = std::nullopt);

struct LoadFailure {
    std::string path;  // relative to the loaded root
    std::string error;
    std::string message;
};

struct LoadReport {
    std::vector<Document> documents;
    std::vector<LoadFailure> failures;
    std::size_t skipped = 0;  // files whose format was not selected
};

/// One Document per matching file, ordered by relative path. Each document's
/// source_uri is its path relative to `root`. Per-file errors go to the report.
LoadReport load_directory(const std::filesystem::path& root, bool recursive,
                          const std::set<Format>& formats);

/// Fixed-stride character splitter: stride = chunk_size - overlap; stops once
/// a chunk reaches the end of the text.
std::vector<Chunk> split_text(const Document& doc, std::size_t chunk_size = kDefaultChunkSize,
                              std::size_t overlap = kDefaultChunkOverlap);

enum class QaOrigin { scraped, expert_survey, feedback };

std::string_view to_string(QaOrigin origin) noexcept;

struct QAPair {
    std::string question;
    std::string ground_truth;
    std::string source;
    QaOrigin origin = QaOrigin::scraped;
    /// Human grades keyed by benchmark configuration name.
    std::map<std::string, bool> human_labels;

    bool operator==(const QAPair&) const = default;
};

void to_json(nlohmann::json& j, const QAPair& pair);
void from_json(const nlohmann::json& j, QAPair& pair);

std::vector<QAPair> read_qa_jsonl(const std::filesystem::path& path);
void write_qa_jsonl(const std::filesystem::path& path, const std::vector<QAPair>& pairs);

struct CleanReport {
    std::size_t kept = 0;
    std::size_t dropped = 0;
    std::size_t empty_question = 0;
    std::size_t empty_answer = 0;
    std::size_t short_question = 0;
    std::size_t short_answer = 0;
    std::size_t duplicates = 0;

    nlohmann::json to_json() const;
};

inline constexpr std::size_t kMinQuestionChars = 8;
inline constexpr std::size_t kMinAnswerTokens = 2;

/// HTML tags are stripped and whitespace collapsed before the rules run.
/// Rules, first failing rule wins: empty question, empty answer, question
/// shorter than 8 characters, answer with fewer than 2 word tokens, duplicate
/// question (case-folded, punctuation removed, whitespace collapsed).
std::pair<std::vector<QAPair>, CleanReport> clean_qa_pairs(const std::vector<QAPair>& raw);

/// Key used for duplicate detection.
std::string question_key(std::string_view question);

} // namespace fiscalrag::ingest
