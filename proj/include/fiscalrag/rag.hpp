#pragma once

#include "fiscalrag/embed.hpp"
#include "fiscalrag/index.hpp"
#include "fiscalrag/llm.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace fiscalrag::rag {

enum class Language { id, en, other };
enum class ChainType { stuff, map_reduce, refine };

std::string_view to_string(Language language) noexcept;
std::optional<Language> parse_language(std::string_view name) noexcept;
std::string_view to_string(ChainType chain) noexcept;
std::optional<ChainType> parse_chain(std::string_view name) noexcept;

/// Counts lowercase-token hits against the Indonesian and English stopword
/// lists; the larger count wins, zero/tie gives `other`.
Language detect_language(std::string_view question);

struct LanguagePolicy {
    /// nullopt = answer in the language of the question.
    std::optional<Language> forced;
};

/// "Respond in Indonesian." / "Respond in English." / same-language fallback.
std::string language_instruction(Language language);

inline constexpr std::size_t kDefaultK = 4;
inline constexpr std::size_t kDefaultContextBudget = 12000;

struct RagConfig {
    std::size_t k = kDefaultK;
    ChainType chain = ChainType::stuff;
    llm::ModelConfig model;
    LanguagePolicy language_policy;
    bool structured_output = false;
    std::size_t context_budget_chars = kDefaultContextBudget;
};

void to_json(nlohmann::json& j, const RagConfig& config);
/// Missing fields keep their defaults.
void from_json(const nlohmann::json& j, RagConfig& config);

struct Context {
    std::string chunk_key;
    std::string source_uri;
    std::string text;
    double score = 0.0;
};

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    bool operator==(const Table&) const = default;
};

struct Source {
    std::string chunk_key;
    std::string source_uri;
    double score = 0.0;
    std::size_t start = 0;
    std::size_t end = 0;

    bool operator==(const Source&) const = default;
};

struct AnswerPayload {
    std::string answer;
    Language language = Language::other;
    std::optional<Table> table;
    std::vector<Source> sources;
    double latency_seconds = 0.0;
    ChainType chain_used = ChainType::stuff;
    std::string template_id;
    bool parse_fallback = false;
    /// Retrieved chunk texts in rank order, parallel to `sources`.
    std::vector<std::string> contexts;
};

void to_json(nlohmann::json& j, const AnswerPayload& payload);
void from_json(const nlohmann::json& j, AnswerPayload& payload);
/// Payload JSON without latency, for replay comparisons.
nlohmann::json stable_json(const AnswerPayload& payload);

inline constexpr std::string_view kNoContextClause =
    "No context found. Tell the user that you cannot answer this question from the available documents.";

inline constexpr std::string_view kStructuredInstruction =
    "Return your reply as a fenced code block tagged json holding an object "
    "{\"answer\": string, \"table\": {\"columns\": [string], \"rows\": [[string]]} or null}. "
    "Fill the table only when the answer contains tabular or numeric data.";

/// "[source k: <uri>]\n<text>" blocks in rank order, blank-line separated.
std::string format_contexts(const std::vector<Context>& contexts, std::size_t first_rank = 1);

struct ChainSettings {
    std::string question;
    std::string language_instruction;
    bool structured_output = false;
    std::size_t context_budget_chars = kDefaultContextBudget;
};

struct ChainResult {
    std::string text;
    std::size_t calls = 0;
    std::string template_id;  // template of the call that produced `text`
};

/// Builds the single stuff-chain prompt. Empty contexts insert kNoContextClause.
/// Throws ContextBudgetExceeded when the contexts exceed the budget.
std::vector<llm::ChatMessage> chain_stuff(const llm::TemplateStore& templates, const ChainSettings& settings,
                                          const std::vector<Context>& contexts);

/// One call per context (map), then one reduce call with map outputs in rank order.
ChainResult chain_map_reduce(llm::ChatProvider& provider, const llm::ModelConfig& model,
                             const llm::TemplateStore& templates, const ChainSettings& settings,
                             const std::vector<Context>& contexts);

/// Initial call on context 1, then one refine call per further context.
ChainResult chain_refine(llm::ChatProvider& provider, const llm::ModelConfig& model,
                         const llm::TemplateStore& templates, const ChainSettings& settings,
                         const std::vector<Context>& contexts);

/// Dispatches on `chain`; stuff is a single call over chain_stuff's prompt.
ChainResult run_chain(ChainType chain, llm::ChatProvider& provider, const llm::ModelConfig& model,
                      const llm::TemplateStore& templates, const ChainSettings& settings,
                      const std::vector<Context>& contexts);

struct StructuredOutput {
    std::string answer;
    std::optional<Table> table;
    bool parse_fallback = false;
};

/// Reads the first ```json fenced block. Any failure (no block, bad JSON,
/// missing answer, ragged table) falls back to the raw text with the flag set.
StructuredOutput parse_structured(std::string_view raw);

/// Handles to the corpus the pipeline reads from.
struct Corpus {
    const index::VectorStore& index;
    embed::EmbeddingService& embedder;
};

/// Retrieval-augmented answer: embed, retrieve top-k, run the chain, parse
/// structured output, attach sources. Latency covers the whole call.
AnswerPayload answer(std::string_view question, const RagConfig& config, const Corpus& corpus,
                     llm::ChatProvider& provider, const llm::TemplateStore& templates,
                     const index::MetadataFilter& filter = {});

} // namespace fiscalrag::rag
