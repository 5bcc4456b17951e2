#pragma once

#include "fiscalrag/ingest.hpp"
#include "fiscalrag/llm.hpp"
#include "fiscalrag/rag.hpp"

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

namespace fiscalrag::eval {

struct EvalRecord {
    std::string question;
    std::string answer;
    std::vector<std::string> contexts;  // rank order
    std::string ground_truth;
    /// Human grade; when present it overrides the judge for accuracy.
    std::optional<bool> human_label;
};

void to_json(nlohmann::json& j, const EvalRecord& record);
void from_json(const nlohmann::json& j, EvalRecord& record);
std::vector<EvalRecord> read_records_jsonl(const std::filesystem::path& path);

struct MetricScores {
    std::optional<double> faithfulness;
    std::optional<double> correctness;
    std::optional<double> context_precision;
    std::optional<double> context_recall;
    std::optional<double> accuracy;
};

/// Decides claim splitting, support and relevance for the metrics.
class Judge {
public:
    virtual ~Judge() = default;

    virtual std::string kind() const = 0;
    /// Claims of an answer (or of a ground truth, for correctness).
    virtual std::vector<std::string> split_claims(std::string_view text) = 0;
    /// Ground-truth sentences for context recall.
    virtual std::vector<std::string> split_sentences(std::string_view text) = 0;
    /// Whether `statement` is supported by (attributable to) `reference`.
    virtual bool supported(std::string_view statement, std::string_view reference) = 0;
    /// Whether a retrieved context is relevant to the ground truth.
    virtual bool relevant(std::string_view context, std::string_view ground_truth) = 0;
    /// Binary correctness of a record's answer.
    virtual bool grade(const EvalRecord& record) = 0;
};

/// Sentences end at '.', '!' or '?' followed by whitespace or end of text.
/// Fragments are trimmed; empty ones are dropped.
std::vector<std::string> split_sentences(std::string_view text);

struct RuleJudgeParams {
    std::unordered_set<std::string> stopwords;  // empty = text::default_stopwords()
    double support_threshold = 1.0;    // tau
    double relevance_threshold = 0.2;  // tau_rel
    std::size_t min_claim_tokens = 2;
};

/// Deterministic judge over content tokens (lowercase word tokens minus
/// stopwords). A statement is supported when at least `support_threshold` of
/// its distinct content tokens occur in the reference; a context is relevant
/// when at least `relevance_threshold` of the ground truth's distinct content
/// tokens occur in it. Claims are sentences with >= 2 content tokens; recall
/// sentences need >= 1. grade() is answer_correctness >= 0.5.
class RuleJudge final : public Judge {
public:
    explicit RuleJudge(RuleJudgeParams params = {});

    std::string kind() const override { return "rule"; }
    std::vector<std::string> split_claims(std::string_view text) override;
    std::vector<std::string> split_sentences(std::string_view text) override;
    bool supported(std::string_view statement, std::string_view reference) override;
    bool relevant(std::string_view context, std::string_view ground_truth) override;
    bool grade(const EvalRecord& record) override;

    std::vector<std::string> content_tokens(std::string_view text) const;
    const RuleJudgeParams& params() const { return params_; }

private:
    double coverage(std::string_view statement, std::string_view reference) const;

    RuleJudgeParams params_;
};

struct JudgeVerdict {
    std::string kind;  // claims | support | relevance | grade
    std::string prompt;
    std::string reply;
};

/// LLM-backed judge. Every raw reply is kept for audit.
class LlmJudge final : public Judge {
public:
    LlmJudge(std::shared_ptr<llm::ChatProvider> provider, llm::ModelConfig model,
             std::shared_ptr<const llm::TemplateStore> templates);

    std::string kind() const override { return "llm"; }
    std::vector<std::string> split_claims(std::string_view text) override;
    std::vector<std::string> split_sentences(std::string_view text) override;
    bool supported(std::string_view statement, std::string_view reference) override;
    bool relevant(std::string_view context, std::string_view ground_truth) override;
    bool grade(const EvalRecord& record) override;

    std::vector<JudgeVerdict> verdicts() const;

private:
    std::string ask(const std::string& kind, const std::string& template_id,
                    const std::map<std::string, std::string>& vars);
    bool ask_yes_no(const std::string& kind, const std::string& template_id,
                    const std::map<std::string, std::string>& vars);

    std::shared_ptr<llm::ChatProvider> provider_;
    llm::ModelConfig model_;
    std::shared_ptr<const llm::TemplateStore> templates_;
    mutable std::mutex mutex_;
    std::vector<JudgeVerdict> verdicts_;
};

/// True when the reply starts with YES (case-insensitive, leading space and
/// punctuation ignored).
bool parse_yes(std::string_view reply);

enum class PrecisionDenominator { relevant, k };

struct ClaimCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
};

std::vector<std::string> split_claims(std::string_view answer, Judge& judge);

/// |supported claims| / |claims|; nullopt when the answer has no claims.
std::optional<double> faithfulness(const EvalRecord& record, Judge& judge);

ClaimCounts correctness_counts(const EvalRecord& record, Judge& judge);
/// TP / (TP + 0.5 (FP + FN)); nullopt when all counts are zero.
std::optional<double> answer_correctness(const EvalRecord& record, Judge& judge);

/// Sum over ranks of precision@k * v_k, divided by the number of relevant
/// contexts (or by K). No relevant contexts gives 0. Throws NoContexts.
double context_precision(const EvalRecord& record, Judge& judge,
                         PrecisionDenominator denominator = PrecisionDenominator::relevant);

/// Attributable ground-truth sentences / ground-truth sentences. Throws
/// EmptyGroundTruth when the ground truth has no sentences.
double context_recall(const EvalRecord& record, Judge& judge);

/// Mean of binary grades; human labels override the judge. Throws EmptyDataset.
double accuracy(const std::vector<EvalRecord>& records, Judge& judge);

struct ScoredRecord {
    MetricScores scores;
    std::vector<std::string> undefined_reasons;  // "metric: reason"
};

/// All four metrics plus the binary grade for one record; degenerate cases
/// become nullopt with a reason instead of throwing.
ScoredRecord score_record(const EvalRecord& record, Judge& judge,
                          PrecisionDenominator denominator = PrecisionDenominator::relevant);

struct BenchmarkConfig {
    std::string name;
    rag::RagConfig rag;
};

std::vector<BenchmarkConfig> read_configs(const std::filesystem::path& path);
std::vector<BenchmarkConfig> configs_from_json(const nlohmann::json& j);

struct MetricCell {
    std::optional<double> value;
    std::size_t defined = 0;
    std::size_t undefined = 0;
    std::size_t errors = 0;
};

struct ReportRow {
    std::string name;
    std::string provider_id;
    std::string model_id;
    std::string chain;
    std::size_t k = 0;
    std::string embedding;
    std::size_t questions = 0;
    std::size_t failed = 0;
    MetricCell correctness;
    MetricCell faithfulness;
    MetricCell precision;
    MetricCell recall;
    MetricCell accuracy;
    double mean_response_seconds = 0.0;
};

struct BenchmarkReport {
    std::vector<ReportRow> rows;
    std::string generated_at;
    std::string judge;
    std::string precision_denominator = "relevant";
};

/// Mean of the defined values; errors are records that never produced scores.
MetricCell aggregate(const std::vector<std::optional<double>>& values, std::size_t errors);

/// Everything except timing lives at top level; timestamps and latencies sit
/// under "timing" so reports can be compared with that key removed.
nlohmann::json report_to_json(const BenchmarkReport& report);
BenchmarkReport report_from_json(const nlohmann::json& j);
nlohmann::json without_timing(nlohmann::json report);

/// Aligned text table: Model | Correctness | Faithfulness | Precision | Recall.
/// Metric cells use the shortest exact decimal with at least two places.
std::string render_metrics_table(const BenchmarkReport& report);
/// Model | Vector Database | Embedding | Response (s) | Accuracy.
std::string render_performance_table(const BenchmarkReport& report);

struct Stage {
    std::string name;
    double accuracy = 0.0;
};
/// Performance | <stage names...> / Accuracy | <percentages...>.
std::string render_accuracy_progression(const std::vector<Stage>& stages);
std::string format_percent(double fraction);

struct ParsedTableRow {
    std::string model;
    std::vector<std::optional<double>> values;
};
/// Inverse of render_metrics_table.
std::vector<ParsedTableRow> parse_metrics_table(std::string_view table);

struct BenchmarkEnvironment {
    rag::Corpus corpus;
    const llm::ProviderRegistry& providers;
    const llm::TemplateStore& templates;
};

struct BenchmarkOptions {
    std::size_t workers = 1;
    std::optional<std::filesystem::path> artifact_dir;
    PrecisionDenominator precision_denominator = PrecisionDenominator::relevant;
};

/// Answers every question under every configuration, scores the results and
/// aggregates one row per configuration in input order. A failing question is
/// counted as an error in its row; the run continues. When artifact_dir is set,
/// one JSON line per (config, question) goes to artifact_dir/questions.jsonl
/// and the report to artifact_dir/report.json and report.txt.
BenchmarkReport run_benchmark(const std::vector<BenchmarkConfig>& configs, const std::vector<ingest::QAPair>& dataset,
                              Judge& judge, const BenchmarkEnvironment& env, const BenchmarkOptions& options = {});

} // namespace fiscalrag::eval
