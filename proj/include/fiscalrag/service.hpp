#pragma once

#include "fiscalrag/embed.hpp"
#include "fiscalrag/eval.hpp"
#include "fiscalrag/feedback.hpp"
#include "fiscalrag/index.hpp"
#include "fiscalrag/ingest.hpp"
#include "fiscalrag/llm.hpp"
#include "fiscalrag/rag.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

namespace fiscalrag::service {

inline constexpr std::string_view kVersion = "0.1.0";

struct ProviderSpec {
    std::string kind = "scripted";  // scripted | openai
    std::filesystem::path script;   // scripted
    std::optional<bool> strict;     // scripted; nullopt = the script's own mode
    std::string base_url = "https://api.openai.com";
    std::string api_key_env = "OPENAI_API_KEY";
};

struct EmbedderSpec {
    std::string kind = "deterministic";  // deterministic | openai
    std::size_t dims = 256;
    std::string base_url = "https://api.openai.com";
    std::string model = "text-embedding-3-small";
    std::string api_key_env = "OPENAI_API_KEY";
    std::optional<std::filesystem::path> cache_dir;
};

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::filesystem::path corpus_dir = "corpus";
    std::filesystem::path index_path = "state/index.rgfi";
    std::optional<std::filesystem::path> templates_dir;
    rag::RagConfig rag;
    std::map<std::string, ProviderSpec> providers;
    EmbedderSpec embedder;
    std::size_t chunk_size = ingest::kDefaultChunkSize;
    std::size_t chunk_overlap = ingest::kDefaultChunkOverlap;
    std::filesystem::path feedback_log = "state/feedback.jsonl";
    std::filesystem::path answer_log = "state/answers.jsonl";
    std::filesystem::path eval_dir = "state/eval";
    std::size_t workers = 4;
    /// Environment variable holding a static bearer token; unset or empty = no auth.
    std::optional<std::string> bearer_token_env;
    feedback::FeedbackPolicy feedback_policy;
};

/// Relative paths resolve against `base`. Throws InvalidArgument on bad values.
ServiceConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base = {});
/// Reads a JSON config file; relative paths resolve against its directory.
ServiceConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const ServiceConfig& config);

struct IngestFailure {
    std::string path;
    std::string error;
    std::string message;
};

struct IngestCounts {
    std::size_t documents = 0;      // documents seen
    std::size_t new_documents = 0;  // documents whose content was not indexed yet
    std::size_t chunks = 0;         // chunks added
    std::size_t replaced = 0;       // stale documents removed for a changed source
    std::vector<IngestFailure> failures;
};

nlohmann::json to_json(const IngestCounts& counts);

struct AskResult {
    std::string response_id;
    rag::AnswerPayload payload;
};

enum class RunStatus { running, done, failed };
std::string_view to_string(RunStatus status) noexcept;

struct EvalRun {
    std::string id;
    RunStatus status = RunStatus::running;
    std::optional<eval::BenchmarkReport> report;
    std::string error;
    std::filesystem::path artifact_dir;
};

struct EvalRequest {
    std::filesystem::path dataset;
    std::vector<eval::BenchmarkConfig> configs;
    std::string judge = "rule";  // "rule" or "llm:<provider id>"
    std::optional<std::size_t> workers;
    std::optional<std::filesystem::path> artifact_dir;  // default <eval_dir>/<run id>
};

/// The wired-up pipeline shared by the CLI and the HTTP server. Ingests and
/// eval runs are serialized; asks run concurrently against the index's
/// reader lock.
class Engine {
public:
    explicit Engine(ServiceConfig config);
    /// Test seam: supply the chat providers directly instead of building them from the config.
    Engine(ServiceConfig config, llm::ProviderRegistry providers);
    ~Engine();

    Engine(const Engine&) = delete;
    Engine& operator=(const Engine&) = delete;

    const ServiceConfig& config() const { return config_; }

    /// `path` is resolved against the corpus root and must stay inside it
    /// (PathTraversal otherwise). Files need a known format (UnsupportedFormat).
    IngestCounts ingest_path(const std::filesystem::path& path);
    /// Operator ingest of any readable path; source URIs are relative to its parent directory.
    IngestCounts ingest_external(const std::filesystem::path& path);
    /// Skips documents already indexed (same content hash); replaces older
    /// documents with the same source_uri. Persists the index when it changed.
    IngestCounts ingest_documents(const std::vector<ingest::Document>& documents);

    /// `overrides` is merged over the default RagConfig. The answer is logged.
    AskResult ask(const std::string& question, const nlohmann::json& overrides = nlohmann::json::object());

    feedback::FeedbackEntry record_feedback(const std::string& response_id, int rating,
                                            std::optional<std::string> comment);
    /// Corpus approvals are written to <corpus>/feedback/<entry id>.txt for a later ingest.
    feedback::CurationResult curate(const std::string& entry_id, feedback::Disposition disposition,
                                    std::optional<std::string> corrected_answer);
    std::vector<feedback::FeedbackEntry> feedback_entries() const;
    feedback::ExportManifest export_finetune(const std::filesystem::path& out,
                                             const std::vector<ingest::QAPair>& imported = {});

    /// Synchronous benchmark; artifacts land in <eval_dir>/<run id>.
    EvalRun run_eval(const EvalRequest& request);
    /// Starts a background run and returns its id.
    std::string start_eval(EvalRequest request);
    std::optional<EvalRun> eval_run(const std::string& id) const;

    std::optional<index::Entry> chunk(const std::string& key) const;
    std::size_t index_count() const;
    std::uint64_t index_version() const;

    const llm::ProviderRegistry& providers() const { return providers_; }
    const llm::TemplateStore& templates() const { return *templates_; }
    embed::EmbeddingService& embedder() { return *embedder_; }

private:
    std::filesystem::path resolve_corpus_path(const std::filesystem::path& path) const;
    IngestCounts ingest_under(const std::filesystem::path& root, const std::filesystem::path& target,
                              const std::filesystem::path& shown);
    std::unique_ptr<eval::Judge> make_judge(const std::string& spec) const;
    EvalRun execute_eval(const std::string& id, const EvalRequest& request);

    ServiceConfig config_;
    llm::ProviderRegistry providers_;
    std::shared_ptr<llm::TemplateStore> templates_;
    std::unique_ptr<embed::EmbeddingService> embedder_;
    index::ExactIndex index_;
    feedback::AnswerLog answers_;
    feedback::FeedbackStore feedback_;

    std::mutex ingest_mutex_;
    std::mutex eval_mutex_;
    mutable std::mutex runs_mutex_;
    std::map<std::string, EvalRun> runs_;
    std::vector<std::jthread> eval_threads_;
};

/// Builds the chat providers named in the config.
llm::ProviderRegistry build_providers(const ServiceConfig& config);

} // namespace fiscalrag::service
