#include "fiscalrag/service.hpp"
#include "fiscalrag/error.hpp"
#include "fiscalrag/text.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace fiscalrag::service {

namespace {

fs::path resolve(const fs::path& base, const fs::path& p) {
    if (p.empty() || p.is_absolute() || base.empty()) return p;
    return base / p;
}

ProviderSpec provider_from_json(const json& j, const fs::path& base) {
    ProviderSpec spec;
    spec.kind = j.value("kind", spec.kind);
    if (spec.kind != "scripted" && spec.kind != "openai") {
        throw Error(ErrorCode::InvalidArgument, "unknown provider kind '" + spec.kind + "'");
    }
    if (j.contains("script")) spec.script = resolve(base, j.at("script").get<std::string>());
    if (j.contains("strict")) spec.strict = j.at("strict").get<bool>();
    spec.base_url = j.value("base_url", spec.base_url);
    spec.api_key_env = j.value("api_key_env", spec.api_key_env);
    if (spec.kind == "scripted" && spec.script.empty()) {
        throw Error(ErrorCode::InvalidArgument, "scripted provider needs a script path");
    }
    return spec;
}

} // namespace

ServiceConfig config_from_json(const json& j, const fs::path& base) {
    if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "config must be a JSON object");
    ServiceConfig config;
    try {
        config.host = j.value("host", config.host);
        config.port = j.value("port", config.port);
        auto path_field = [&](const char* key, fs::path& target) {
            if (j.contains(key)) target = j.at(key).get<std::string>();
            target = resolve(base, target);
        };
        path_field("corpus_dir", config.corpus_dir);
        path_field("index_path", config.index_path);
        path_field("feedback_log", config.feedback_log);
        path_field("answer_log", config.answer_log);
        path_field("eval_dir", config.eval_dir);
        if (j.contains("templates_dir")) config.templates_dir = resolve(base, j.at("templates_dir").get<std::string>());
        if (j.contains("rag")) config.rag = j.at("rag").get<rag::RagConfig>();
        const json providers = j.value("providers", json::object());
        for (const auto& [id, spec] : providers.items()) {
            config.providers[id] = provider_from_json(spec, base);
        }
        if (j.contains("embedder")) {
            const auto& e = j.at("embedder");
            config.embedder.kind = e.value("kind", config.embedder.kind);
            config.embedder.dims = e.value("dims", config.embedder.dims);
            config.embedder.base_url = e.value("base_url", config.embedder.base_url);
            config.embedder.model = e.value("model", config.embedder.model);
            config.embedder.api_key_env = e.value("api_key_env", config.embedder.api_key_env);
            if (e.contains("cache_dir")) config.embedder.cache_dir = resolve(base, e.at("cache_dir").get<std::string>());
        }
        config.chunk_size = j.value("chunk_size", config.chunk_size);
        config.chunk_overlap = j.value("chunk_overlap", config.chunk_overlap);
        config.workers = j.value("workers", config.workers);
        if (j.contains("bearer_token_env")) config.bearer_token_env = j.at("bearer_token_env").get<std::string>();
        if (j.contains("feedback")) {
            const auto& f = j.at("feedback");
            config.feedback_policy.allow_as_is = f.value("allow_as_is", config.feedback_policy.allow_as_is);
            config.feedback_policy.min_as_is_rating =
                f.value("min_as_is_rating", config.feedback_policy.min_as_is_rating);
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("malformed config: ") + e.what());
    }

    if (config.port < 0 || config.port > 65535) {
        throw Error(ErrorCode::InvalidArgument, "port must be in [1, 65535]", std::to_string(config.port));
    }
    if (config.embedder.kind != "deterministic" && config.embedder.kind != "openai") {
        throw Error(ErrorCode::InvalidArgument, "unknown embedder kind '" + config.embedder.kind + "'");
    }
    if (config.chunk_size == 0 || config.chunk_overlap >= config.chunk_size) {
        throw Error(ErrorCode::InvalidParams, "chunk_overlap must be smaller than chunk_size");
    }
    if (config.workers == 0) config.workers = 1;
    return config;
}

ServiceConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::NotFound, "cannot open config", path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("config is not valid JSON: ") + e.what(), path.string());
    }
    return config_from_json(j, fs::absolute(path).parent_path());
}

json config_to_json(const ServiceConfig& config) {
    json providers = json::object();
    for (const auto& [id, spec] : config.providers) {
        json p{{"kind", spec.kind}};
        if (spec.kind == "scripted") {
            p["script"] = spec.script.string();
            if (spec.strict) p["strict"] = *spec.strict;
        } else {
            p["base_url"] = spec.base_url;
            p["api_key_env"] = spec.api_key_env;
        }
        providers[id] = std::move(p);
    }
    json j{{"host", config.host},
           {"port", config.port},
           {"corpus_dir", config.corpus_dir.string()},
           {"index_path", config.index_path.string()},
           {"rag", config.rag},
           {"providers", std::move(providers)},
           {"embedder",
            {{"kind", config.embedder.kind},
             {"dims", config.embedder.dims},
             {"base_url", config.embedder.base_url},
             {"model", config.embedder.model},
             {"api_key_env", config.embedder.api_key_env}}},
           {"chunk_size", config.chunk_size},
           {"chunk_overlap", config.chunk_overlap},
           {"feedback_log", config.feedback_log.string()},
           {"answer_log", config.answer_log.string()},
           {"eval_dir", config.eval_dir.string()},
           {"workers", config.workers},
           {"feedback",
            {{"allow_as_is", config.feedback_policy.allow_as_is},
             {"min_as_is_rating", config.feedback_policy.min_as_is_rating}}}};
    if (config.templates_dir) j["templates_dir"] = config.templates_dir->string();
    if (config.embedder.cache_dir) j["embedder"]["cache_dir"] = config.embedder.cache_dir->string();
    if (config.bearer_token_env) j["bearer_token_env"] = *config.bearer_token_env;
    return j;
}

json to_json(const IngestCounts& counts) {
    json failures = json::array();
    for (const auto& f : counts.failures) {
        failures.push_back({{"path", f.path}, {"error", f.error}, {"message", f.message}});
    }
    return json{{"documents", counts.documents},
                {"new_documents", counts.new_documents},
                {"chunks", counts.chunks},
                {"replaced", counts.replaced},
                {"failures", std::move(failures)}};
}

std::string_view to_string(RunStatus status) noexcept {
    switch (status) {
    case RunStatus::running: return "running";
    case RunStatus::done: return "done";
    case RunStatus::failed: return "failed";
    }
    return "failed";
}

llm::ProviderRegistry build_providers(const ServiceConfig& config) {
    llm::ProviderRegistry registry;
    for (const auto& [id, spec] : config.providers) {
        if (spec.kind == "scripted") {
            auto script = [&] {
                std::ifstream in(spec.script);
                if (!in) throw Error(ErrorCode::NotFound, "cannot open provider script", spec.script.string());
                return json::parse(in);
            }();
            if (spec.strict && script.is_object()) script["mode"] = *spec.strict ? "strict" : "lenient";
            if (spec.strict && script.is_array()) {
                script = json{{"mode", *spec.strict ? "strict" : "lenient"}, {"rules", script}};
            }
            registry.add(id, llm::ScriptedProvider::from_json(script, id));
        } else {
            registry.add(id, std::make_shared<llm::OpenAIChatProvider>(
                                 llm::OpenAIChatProvider::Options{id, spec.base_url, spec.api_key_env}));
        }
    }
    return registry;
}

namespace {

std::unique_ptr<embed::EmbeddingService> make_embedder(const EmbedderSpec& spec) {
    std::shared_ptr<embed::EmbeddingProvider> provider;
    if (spec.kind == "openai") {
        embed::RemoteEmbedder::Options options;
        options.base_url = spec.base_url;
        options.model = spec.model;
        options.api_key_env = spec.api_key_env;
        provider = std::make_shared<embed::RemoteEmbedder>(options);
    } else {
        provider = std::make_shared<embed::DeterministicEmbedder>(spec.dims);
    }
    return std::make_unique<embed::EmbeddingService>(std::move(provider), spec.cache_dir);
}

std::shared_ptr<llm::TemplateStore> make_templates(const ServiceConfig& config) {
    if (config.templates_dir) return std::make_shared<llm::TemplateStore>(*config.templates_dir);
    return std::make_shared<llm::TemplateStore>();
}

} // namespace

Engine::Engine(ServiceConfig config) : Engine(config, build_providers(config)) {}

Engine::Engine(ServiceConfig config, llm::ProviderRegistry providers)
    : config_(std::move(config)),
      providers_(std::move(providers)),
      templates_(make_templates(config_)),
      embedder_(make_embedder(config_.embedder)),
      answers_(config_.answer_log),
      feedback_(config_.feedback_log, answers_, config_.feedback_policy) {
    fs::create_directories(config_.corpus_dir);
    fs::create_directories(config_.eval_dir);
    if (config_.index_path.has_parent_path()) fs::create_directories(config_.index_path.parent_path());
    if (fs::exists(config_.index_path)) index_.load_from(config_.index_path);
    if (config_.embedder.kind == "deterministic" && index_.size() > 0 && index_.dims() != config_.embedder.dims) {
        throw Error(ErrorCode::DimensionMismatch,
                    "index has " + std::to_string(index_.dims()) + " dims but the embedder produces " +
                        std::to_string(config_.embedder.dims),
                    config_.index_path.string());
    }
}

Engine::~Engine() = default;

fs::path Engine::resolve_corpus_path(const fs::path& path) const {
    const auto root = fs::weakly_canonical(fs::absolute(config_.corpus_dir));
    const auto candidate = fs::weakly_canonical(path.is_absolute() ? path : root / path);
    const auto [root_end, _] = std::mismatch(root.begin(), root.end(), candidate.begin(), candidate.end());
    if (root_end != root.end()) {
        throw Error(ErrorCode::PathTraversal, "path escapes the corpus root", path.string());
    }
    return candidate;
}

IngestCounts Engine::ingest_path(const fs::path& path) {
    const auto target = resolve_corpus_path(path);
    return ingest_under(fs::weakly_canonical(fs::absolute(config_.corpus_dir)), target, path);
}

IngestCounts Engine::ingest_external(const fs::path& path) {
    const auto target = fs::weakly_canonical(fs::absolute(path));
    return ingest_under(target.parent_path(), target, path);
}

IngestCounts Engine::ingest_under(const fs::path& root, const fs::path& target, const fs::path& shown) {
    if (!fs::exists(target)) throw Error(ErrorCode::NotFound, "no such file or directory", shown.string());

    std::vector<IngestFailure> failures;
    std::vector<ingest::Document> documents;
    if (fs::is_directory(target)) {
        const std::set<ingest::Format> all{ingest::Format::txt, ingest::Format::md, ingest::Format::csv,
                                           ingest::Format::json, ingest::Format::pdf_text};
        auto report = ingest::load_directory(target, true, all);
        const auto prefix = fs::relative(target, root);
        for (auto& doc : report.documents) {
            if (prefix != ".") doc.source_uri = (prefix / doc.source_uri).generic_string();
            // source_uri is part of the id, so recompute after prefixing
            doc.id = ingest::document_id(doc.source_uri, doc.text);
            documents.push_back(std::move(doc));
        }
        for (const auto& f : report.failures) failures.push_back({f.path, f.error, f.message});
    } else {
        if (!ingest::format_from_path(target)) {
            throw Error(ErrorCode::UnsupportedFormat, "unsupported file format", shown.string());
        }
        documents.push_back(ingest::load_document(target, std::nullopt, fs::relative(target, root).generic_string()));
    }

    auto counts = ingest_documents(documents);
    counts.failures.insert(counts.failures.begin(), failures.begin(), failures.end());
    return counts;
}

IngestCounts Engine::ingest_documents(const std::vector<ingest::Document>& documents) {
    std::lock_guard lock(ingest_mutex_);
    IngestCounts counts;
    counts.documents = documents.size();
    bool changed = false;
    for (const auto& doc : documents) {
        if (index_.has_document(doc.id)) continue;
        std::vector<ingest::Chunk> chunks;
        std::vector<embed::EmbeddingVector> vectors;
        try {
            chunks = ingest::split_text(doc, config_.chunk_size, config_.chunk_overlap);
            std::vector<std::string> texts;
            texts.reserve(chunks.size());
            for (const auto& c : chunks) texts.push_back(c.text);
            vectors = embedder_->embed_texts(texts);
        } catch (const Error& e) {
            counts.failures.push_back({doc.source_uri, std::string(to_string(e.code())), e.what()});
            continue;
        }
        for (const auto& stale : index_.documents_with_source(doc.source_uri)) {
            index_.delete_document(stale);
            ++counts.replaced;
            changed = true;
        }
        index::Metadata metadata = doc.metadata;
        metadata["source_uri"] = doc.source_uri;
        metadata["format"] = std::string(ingest::to_string(doc.format));
        std::vector<index::UpsertItem> items;
        items.reserve(chunks.size());
        for (std::size_t i = 0; i < chunks.size(); ++i) items.push_back({chunks[i], vectors[i], metadata});
        index_.upsert_batch(items);
        ++counts.new_documents;
        counts.chunks += chunks.size();
        changed = true;
    }
    if (changed) index_.persist(config_.index_path);
    return counts;
}

AskResult Engine::ask(const std::string& question, const json& overrides) {
    rag::RagConfig rag_config = config_.rag;
    if (!overrides.is_null() && !overrides.empty()) {
        if (!overrides.is_object()) throw Error(ErrorCode::InvalidArgument, "overrides must be an object");
        json merged = config_.rag;
        merged.merge_patch(overrides);
        try {
            rag_config = merged.get<rag::RagConfig>();
        } catch (const json::exception& e) {
            throw Error(ErrorCode::InvalidArgument, std::string("bad overrides: ") + e.what());
        }
    }
    auto provider = providers_.get(rag_config.model.provider_id);
    AskResult result;
    result.payload = rag::answer(question, rag_config, rag::Corpus{index_, *embedder_}, *provider, *templates_);
    result.response_id = text::random_token_hex(16);
    answers_.append({result.response_id, question, result.payload, text::utc_now_iso8601()});
    return result;
}

feedback::FeedbackEntry Engine::record_feedback(const std::string& response_id, int rating,
                                                std::optional<std::string> comment) {
    return feedback_.record_feedback(response_id, rating, std::move(comment));
}

feedback::CurationResult Engine::curate(const std::string& entry_id, feedback::Disposition disposition,
                                        std::optional<std::string> corrected_answer) {
    auto result = feedback_.curate(entry_id, disposition, std::move(corrected_answer));
    if (result.corpus_document) {
        const auto dir = config_.corpus_dir / "feedback";
        fs::create_directories(dir);
        std::ofstream(dir / (entry_id + ".txt"), std::ios::trunc | std::ios::binary) << result.corpus_document->text;
    }
    return result;
}

std::vector<feedback::FeedbackEntry> Engine::feedback_entries() const {
    return feedback_.entries();
}

feedback::ExportManifest Engine::export_finetune(const fs::path& out, const std::vector<ingest::QAPair>& imported) {
    return feedback::export_finetune(feedback_, *templates_, out, imported);
}

std::unique_ptr<eval::Judge> Engine::make_judge(const std::string& spec) const {
    if (spec.empty() || spec == "rule") return std::make_unique<eval::RuleJudge>();
    if (spec.rfind("llm:", 0) == 0) {
        const auto provider_id = spec.substr(4);
        llm::ModelConfig model = config_.rag.model;
        model.provider_id = provider_id;
        return std::make_unique<eval::LlmJudge>(providers_.get(provider_id), model, templates_);
    }
    throw Error(ErrorCode::InvalidArgument, "unknown judge '" + spec + "'");
}

EvalRun Engine::execute_eval(const std::string& id, const EvalRequest& request) {
    EvalRun run;
    run.id = id;
    run.artifact_dir = request.artifact_dir.value_or(config_.eval_dir / id);
    const auto dataset = ingest::read_qa_jsonl(request.dataset);
    auto judge = make_judge(request.judge);
    eval::BenchmarkOptions options;
    options.workers = request.workers.value_or(config_.workers);
    options.artifact_dir = run.artifact_dir;
    std::lock_guard lock(eval_mutex_);
    run.report = eval::run_benchmark(request.configs, dataset, *judge,
                                     {rag::Corpus{index_, *embedder_}, providers_, *templates_}, options);
    run.status = RunStatus::done;
    return run;
}

EvalRun Engine::run_eval(const EvalRequest& request) {
    return execute_eval(text::random_token_hex(8), request);
}

std::string Engine::start_eval(EvalRequest request) {
    if (request.configs.empty()) throw Error(ErrorCode::InvalidArgument, "no benchmark configurations");
    if (!fs::is_regular_file(request.dataset)) {
        throw Error(ErrorCode::NotFound, "dataset is not readable", request.dataset.string());
    }
    make_judge(request.judge);  // reject a bad judge spec before going async

    const auto id = text::random_token_hex(8);
    std::lock_guard lock(runs_mutex_);
    runs_[id] = EvalRun{id, RunStatus::running, std::nullopt, {}, config_.eval_dir / id};
    eval_threads_.emplace_back([this, id, request = std::move(request)] {
        EvalRun finished;
        try {
            finished = execute_eval(id, request);
        } catch (const std::exception& e) {
            finished.id = id;
            finished.status = RunStatus::failed;
            finished.error = e.what();
            finished.artifact_dir = config_.eval_dir / id;
        }
        std::lock_guard lock(runs_mutex_);
        runs_[id] = std::move(finished);
    });
    return id;
}

std::optional<EvalRun> Engine::eval_run(const std::string& id) const {
    std::lock_guard lock(runs_mutex_);
    const auto it = runs_.find(id);
    if (it == runs_.end()) return std::nullopt;
    return it->second;
}

std::optional<index::Entry> Engine::chunk(const std::string& key) const {
    return index_.get(key);
}

std::size_t Engine::index_count() const {
    return index_.size();
}

std::uint64_t Engine::index_version() const {
    return index_.version();
}

} // namespace fiscalrag::service
