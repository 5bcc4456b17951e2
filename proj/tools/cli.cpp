#include "cli.hpp"

#include "fiscalrag/error.hpp"
#include "fiscalrag/server.hpp"
#include "fiscalrag/service.hpp"
#include "fiscalrag/text.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <atomic>
#include <csignal>
#include <filesystem>
#include <iomanip>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace fiscalrag::cli {

namespace {

constexpr const char* kDefaultConfig = "fiscalrag.json";

std::atomic<service::Server*> g_server{nullptr};

extern "C" void handle_stop_signal(int) {
    if (auto* server = g_server.load()) server->stop();
}

service::ServiceConfig load_service_config(const std::string& path) {
    if (!path.empty()) return service::load_config(path);
    if (fs::exists(kDefaultConfig)) return service::load_config(kDefaultConfig);
    return service::config_from_json(json::object(), fs::current_path());
}

void print_answer(std::ostream& out, const rag::AnswerPayload& payload) {
    out << payload.answer << "\n";
    if (payload.table) {
        out << "\n";
        for (std::size_t c = 0; c < payload.table->columns.size(); ++c) {
            out << (c ? " | " : "") << payload.table->columns[c];
        }
        out << "\n";
        for (const auto& row : payload.table->rows) {
            for (std::size_t c = 0; c < row.size(); ++c) out << (c ? " | " : "") << row[c];
            out << "\n";
        }
    }
    if (!payload.sources.empty()) {
        out << "\nSources:\n";
        for (std::size_t i = 0; i < payload.sources.size(); ++i) {
            const auto& s = payload.sources[i];
            out << "  [" << i + 1 << "] " << s.source_uri << " (" << s.start << "-" << s.end << ", score "
                << std::fixed << std::setprecision(4) << s.score << std::defaultfloat << ")\n";
        }
    }
}

} // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Question answering over government financial documents"};
    app.require_subcommand(1, 1);

    std::string config_path;
    app.add_option("--config", config_path, "Service config file (default ./fiscalrag.json when present)");

    std::string ingest_path;
    std::size_t chunk_size = 0;
    std::size_t overlap = 0;
    auto* ingest_cmd = app.add_subcommand("ingest", "Load, split, embed and index documents");
    ingest_cmd->add_option("--path", ingest_path, "File or directory")->required();
    auto* size_opt = ingest_cmd->add_option("--chunk-size", chunk_size, "Chunk size in characters");
    auto* overlap_opt = ingest_cmd->add_option("--overlap", overlap, "Chunk overlap in characters");

    std::string question;
    std::string chain;
    std::size_t k = 0;
    bool as_json = false;
    bool with_timing = false;
    auto* query_cmd = app.add_subcommand("query", "Answer one question");
    query_cmd->add_option("--q", question, "Question")->required();
    query_cmd->add_option("--chain", chain, "stuff | map_reduce | refine")
        ->check(CLI::IsMember({"stuff", "map_reduce", "refine"}));
    auto* k_opt = query_cmd->add_option("--k", k, "Contexts to retrieve")->check(CLI::PositiveNumber);
    query_cmd->add_flag("--json", as_json, "Print the answer payload as JSON");
    query_cmd->add_flag("--timing", with_timing, "Include latency in the JSON payload");

    std::string host;
    int port = -1;
    auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP service");
    serve_cmd->add_option("--host", host, "Listen address");
    serve_cmd->add_option("--port", port, "Listen port")->check(CLI::Range(0, 65535));

    std::string dataset;
    std::string configs;
    std::string judge = "rule";
    std::string eval_out;
    std::size_t workers = 0;
    auto* eval_cmd = app.add_subcommand("eval", "Benchmark configurations over a Q&A dataset");
    eval_cmd->add_option("--dataset", dataset, "Q&A pairs, JSON Lines")->required();
    eval_cmd->add_option("--configs", configs, "Benchmark configurations, JSON")->required();
    eval_cmd->add_option("--judge", judge, "rule | llm:<provider id>");
    eval_cmd->add_option("--out", eval_out, "Report directory");
    auto* workers_opt = eval_cmd->add_option("--workers", workers, "Parallel questions")->check(CLI::PositiveNumber);

    std::string export_out;
    std::string pairs_path;
    auto* export_cmd = app.add_subcommand("export-finetune", "Write the fine-tune dataset and manifest");
    export_cmd->add_option("--out", export_out, "Dataset path (JSON Lines)")->required();
    export_cmd->add_option("--pairs", pairs_path, "Additional Q&A pairs to include, JSON Lines");

    bool list_json = false;
    auto* list_cmd = app.add_subcommand("feedback-list", "List feedback entries");
    list_cmd->add_flag("--json", list_json, "One JSON object per line");

    std::string entry_id;
    std::string disposition_name;
    std::string correction;
    auto* curate_cmd = app.add_subcommand("curate", "Set the disposition of a pending feedback entry");
    curate_cmd->add_option("--entry", entry_id, "Feedback entry id")->required();
    curate_cmd->add_option("--disposition", disposition_name, "approve_finetune | approve_corpus | rejected")
        ->required()
        ->check(CLI::IsMember({"approve_finetune", "approve_corpus", "rejected"}));
    curate_cmd->add_option("--correction", correction, "Corrected answer");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    if (ingest_cmd->parsed() && (*size_opt || *overlap_opt)) {
        const std::size_t size = *size_opt ? chunk_size : ingest::kDefaultChunkSize;
        const std::size_t ov = *overlap_opt ? overlap : ingest::kDefaultChunkOverlap;
        if (size == 0 || ov >= size) {
            err << "error: --overlap must be smaller than --chunk-size\n";
            return kExitUsage;
        }
    }
    if (query_cmd->parsed() && text::trim(question).empty()) {
        err << "error: --q must not be empty\n";
        return kExitUsage;
    }

    try {
        auto config = load_service_config(config_path);

        if (ingest_cmd->parsed()) {
            if (*size_opt) config.chunk_size = chunk_size;
            if (*overlap_opt) config.chunk_overlap = overlap;
            if (config.chunk_overlap >= config.chunk_size) {
                err << "error: overlap must be smaller than chunk size\n";
                return kExitUsage;
            }
            service::Engine engine(config);
            const auto counts = engine.ingest_external(ingest_path);
            for (const auto& f : counts.failures) spdlog::warn("skipped {}: {} ({})", f.path, f.message, f.error);
            out << json{{"documents", counts.documents}, {"chunks", counts.chunks}}.dump() << "\n";
            return kExitOk;
        }

        if (query_cmd->parsed()) {
            service::Engine engine(config);
            json overrides = json::object();
            if (!chain.empty()) overrides["chain"] = chain;
            if (*k_opt) overrides["k"] = k;
            const auto result = engine.ask(question, overrides);
            spdlog::info("response_id {} latency {:.3f}s", result.response_id, result.payload.latency_seconds);
            if (as_json) {
                json payload = rag::stable_json(result.payload);
                if (with_timing) payload["latency"] = result.payload.latency_seconds;
                out << payload.dump() << "\n";
            } else {
                print_answer(out, result.payload);
            }
            return kExitOk;
        }

        if (serve_cmd->parsed()) {
            if (!host.empty()) config.host = host;
            if (port >= 0) config.port = port;
            service::Engine engine(config);
            service::Server server(engine);
            const int bound = server.bind(config.host, config.port);
            g_server = &server;
            std::signal(SIGINT, handle_stop_signal);
            std::signal(SIGTERM, handle_stop_signal);
            spdlog::info("listening on {}:{} ({} chunks indexed)", config.host, bound, engine.index_count());
            server.serve();
            g_server = nullptr;
            return kExitOk;
        }

        if (eval_cmd->parsed()) {
            service::Engine engine(config);
            service::EvalRequest request;
            request.dataset = dataset;
            if (!fs::is_regular_file(request.dataset)) {
                throw Error(ErrorCode::NotFound, "dataset is not readable", dataset);
            }
            request.configs = eval::read_configs(configs);
            request.judge = judge;
            if (*workers_opt) request.workers = workers;
            if (!eval_out.empty()) request.artifact_dir = eval_out;
            const auto run = engine.run_eval(request);
            spdlog::info("reports written to {}", run.artifact_dir.string());
            out << eval::render_metrics_table(*run.report);
            return kExitOk;
        }

        if (export_cmd->parsed()) {
            service::Engine engine(config);
            std::vector<ingest::QAPair> pairs;
            if (!pairs_path.empty()) pairs = ingest::read_qa_jsonl(pairs_path);
            const auto manifest = engine.export_finetune(export_out, pairs);
            out << json(manifest).dump() << "\n";
            return kExitOk;
        }

        if (list_cmd->parsed()) {
            service::Engine engine(config);
            for (const auto& entry : engine.feedback_entries()) {
                if (list_json) {
                    out << json(entry).dump() << "\n";
                } else {
                    out << entry.id << "  " << entry.rating << "  " << feedback::to_string(entry.disposition) << "  "
                        << entry.response_id << "  " << entry.comment.value_or("") << "\n";
                }
            }
            return kExitOk;
        }

        if (curate_cmd->parsed()) {
            service::Engine engine(config);
            std::optional<std::string> corrected;
            if (!correction.empty()) corrected = correction;
            const auto result =
                engine.curate(entry_id, *feedback::parse_disposition(disposition_name), corrected);
            out << json(result.entry).dump() << "\n";
            return kExitOk;
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}

} // namespace fiscalrag::cli
