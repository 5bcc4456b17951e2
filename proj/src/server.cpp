#include "fiscalrag/server.hpp"
#include "fiscalrag/error.hpp"
#include "fiscalrag/text.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdlib>

using json = nlohmann::json;

namespace fiscalrag::service {

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
    send_json(res, status, {{"error", code}, {"message", message}});
}

int status_for(ErrorCode code) {
    switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::InvalidRating:
    case ErrorCode::InvalidParams:
    case ErrorCode::PathTraversal:
    case ErrorCode::MissingCorrection:
        return 400;
    case ErrorCode::NotFound:
    case ErrorCode::UnknownResponse:
    case ErrorCode::UnknownEntry:
        return 404;
    case ErrorCode::AlreadyCurated:
        return 409;
    case ErrorCode::UnsupportedFormat:
    case ErrorCode::Undecodable:
    case ErrorCode::EmptyDocument:
    case ErrorCode::EmptyText:
    case ErrorCode::ContextBudgetExceeded:
    case ErrorCode::ContextTooLarge:
    case ErrorCode::EmptySelection:
        return 422;
    case ErrorCode::ProviderUnavailable:
    case ErrorCode::Timeout:
    case ErrorCode::EmptyIndex:
        return 503;
    default:
        return 500;
    }
}

/// Parses the body as a JSON object or answers 400.
std::optional<json> parse_body(const httplib::Request& req, httplib::Response& res) {
    try {
        auto body = json::parse(req.body);
        if (body.is_object()) return body;
    } catch (const json::exception&) {
    }
    send_error(res, 400, "MalformedRequest", "body must be a JSON object");
    return std::nullopt;
}

json run_json(const EvalRun& run) {
    json j{{"run_id", run.id}, {"status", to_string(run.status)}};
    if (run.report) {
        j["report"] = eval::report_to_json(*run.report);
        j["table"] = eval::render_metrics_table(*run.report);
    }
    if (!run.error.empty()) j["error"] = run.error;
    return j;
}

} // namespace

struct Server::Impl {
    explicit Impl(Engine& e) : engine(e) {}

    Engine& engine;
    httplib::Server http;
    std::optional<std::string> token;

    // Wraps a handler so library errors map to status codes and anything
    // unexpected becomes an opaque 500.
    template <typename F>
    auto guarded(F&& handler) {
        return [this, handler = std::forward<F>(handler)](const httplib::Request& req, httplib::Response& res) {
            try {
                handler(req, res);
            } catch (const Error& e) {
                const int status = status_for(e.code());
                if (status == 500) {
                    fail_opaque(req, res, e.what());
                } else {
                    send_error(res, status, to_string(e.code()), e.what());
                }
            } catch (const std::exception& e) {
                fail_opaque(req, res, e.what());
            }
        };
    }

    static void fail_opaque(const httplib::Request& req, httplib::Response& res, const std::string& detail) {
        const auto id = text::random_token_hex(8);
        spdlog::error("{} {} failed [{}]: {}", req.method, req.path, id, detail);
        send_json(res, 500, {{"error", "Internal"}, {"error_id", id}});
    }

    void routes() {
        http.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
            if (!token || req.path == "/health") return httplib::Server::HandlerResponse::Unhandled;
            if (req.get_header_value("Authorization") == "Bearer " + *token) {
                return httplib::Server::HandlerResponse::Unhandled;
            }
            send_error(res, 401, "Unauthorized", "missing or wrong bearer token");
            return httplib::Server::HandlerResponse::Handled;
        });

        http.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
            send_json(res, 200,
                      {{"status", "ok"},
                       {"index_count", engine.index_count()},
                       {"version", kVersion},
                       {"index_version", engine.index_version()}});
        });

        http.Post("/ask", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto body = parse_body(req, res);
            if (!body) return;
            if (!body->contains("question") || !(*body)["question"].is_string()) {
                return send_error(res, 400, "MalformedRequest", "question must be a string");
            }
            const auto question = (*body)["question"].get<std::string>();
            if (text::trim(question).empty()) {
                return send_error(res, 422, "InvalidArgument", "question is empty");
            }
            const auto overrides = body->value("overrides", json::object());
            if (!overrides.is_object()) return send_error(res, 400, "MalformedRequest", "overrides must be an object");
            const auto result = engine.ask(question, overrides);
            json out = result.payload;
            out["response_id"] = result.response_id;
            send_json(res, 200, out);
        }));

        http.Post("/feedback", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto body = parse_body(req, res);
            if (!body) return;
            const auto& b = *body;
            if (!b.contains("response_id") || !b["response_id"].is_string()) {
                return send_error(res, 400, "MalformedRequest", "response_id must be a string");
            }
            if (!b.contains("rating") || !b["rating"].is_number_integer()) {
                return send_error(res, 400, "InvalidRating", "rating must be an integer from 1 to 5");
            }
            std::optional<std::string> comment;
            if (b.contains("comment") && b["comment"].is_string()) comment = b["comment"].get<std::string>();
            const auto entry =
                engine.record_feedback(b["response_id"].get<std::string>(), b["rating"].get<int>(), comment);
            send_json(res, 201, {{"id", entry.id}, {"entry", entry}});
        }));

        http.Post("/curate", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto body = parse_body(req, res);
            if (!body) return;
            const auto& b = *body;
            const auto disposition = feedback::parse_disposition(b.value("disposition", ""));
            if (!b.contains("entry_id") || !b["entry_id"].is_string() || !disposition) {
                return send_error(res, 400, "MalformedRequest", "entry_id and a valid disposition are required");
            }
            std::optional<std::string> corrected;
            if (b.contains("corrected_answer") && b["corrected_answer"].is_string()) {
                corrected = b["corrected_answer"].get<std::string>();
            }
            const auto result = engine.curate(b["entry_id"].get<std::string>(), *disposition, corrected);
            json out{{"entry", result.entry}};
            if (result.corpus_document) out["queued_document"] = "feedback/" + result.entry.id + ".txt";
            send_json(res, 200, out);
        }));

        http.Post("/ingest", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto body = parse_body(req, res);
            if (!body) return;
            const auto& b = *body;
            IngestCounts counts;
            if (b.contains("path") && b["path"].is_string()) {
                counts = engine.ingest_path(b["path"].get<std::string>());
            } else if (b.contains("document") && b["document"].is_object()) {
                const auto& d = b["document"];
                if (!d.contains("source_uri") || !d["source_uri"].is_string() || !d.contains("text") ||
                    !d["text"].is_string()) {
                    return send_error(res, 400, "MalformedRequest", "document needs source_uri and text strings");
                }
                const auto format = ingest::parse_format(d.value("format", "txt"));
                if (!format) return send_error(res, 422, "UnsupportedFormat", "unknown document format");
                std::map<std::string, std::string> metadata;
                const json fields = d.value("metadata", json::object());
                for (const auto& [k, v] : fields.items()) {
                    metadata[k] = v.is_string() ? v.get<std::string>() : v.dump();
                }
                counts = engine.ingest_documents({ingest::make_document(
                    d["source_uri"].get<std::string>(), *format, d["text"].get<std::string>(), std::move(metadata))});
            } else {
                return send_error(res, 400, "MalformedRequest", "expected a path or a document");
            }
            json out = to_json(counts);
            out["index_count"] = engine.index_count();
            send_json(res, 200, out);
        }));

        http.Post("/eval/run", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto body = parse_body(req, res);
            if (!body) return;
            const auto& b = *body;
            if (!b.contains("dataset") || !b["dataset"].is_string() || !b.contains("configs")) {
                return send_error(res, 400, "MalformedRequest", "dataset and configs are required");
            }
            EvalRequest request;
            request.dataset = b["dataset"].get<std::string>();
            request.configs = b["configs"].is_string() ? eval::read_configs(b["configs"].get<std::string>())
                                                       : eval::configs_from_json(b["configs"]);
            request.judge = b.value("judge", "rule");
            if (b.contains("workers")) request.workers = b["workers"].get<std::size_t>();
            const auto id = engine.start_eval(std::move(request));
            send_json(res, 202, {{"run_id", id}, {"status", "running"}});
        }));

        http.Get(R"(/eval/report/([0-9a-f]+))", [this](const httplib::Request& req, httplib::Response& res) {
            const auto run = engine.eval_run(req.matches[1]);
            if (!run) return send_error(res, 404, "NotFound", "unknown run id");
            send_json(res, 200, run_json(*run));
        });

        http.Get(R"(/chunks/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
            const auto entry = engine.chunk(req.matches[1]);
            if (!entry) return send_error(res, 404, "NotFound", "unknown chunk key");
            json metadata = entry->metadata;
            send_json(res, 200,
                      {{"chunk_key", entry->chunk.key()},
                       {"doc_id", entry->chunk.doc_id},
                       {"seq", entry->chunk.seq},
                       {"text", entry->chunk.text},
                       {"span", {entry->chunk.span.start, entry->chunk.span.end}},
                       {"source_uri", entry->metadata.contains("source_uri") ? entry->metadata.at("source_uri") : ""},
                       {"metadata", std::move(metadata)}});
        });

        http.set_error_handler([](const httplib::Request&, httplib::Response& res) {
            if (res.body.empty()) send_error(res, res.status, "HttpError", httplib::status_message(res.status));
        });
    }
};

Server::Server(Engine& engine) : impl_(std::make_unique<Impl>(engine)) {
    const auto& config = engine.config();
    if (config.bearer_token_env) {
        if (const char* value = std::getenv(config.bearer_token_env->c_str()); value && *value) impl_->token = value;
    }
    const auto workers = std::max<std::size_t>(2, config.workers);
    impl_->http.new_task_queue = [workers] { return new httplib::ThreadPool(workers); };
    impl_->routes();
}

Server::~Server() {
    stop();
}

int Server::bind(const std::string& host, int port) {
    if (port == 0) {
        const int bound = impl_->http.bind_to_any_port(host);
        if (bound < 0) throw Error(ErrorCode::IoError, "cannot bind", host);
        return bound;
    }
    if (!impl_->http.bind_to_port(host, port)) {
        throw Error(ErrorCode::IoError, "cannot bind", host + ":" + std::to_string(port));
    }
    return port;
}

void Server::serve() {
    impl_->http.listen_after_bind();
}

void Server::stop() {
    if (impl_->http.is_running()) impl_->http.stop();
}

bool Server::running() const {
    return impl_->http.is_running();
}

} // namespace fiscalrag::service
