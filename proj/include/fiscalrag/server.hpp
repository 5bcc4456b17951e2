#pragma once

#include "fiscalrag/service.hpp"

#include <memory>
#include <string>

namespace fiscalrag::service {

/// JSON-over-HTTP front end for an Engine.
///
///   POST /ask             {question, overrides?}         200 payload + response_id
///   POST /feedback        {response_id, rating, comment?} 201 entry
///   POST /curate          {entry_id, disposition, corrected_answer?}
///   POST /ingest          {path} | {document: {source_uri, text, format?, metadata?}}
///   POST /eval/run        {dataset, configs, judge?, workers?} 202 run id
///   GET  /eval/report/:id status plus report once done
///   GET  /chunks/:key     chunk text and span for source previews
///   GET  /health          {status, index_count, version, index_version}
///
/// Errors are {"error": code, "message": text}; 500s carry only an opaque
/// error_id, with details going to the log.
class Server {
public:
    explicit Server(Engine& engine);
    ~Server();

    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// Binds without serving. Port 0 picks a free port; returns the bound port.
    int bind(const std::string& host, int port);
    /// Blocks until stop().
    void serve();
    void stop();
    bool running() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace fiscalrag::service
