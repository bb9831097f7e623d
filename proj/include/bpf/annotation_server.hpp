#pragma once

#include <memory>
#include <optional>
#include <string>

#include "bpf/annotation.hpp"

namespace httplib {
class Server;
}

namespace bpf {

/// REST front end for an AnnotationService:
///
///   POST /v1/sessions                 {corpus_path}     -> 201 {session_id, item_count}
///   GET  /v1/sessions/{id}                               -> {state, labeled, total}
///   GET  /v1/sessions/{id}/next                          -> item | 204
///   POST /v1/sessions/{id}/labels     {item_id, label}  -> 200 | 400 | 404 | 409
///   POST /v1/sessions/{id}/finalize                      -> {output_path, counts} | 409
///   GET  /v1/sessions/{id}/export                        -> labeled JSONL | 409
///
/// Errors are `{"error": message}`; 409s from pending items also carry `pending`.
class AnnotationServer {
public:
    AnnotationServer(AnnotationService& service, std::optional<std::string> bearer_token = std::nullopt);
    ~AnnotationServer();
    AnnotationServer(const AnnotationServer&) = delete;
    AnnotationServer& operator=(const AnnotationServer&) = delete;

    /// Binds to `port` (0 picks a free one) and returns the bound port, or -1.
    int bind(const std::string& host, int port);
    /// Serves until stop(); call after bind().
    bool listen();
    void stop();
    void wait_until_ready() const;

private:
    void install_routes();

    AnnotationService& service_;
    std::optional<std::string> token_;
    std::unique_ptr<httplib::Server> server_;
};

} // namespace bpf
