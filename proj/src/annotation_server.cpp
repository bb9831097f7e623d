#include "bpf/annotation_server.hpp"

#include <httplib.h>

#include "bpf/error.hpp"

namespace bpf {
namespace {

void reply_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& message, const json& extra = json::object()) {
    json body = extra;
    body["error"] = message;
    reply_json(res, status, body);
}

// Maps library errors onto HTTP statuses.
template <typename Handler>
httplib::Server::Handler guarded(Handler handler) {
    return [handler](const httplib::Request& req, httplib::Response& res) {
        try {
            handler(req, res);
        } catch (const NotFoundError& e) {
            reply_error(res, 404, e.what());
        } catch (const ConflictError& e) {
            reply_error(res, 409, e.what(), json{{"pending", e.ids()}});
        } catch (const ParseError& e) {
            reply_error(res, 400, e.what());
        } catch (const PreconditionError& e) {
            reply_error(res, 400, e.what());
        } catch (const json::exception& e) {
            reply_error(res, 400, std::string("bad request body: ") + e.what());
        } catch (const std::exception& e) {
            reply_error(res, 500, e.what());
        }
    };
}

json parse_body(const httplib::Request& req) {
    auto body = json::parse(req.body, nullptr, false);
    if (!body.is_object()) throw PreconditionError("request body must be a JSON object");
    return body;
}

} // namespace

AnnotationServer::AnnotationServer(AnnotationService& service, std::optional<std::string> bearer_token)
    : service_(service), token_(std::move(bearer_token)), server_(std::make_unique<httplib::Server>()) {
    install_routes();
}

AnnotationServer::~AnnotationServer() { stop(); }

int AnnotationServer::bind(const std::string& host, int port) {
    if (port == 0) return server_->bind_to_any_port(host);
    return server_->bind_to_port(host, port) ? port : -1;
}

bool AnnotationServer::listen() { return server_->listen_after_bind(); }

void AnnotationServer::stop() {
    if (server_) server_->stop();
}

void AnnotationServer::wait_until_ready() const { server_->wait_until_ready(); }

void AnnotationServer::install_routes() {
    auto& srv = *server_;

    srv.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Origin", "*");
        res.set_header("Access-Control-Allow-Headers", "Authorization, Content-Type");
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        if (req.method == "OPTIONS") {
            res.status = 204;
            return httplib::Server::HandlerResponse::Handled;
        }
        if (token_ && req.get_header_value("Authorization") != "Bearer " + *token_) {
            reply_error(res, 401, "missing or invalid bearer token");
            return httplib::Server::HandlerResponse::Handled;
        }
        return httplib::Server::HandlerResponse::Unhandled;
    });

    srv.Post("/v1/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
                 auto body = parse_body(req);
                 auto path = body.at("corpus_path").get<std::string>();
                 if (!std::filesystem::exists(path)) throw NotFoundError("corpus not found: " + path);
                 auto id = service_.create_session(path);
                 reply_json(res, 201, {{"session_id", id}, {"item_count", service_.status(id).total}});
             }));

    srv.Get(R"(/v1/sessions/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
                auto st = service_.status(req.matches[1]);
                reply_json(res, 200, {{"state", to_string(st.state)}, {"labeled", st.labeled}, {"total", st.total}});
            }));

    srv.Get(R"(/v1/sessions/([^/]+)/next)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                const std::string id = req.matches[1];
                auto item = service_.next_item(id);
                if (!item) {
                    res.status = 204;
                    return;
                }
                auto st = service_.status(id);
                auto body = to_json(*item);
                body["progress"] = {{"labeled", st.labeled}, {"total", st.total}};
                reply_json(res, 200, body);
            }));

    srv.Post(R"(/v1/sessions/([^/]+)/labels)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                 const std::string id = req.matches[1];
                 auto body = parse_body(req);
                 auto label = parse_label(body.at("label").get<std::string>());
                 bool changed = service_.submit_label(id, body.at("item_id").get<std::string>(), label);
                 auto st = service_.status(id);
                 reply_json(res, 200, {{"changed", changed}, {"labeled", st.labeled}, {"total", st.total}});
             }));

    srv.Post(R"(/v1/sessions/([^/]+)/finalize)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                 auto result = service_.finalize(req.matches[1]);
                 reply_json(res, 200, {{"output_path", result.output_path.string()}, {"counts", to_json(result.counts)}});
             }));

    srv.Get(R"(/v1/sessions/([^/]+)/export)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                res.status = 200;
                res.set_content(service_.export_jsonl(req.matches[1]), "application/x-ndjson");
            }));
}

} // namespace bpf
