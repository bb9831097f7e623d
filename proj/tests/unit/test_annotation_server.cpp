#include <gtest/gtest.h>

#include <httplib.h>

#include <thread>

#include "bpf/annotation_server.hpp"
#include "fixtures.hpp"
#include "test_util.hpp"

using namespace bpf;
using testutil::TempDir;

namespace {

class Harness {
public:
    explicit Harness(std::optional<std::string> token = std::nullopt)
        : service_(dir_ / "data"), server_(service_, std::move(token)) {
        fixtures::write_six_item_corpus(dir_ / "clustered.jsonl");
        port_ = server_.bind("127.0.0.1", 0);
        thread_ = std::thread([this] { server_.listen(); });
        server_.wait_until_ready();
    }
    ~Harness() {
        server_.stop();
        thread_.join();
    }

    httplib::Client client(const std::string& token = {}) const {
        httplib::Client c("127.0.0.1", port_);
        if (!token.empty()) c.set_bearer_token_auth(token);
        return c;
    }
    std::string corpus_path() const { return (dir_ / "clustered.jsonl").string(); }
    AnnotationService& service() { return service_; }
    int port() const { return port_; }

private:
    TempDir dir_;
    AnnotationService service_;
    AnnotationServer server_;
    std::thread thread_;
    int port_ = 0;
};

json parsed(const httplib::Result& r) { return json::parse(r->body); }

std::string create(httplib::Client& c, const std::string& corpus) {
    auto r = c.Post("/v1/sessions", json{{"corpus_path", corpus}}.dump(), "application/json");
    EXPECT_EQ(r->status, 201);
    return parsed(r)["session_id"].get<std::string>();
}

} // namespace

TEST(AnnotationServer, FullSessionOverHttp) {
    Harness h;
    auto c = h.client();
    auto id = create(c, h.corpus_path());

    auto st = c.Get("/v1/sessions/" + id);
    ASSERT_EQ(st->status, 200);
    EXPECT_EQ(parsed(st)["total"], 6);
    EXPECT_EQ(parsed(st)["state"], "open");

    int labeled = 0;
    while (true) {
        auto next = c.Get("/v1/sessions/" + id + "/next");
        ASSERT_TRUE(next);
        if (next->status == 204) break;
        ASSERT_EQ(next->status, 200);
        auto item = parsed(next);
        EXPECT_EQ(item["progress"]["labeled"], labeled);
        EXPECT_TRUE(item.contains("neighbors"));
        EXPECT_TRUE(item.contains("cluster_size"));
        auto post = c.Post("/v1/sessions/" + id + "/labels",
                           json{{"item_id", item["item_id"]}, {"label", item["predicted_label"]}}.dump(), "application/json");
        ASSERT_EQ(post->status, 200);
        EXPECT_EQ(parsed(post)["changed"], true);
        ++labeled;
    }
    EXPECT_EQ(labeled, 6);

    auto fin = c.Post("/v1/sessions/" + id + "/finalize", "", "application/json");
    ASSERT_EQ(fin->status, 200);
    EXPECT_EQ(parsed(fin)["counts"]["total"], 12);
    EXPECT_EQ(parsed(c.Get("/v1/sessions/" + id))["state"], "finalized");

    auto exported = c.Get("/v1/sessions/" + id + "/export");
    ASSERT_EQ(exported->status, 200);
    EXPECT_EQ(exported->body, h.service().export_jsonl(id));
}

TEST(AnnotationServer, EarlyFinalizeIs409WithPending) {
    Harness h;
    auto c = h.client();
    auto id = create(c, h.corpus_path());
    auto fin = c.Post("/v1/sessions/" + id + "/finalize", "", "application/json");
    ASSERT_EQ(fin->status, 409);
    EXPECT_EQ(parsed(fin)["pending"].size(), 6u);
    EXPECT_EQ(c.Get("/v1/sessions/" + id + "/export")->status, 409);
}

TEST(AnnotationServer, ErrorStatuses) {
    Harness h;
    auto c = h.client();
    EXPECT_EQ(c.Get("/v1/sessions/unknown")->status, 404);
    EXPECT_EQ(c.Post("/v1/sessions", json{{"corpus_path", "/no/such/file.jsonl"}}.dump(), "application/json")->status, 404);
    EXPECT_EQ(c.Post("/v1/sessions", "not json", "application/json")->status, 400);

    auto id = create(c, h.corpus_path());
    auto bad_label = c.Post("/v1/sessions/" + id + "/labels",
                            json{{"item_id", h.service().items(id)[0].item_id}, {"label", "advice!"}}.dump(),
                            "application/json");
    EXPECT_EQ(bad_label->status, 400);
    auto unknown_item = c.Post("/v1/sessions/" + id + "/labels", json{{"item_id", "zzz"}, {"label", "health-advice"}}.dump(),
                               "application/json");
    EXPECT_EQ(unknown_item->status, 404);

    const auto item = h.service().items(id)[0].item_id;
    auto first = c.Post("/v1/sessions/" + id + "/labels", json{{"item_id", item}, {"label", "health-advice"}}.dump(),
                        "application/json");
    EXPECT_EQ(first->status, 200);
    auto same = c.Post("/v1/sessions/" + id + "/labels", json{{"item_id", item}, {"label", "health-advice"}}.dump(),
                       "application/json");
    EXPECT_EQ(same->status, 200);
    EXPECT_EQ(parsed(same)["changed"], false);
    auto relabel = c.Post("/v1/sessions/" + id + "/labels", json{{"item_id", item}, {"label", "general-content"}}.dump(),
                          "application/json");
    EXPECT_EQ(relabel->status, 409);
}

TEST(AnnotationServer, BearerTokenRequiredWhenConfigured) {
    Harness h("tok");
    auto anonymous = h.client();
    EXPECT_EQ(anonymous.Get("/v1/sessions/x")->status, 401);
    auto wrong = h.client("other");
    EXPECT_EQ(wrong.Get("/v1/sessions/x")->status, 401);
    auto right = h.client("tok");
    EXPECT_EQ(right.Get("/v1/sessions/x")->status, 404);
}

TEST(AnnotationServer, CorsPreflight) {
    Harness h("tok");
    auto c = h.client();
    auto r = c.Options("/v1/sessions");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 204);
    EXPECT_EQ(r->get_header_value("Access-Control-Allow-Origin"), "*");
}

TEST(AnnotationServer, RefreshRestoresProgress) {
    Harness h;
    auto c = h.client();
    auto id = create(c, h.corpus_path());
    auto item = parsed(c.Get("/v1/sessions/" + id + "/next"));
    c.Post("/v1/sessions/" + id + "/labels", json{{"item_id", item["item_id"]}, {"label", "health-content"}}.dump(),
           "application/json");
    auto fresh = h.client();
    auto st = parsed(fresh.Get("/v1/sessions/" + id));
    EXPECT_EQ(st["labeled"], 1);
    EXPECT_NE(parsed(fresh.Get("/v1/sessions/" + id + "/next"))["item_id"], item["item_id"]);
}
