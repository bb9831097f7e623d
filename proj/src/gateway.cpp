#include "bpf/gateway.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "bpf/error.hpp"
#include "bpf/log.hpp"

namespace bpf {

// ---- GenParams ------------------------------------------------------------

void GenParams::validate() const {
    if (min_new_tokens > max_new_tokens) {
        throw PreconditionError("min_new_tokens (" + std::to_string(min_new_tokens) + ") exceeds max_new_tokens (" +
                                std::to_string(max_new_tokens) + ")");
    }
    if (!std::isfinite(temperature) || temperature < 0.0) throw PreconditionError("temperature must be finite and >= 0");
}

json to_json(const GenParams& p) {
    json out{{"min_new_tokens", p.min_new_tokens},   {"max_new_tokens", p.max_new_tokens},
             {"temperature", p.temperature},         {"no_repeat_ngram", p.no_repeat_ngram},
             {"renormalize_logits", p.renormalize_logits}};
    out["seed"] = p.seed ? json(*p.seed) : json(nullptr);
    return out;
}

GenParams gen_params_from_json(const json& object) {
    GenParams p;
    if (!object.is_object()) throw ConfigError("gen_params must be an object");
    try {
        p.min_new_tokens = object.value("min_new_tokens", p.min_new_tokens);
        p.max_new_tokens = object.value("max_new_tokens", p.max_new_tokens);
        p.temperature = object.value("temperature", p.temperature);
        p.no_repeat_ngram = object.value("no_repeat_ngram", p.no_repeat_ngram);
        p.renormalize_logits = object.value("renormalize_logits", p.renormalize_logits);
        if (auto it = object.find("seed"); it != object.end() && !it->is_null()) p.seed = it->get<std::int64_t>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("gen_params: ") + e.what());
    }
    p.validate();
    return p;
}

// ---- ConcurrencyLimiter ---------------------------------------------------

ConcurrencyLimiter::ConcurrencyLimiter(std::size_t limit) : limit_(limit == 0 ? 1 : limit) {}

ConcurrencyLimiter::Permit ConcurrencyLimiter::acquire() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return in_flight_ < limit_; });
    ++in_flight_;
    peak_ = std::max(peak_, in_flight_);
    return Permit(*this);
}

void ConcurrencyLimiter::release() {
    {
        std::lock_guard lock(mutex_);
        --in_flight_;
    }
    cv_.notify_one();
}

std::size_t ConcurrencyLimiter::peak() const {
    std::lock_guard lock(mutex_);
    return peak_;
}

std::shared_ptr<ConcurrencyLimiter> ConcurrencyLimiter::for_backend(const std::string& key, std::size_t limit) {
    static std::mutex registry_mutex;
    static std::map<std::string, std::weak_ptr<ConcurrencyLimiter>> registry;
    std::lock_guard lock(registry_mutex);
    if (auto existing = registry[key].lock()) return existing;
    auto created = std::make_shared<ConcurrencyLimiter>(limit);
    registry[key] = created;
    return created;
}

void RetryPolicy::wait_before_retry(std::size_t retry_index) const {
    if (backoff.empty()) return;
    auto delay = backoff[std::min(retry_index, backoff.size() - 1)];
    if (sleep) {
        sleep(delay);
    } else {
        std::this_thread::sleep_for(delay);
    }
}

// ---- checked public entry points -------------------------------------------

std::string TextGenerator::generate(const std::string& prompt, const GenParams& params) {
    params.validate();
    if (prompt.empty()) throw PreconditionError("prompt is empty");
    return do_generate(prompt, params);
}

namespace {

void check_vectors(const std::vector<Vector>& vectors, std::size_t expected_count, const std::string& backend) {
    if (vectors.size() != expected_count) {
        throw Error(backend + ": returned " + std::to_string(vectors.size()) + " vectors for " +
                    std::to_string(expected_count) + " inputs");
    }
    for (const auto& v : vectors) {
        if (v.size() != vectors.front().size()) throw Error(backend + ": embedding dimension drift within a batch");
        for (double x : v) {
            if (!std::isfinite(x)) throw Error(backend + ": non-finite embedding value");
        }
    }
}

} // namespace

std::vector<Vector> Embedder::embed(const std::vector<std::string>& texts) {
    for (const auto& t : texts) {
        if (t.empty()) throw PreconditionError("cannot embed empty text");
    }
    auto out = do_embed(texts);
    check_vectors(out, texts.size(), id());
    return out;
}

std::vector<TokenEmbedding> Embedder::embed_tokens(const std::string& text) {
    if (text.empty()) throw PreconditionError("cannot embed empty text");
    auto out = do_embed_tokens(text);
    for (const auto& t : out) {
        if (t.vector.size() != out.front().vector.size()) throw Error(id() + ": token embedding dimension drift");
    }
    return out;
}

std::vector<ClassifierOutput> Classifier::classify(const std::vector<std::string>& texts) {
    if (texts.empty()) throw PreconditionError("nothing to classify");
    for (const auto& t : texts) {
        if (t.empty()) throw PreconditionError("cannot classify empty text");
    }
    auto out = do_classify(texts);
    std::vector<Vector> embeddings;
    embeddings.reserve(out.size());
    for (const auto& o : out) embeddings.push_back(o.embedding);
    check_vectors(embeddings, texts.size(), id());
    return out;
}

// ---- mocks ------------------------------------------------------------------

MockGenerator::MockGenerator(std::map<std::string, std::string> fixtures, std::size_t max_in_flight)
    : fixtures_(std::move(fixtures)), max_in_flight_(max_in_flight) {}

std::size_t MockGenerator::calls() const {
    std::lock_guard lock(mutex_);
    return calls_;
}

std::string MockGenerator::do_generate(const std::string& prompt, const GenParams&) {
    {
        std::lock_guard lock(mutex_);
        ++calls_;
    }
    if (auto it = fixtures_.find(prompt); it != fixtures_.end()) return it->second;

    std::string last;
    std::istringstream lines(prompt);
    for (std::string line; std::getline(lines, line);) {
        if (line.find_first_not_of(" \t\r") != std::string::npos) last = line;
    }
    return "ECHO: " + last;
}

Vector letter_frequency_vector(std::string_view text) {
    Vector v(26, 0.0);
    for (unsigned char c : text) {
        auto lower = static_cast<unsigned char>(std::tolower(c));
        if (lower >= 'a' && lower <= 'z') v[lower - 'a'] += 1.0;
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm > 0.0) {
        norm = std::sqrt(norm);
        for (double& x : v) x /= norm;
    }
    return v;
}

std::vector<Vector> MockEmbedder::do_embed(const std::vector<std::string>& texts) {
    std::vector<Vector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(letter_frequency_vector(t));
    return out;
}

std::vector<TokenEmbedding> MockEmbedder::do_embed_tokens(const std::string& text) {
    std::vector<TokenEmbedding> out;
    std::istringstream words(text);
    for (std::string token; words >> token;) out.push_back({token, letter_frequency_vector(token)});
    return out;
}

LabelClass mock_classify_label(std::string_view text) {
    std::string lower(text);
    for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    auto has = [&](std::string_view word) { return lower.find(word) != std::string::npos; };
    if (has("should") || has("recommend")) return LabelClass::HealthAdvice;
    if (has("health") || has("doctor") || has("patient") || has("disease")) return LabelClass::HealthContent;
    return LabelClass::GeneralContent;
}

std::vector<ClassifierOutput> MockClassifier::do_classify(const std::vector<std::string>& texts) {
    std::vector<ClassifierOutput> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back({mock_classify_label(t), letter_frequency_vector(t)});
    return out;
}

// ---- HTTP transport -----------------------------------------------------------

HttpBackendConfig http_config_from_json(const json& object) {
    HttpBackendConfig c;
    try {
        c.base_url = object.at("base_url").get<std::string>();
        c.model = object.value("model", std::string{});
        if (auto it = object.find("api_token"); it != object.end() && it->is_string()) c.api_token = it->get<std::string>();
        c.max_in_flight = object.value("max_in_flight", c.max_in_flight);
        c.timeout = std::chrono::seconds(object.value("timeout_s", static_cast<long>(c.timeout.count())));
        c.extended_sampling = object.value("extended_sampling", c.extended_sampling);
        if (auto it = object.find("max_retries"); it != object.end()) c.retry.max_retries = it->get<std::size_t>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("http backend: ") + e.what());
    }
    if (c.base_url.rfind("http://", 0) != 0 && c.base_url.rfind("https://", 0) != 0) {
        throw ConfigError("http backend: base_url must start with http:// or https://");
    }
    return c;
}

class HttpTransport {
public:
    explicit HttpTransport(const HttpBackendConfig& config)
        : retry_(config.retry) {
        auto scheme_end = config.base_url.find("://");
        auto path_start = config.base_url.find('/', scheme_end + 3);
        origin_ = config.base_url.substr(0, path_start);
        if (path_start != std::string::npos) prefix_ = config.base_url.substr(path_start);
        while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();

        timeout_ = config.timeout;

        std::optional<std::string> token = config.api_token;
        if (!token) {
            if (const char* env = std::getenv("BPF_API_TOKEN"); env && *env) token = env;
        }
        if (token) headers_.emplace("Authorization", "Bearer " + *token);

        limiter_ = ConcurrencyLimiter::for_backend(config.base_url, config.max_in_flight);
    }

    const std::string& origin() const { return origin_; }

    json post(const std::string& path, const json& body) {
        const std::string target = prefix_ + path;
        const std::string payload = body.dump();
        std::string last_error;
        for (std::size_t attempt = 0; attempt <= retry_.max_retries; ++attempt) {
            if (attempt > 0) retry_.wait_before_retry(attempt - 1);
            httplib::Result result = [&] {
                auto permit = limiter_->acquire();
                httplib::Client client(origin_);
                client.set_connection_timeout(timeout_);
                client.set_read_timeout(timeout_);
                client.set_write_timeout(timeout_);
                return client.Post(target, headers_, payload, "application/json");
            }();
            if (!result) {
                last_error = "connection failed: " + httplib::to_string(result.error());
                continue;
            }
            const int status = result->status;
            if (status >= 200 && status < 300) {
                auto parsed = json::parse(result->body, nullptr, false);
                if (parsed.is_discarded()) throw TransportError(origin_ + target + ": invalid JSON response");
                return parsed;
            }
            if (status == 408 || status == 429 || status >= 500) {
                last_error = "HTTP " + std::to_string(status);
                continue;
            }
            auto error_body = json::parse(result->body, nullptr, false);
            if ((status == 400 || status == 422) && error_body.is_object() && error_body.contains("error")) {
                const auto& err = error_body["error"];
                if (err.is_object() && err.contains("param") && err["param"].is_string()) {
                    throw CapabilityError(err["param"].get<std::string>(), err.value("message", std::string("rejected")));
                }
            }
            throw TransportError(origin_ + target + ": HTTP " + std::to_string(status) + ": " + result->body);
        }
        throw TransportError(origin_ + target + ": giving up after " + std::to_string(retry_.max_retries + 1) +
                             " attempts (" + last_error + ")");
    }

private:
    RetryPolicy retry_;
    std::string origin_;
    std::string prefix_;
    httplib::Headers headers_;
    std::chrono::seconds timeout_;
    std::shared_ptr<ConcurrencyLimiter> limiter_;
};

namespace {

Vector vector_from_json(const json& array) {
    if (!array.is_array()) throw TransportError("embedding is not an array");
    Vector v;
    v.reserve(array.size());
    for (const auto& x : array) v.push_back(x.get<double>());
    return v;
}

// Sorts OpenAI-style `data` entries by their optional `index` field.
std::vector<json> indexed_data(const json& response, std::size_t expected) {
    if (!response.contains("data") || !response["data"].is_array()) throw TransportError("response has no 'data' array");
    std::vector<json> items(response["data"].begin(), response["data"].end());
    if (items.size() != expected) throw TransportError("response item count does not match request");
    std::stable_sort(items.begin(), items.end(),
                     [](const json& a, const json& b) { return a.value("index", 0) < b.value("index", 0); });
    return items;
}

} // namespace

HttpGenerator::HttpGenerator(HttpBackendConfig config)
    : config_(std::move(config)), transport_(std::make_unique<HttpTransport>(config_)) {}
HttpGenerator::~HttpGenerator() = default;

std::string HttpGenerator::id() const { return "http-generator:" + config_.model + "@" + config_.base_url; }

json HttpGenerator::request_body(const std::string& prompt, const GenParams& params) const {
    json body{{"model", config_.model},
              {"messages", json::array({json{{"role", "user"}, {"content", prompt}}})},
              {"temperature", params.temperature},
              {"max_tokens", params.max_new_tokens}};
    if (config_.extended_sampling) {
        body["min_tokens"] = params.min_new_tokens;
        body["no_repeat_ngram_size"] = params.no_repeat_ngram;
        body["renormalize_logits"] = params.renormalize_logits;
    }
    if (params.seed) body["seed"] = *params.seed;
    return body;
}

std::string HttpGenerator::do_generate(const std::string& prompt, const GenParams& params) {
    if (!config_.extended_sampling) {
        std::call_once(warned_, [&] {
            log_warning(id() + " does not honor min_new_tokens/no_repeat_ngram/renormalize_logits; "
                               "requested values are kept in provenance only");
        });
    }
    auto response = transport_->post("/chat/completions", request_body(prompt, params));
    try {
        const auto& choice = response.at("choices").at(0);
        if (choice.contains("message")) return choice["message"].at("content").get<std::string>();
        return choice.at("text").get<std::string>();
    } catch (const json::exception& e) {
        throw TransportError(id() + ": malformed completion response: " + e.what());
    }
}

HttpEmbedder::HttpEmbedder(HttpBackendConfig config)
    : config_(std::move(config)), transport_(std::make_unique<HttpTransport>(config_)) {}
HttpEmbedder::~HttpEmbedder() = default;

std::string HttpEmbedder::id() const { return "http-embedder:" + config_.model + "@" + config_.base_url; }

std::vector<Vector> HttpEmbedder::do_embed(const std::vector<std::string>& texts) {
    auto response = transport_->post("/embeddings", json{{"model", config_.model}, {"input", texts}});
    std::vector<Vector> out;
    try {
        for (const auto& item : indexed_data(response, texts.size())) out.push_back(vector_from_json(item.at("embedding")));
    } catch (const json::exception& e) {
        throw TransportError(id() + ": malformed embeddings response: " + e.what());
    }
    return out;
}

std::vector<TokenEmbedding> HttpEmbedder::do_embed_tokens(const std::string& text) {
    auto response = transport_->post("/token_embeddings", json{{"model", config_.model}, {"input", text}});
    std::vector<TokenEmbedding> out;
    try {
        const auto item = indexed_data(response, 1).front();
        const auto& tokens = item.at("tokens");
        const auto& vectors = item.at("embeddings");
        if (tokens.size() != vectors.size()) throw TransportError(id() + ": token/embedding count mismatch");
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            out.push_back({tokens[i].get<std::string>(), vector_from_json(vectors[i])});
        }
    } catch (const json::exception& e) {
        throw TransportError(id() + ": malformed token embeddings response: " + e.what());
    }
    return out;
}

HttpClassifier::HttpClassifier(HttpBackendConfig config)
    : config_(std::move(config)), transport_(std::make_unique<HttpTransport>(config_)) {}
HttpClassifier::~HttpClassifier() = default;

std::string HttpClassifier::id() const { return "http-classifier:" + config_.model + "@" + config_.base_url; }

std::vector<ClassifierOutput> HttpClassifier::do_classify(const std::vector<std::string>& texts) {
    auto response = transport_->post("/classify", json{{"model", config_.model}, {"input", texts}});
    std::vector<ClassifierOutput> out;
    try {
        for (const auto& item : indexed_data(response, texts.size())) {
            out.push_back({parse_label(item.at("label").get<std::string>()), vector_from_json(item.at("embedding"))});
        }
    } catch (const json::exception& e) {
        throw TransportError(id() + ": malformed classify response: " + e.what());
    }
    return out;
}

// ---- factories --------------------------------------------------------------

namespace {

std::string backend_kind(const json& config) {
    if (config.is_null()) return "mock";
    if (!config.is_object()) throw ConfigError("backend config must be an object");
    auto kind = config.value("kind", std::string("mock"));
    if (kind != "mock" && kind != "http") throw ConfigError("unknown backend kind '" + kind + "' (expected mock|http)");
    return kind;
}

} // namespace

std::unique_ptr<TextGenerator> make_generator(const json& config) {
    if (backend_kind(config) == "http") return std::make_unique<HttpGenerator>(http_config_from_json(config));
    std::map<std::string, std::string> fixtures;
    if (config.is_object()) {
        if (auto it = config.find("fixtures_path"); it != config.end()) {
            auto loaded = json::parse(read_file(it->get<std::string>()), nullptr, false);
            if (!loaded.is_object()) throw ConfigError("fixtures_path must hold a JSON object");
            for (const auto& [k, v] : loaded.items()) fixtures[k] = v.get<std::string>();
        }
        if (auto it = config.find("fixtures"); it != config.end()) {
            for (const auto& [k, v] : it->items()) fixtures[k] = v.get<std::string>();
        }
    }
    std::size_t bound = config.is_object() ? config.value("max_in_flight", std::size_t{4}) : 4;
    return std::make_unique<MockGenerator>(std::move(fixtures), bound);
}

std::unique_ptr<Embedder> make_embedder(const json& config) {
    if (backend_kind(config) == "http") return std::make_unique<HttpEmbedder>(http_config_from_json(config));
    return std::make_unique<MockEmbedder>();
}

std::unique_ptr<Classifier> make_classifier(const json& config) {
    if (backend_kind(config) == "http") return std::make_unique<HttpClassifier>(http_config_from_json(config));
    return std::make_unique<MockClassifier>();
}

} // namespace bpf
