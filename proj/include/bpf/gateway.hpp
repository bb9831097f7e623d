#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bpf/jsonl.hpp"
#include "bpf/labels.hpp"

namespace bpf {

using Vector = std::vector<double>;

/// Decoding parameters shared by query and answer generation.
struct GenParams {
    std::size_t min_new_tokens = 5;
    std::size_t max_new_tokens = 250;
    double temperature = 0.6;
    std::size_t no_repeat_ngram = 5;
    bool renormalize_logits = true;
    std::optional<std::int64_t> seed;

    /// Throws PreconditionError when min > max or temperature is negative / non-finite.
    void validate() const;
    bool operator==(const GenParams&) const = default;
};

json to_json(const GenParams& params);
GenParams gen_params_from_json(const json& object);

struct ClassifierOutput {
    LabelClass label;
    Vector embedding;
};

struct TokenEmbedding {
    std::string token;
    Vector vector;
};

/// Process-wide in-flight bound, shared by every client pointing at the same backend key.
class ConcurrencyLimiter {
public:
    explicit ConcurrencyLimiter(std::size_t limit);

    class Permit {
    public:
        explicit Permit(ConcurrencyLimiter& owner) : owner_(&owner) {}
        Permit(Permit&& other) noexcept : owner_(std::exchange(other.owner_, nullptr)) {}
        Permit(const Permit&) = delete;
        Permit& operator=(const Permit&) = delete;
        Permit& operator=(Permit&&) = delete;
        ~Permit() {
            if (owner_) owner_->release();
        }

    private:
        ConcurrencyLimiter* owner_;
    };

    Permit acquire();
    std::size_t limit() const noexcept { return limit_; }
    std::size_t peak() const;

    static std::shared_ptr<ConcurrencyLimiter> for_backend(const std::string& key, std::size_t limit);

private:
    void release();

    std::size_t limit_;
    std::size_t in_flight_ = 0;
    std::size_t peak_ = 0;
    mutable std::mutex mutex_;
    std::condition_variable cv_;
};

struct RetryPolicy {
    // Retries after the first attempt; backoff[i] precedes retry i+1.
    std::size_t max_retries = 3;
    std::vector<std::chrono::milliseconds> backoff{std::chrono::seconds(1), std::chrono::seconds(2),
                                                   std::chrono::seconds(4)};
    std::function<void(std::chrono::milliseconds)> sleep;

    void wait_before_retry(std::size_t retry_index) const;
};

/// Text-generation backend. Public calls check preconditions, then dispatch.
class TextGenerator {
public:
    virtual ~TextGenerator() = default;

    std::string generate(const std::string& prompt, const GenParams& params);

    virtual std::string id() const = 0;
    virtual std::size_t max_in_flight() const { return 4; }

protected:
    virtual std::string do_generate(const std::string& prompt, const GenParams& params) = 0;
};

class Embedder {
public:
    virtual ~Embedder() = default;

    std::vector<Vector> embed(const std::vector<std::string>& texts);
    std::vector<TokenEmbedding> embed_tokens(const std::string& text);

    virtual std::string id() const = 0;

protected:
    virtual std::vector<Vector> do_embed(const std::vector<std::string>& texts) = 0;
    virtual std::vector<TokenEmbedding> do_embed_tokens(const std::string& text) = 0;
};

class Classifier {
public:
    virtual ~Classifier() = default;

    std::vector<ClassifierOutput> classify(const std::vector<std::string>& texts);

    virtual std::string id() const = 0;

protected:
    virtual std::vector<ClassifierOutput> do_classify(const std::vector<std::string>& texts) = 0;
};

// ---- deterministic mocks -------------------------------------------------

/// Exact-match fixture table; otherwise answers `"ECHO: "` + last non-empty prompt line.
class MockGenerator : public TextGenerator {
public:
    explicit MockGenerator(std::map<std::string, std::string> fixtures = {}, std::size_t max_in_flight = 4);

    std::string id() const override { return "mock-generator"; }
    std::size_t max_in_flight() const override { return max_in_flight_; }
    std::size_t calls() const;

protected:
    std::string do_generate(const std::string& prompt, const GenParams& params) override;

private:
    std::map<std::string, std::string> fixtures_;
    std::size_t max_in_flight_;
    mutable std::mutex mutex_;
    std::size_t calls_ = 0;
};

/// 26-dim lowercase-letter frequency vector, L2-normalized; no letters → zero vector.
Vector letter_frequency_vector(std::string_view text);

class MockEmbedder : public Embedder {
public:
    std::string id() const override { return "mock-embedder"; }

protected:
    std::vector<Vector> do_embed(const std::vector<std::string>& texts) override;
    std::vector<TokenEmbedding> do_embed_tokens(const std::string& text) override;
};

/// Keyword rules: "should"/"recommend" → health-advice; "health"/"doctor"/"patient"/"disease"
/// → health-content; else general-content. Embedding = letter_frequency_vector.
LabelClass mock_classify_label(std::string_view text);

class MockClassifier : public Classifier {
public:
    std::string id() const override { return "mock-classifier"; }

protected:
    std::vector<ClassifierOutput> do_classify(const std::vector<std::string>& texts) override;
};

// ---- HTTP (OpenAI-compatible) --------------------------------------------

struct HttpBackendConfig {
    std::string base_url;  // e.g. http://localhost:8000/v1
    std::string model;
    std::optional<std::string> api_token;  // falls back to $BPF_API_TOKEN
    std::size_t max_in_flight = 4;
    std::chrono::seconds timeout{120};
    // Whether the server honors min_tokens / no_repeat_ngram_size / renormalize_logits.
    bool extended_sampling = true;
    RetryPolicy retry;
};

HttpBackendConfig http_config_from_json(const json& object);

class HttpTransport;

class HttpGenerator : public TextGenerator {
public:
    explicit HttpGenerator(HttpBackendConfig config);
    ~HttpGenerator() override;

    std::string id() const override;
    std::size_t max_in_flight() const override { return config_.max_in_flight; }

    /// The chat/completions body sent for `prompt`.
    json request_body(const std::string& prompt, const GenParams& params) const;

protected:
    std::string do_generate(const std::string& prompt, const GenParams& params) override;

private:
    HttpBackendConfig config_;
    std::unique_ptr<HttpTransport> transport_;
    std::once_flag warned_;
};

class HttpEmbedder : public Embedder {
public:
    explicit HttpEmbedder(HttpBackendConfig config);
    ~HttpEmbedder() override;
    std::string id() const override;

protected:
    std::vector<Vector> do_embed(const std::vector<std::string>& texts) override;
    std::vector<TokenEmbedding> do_embed_tokens(const std::string& text) override;

private:
    HttpBackendConfig config_;
    std::unique_ptr<HttpTransport> transport_;
};

class HttpClassifier : public Classifier {
public:
    explicit HttpClassifier(HttpBackendConfig config);
    ~HttpClassifier() override;
    std::string id() const override;

protected:
    std::vector<ClassifierOutput> do_classify(const std::vector<std::string>& texts) override;

private:
    HttpBackendConfig config_;
    std::unique_ptr<HttpTransport> transport_;
};

// ---- construction from configuration -------------------------------------

/// `{"kind": "mock", "fixtures": {...}}` or `{"kind": "http", "base_url": ..., "model": ...}`.
std::unique_ptr<TextGenerator> make_generator(const json& config);
std::unique_ptr<Embedder> make_embedder(const json& config);
std::unique_ptr<Classifier> make_classifier(const json& config);

} // namespace bpf
