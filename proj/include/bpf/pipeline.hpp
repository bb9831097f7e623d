#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bpf/cluster.hpp"
#include "bpf/error.hpp"
#include "bpf/gateway.hpp"
#include "bpf/stages.hpp"

namespace bpf {

enum class AnnotationMode { Headless, Serve };

/// Declarative configuration for an end-to-end run. Relative paths resolve
/// against the directory holding the config file.
struct RunConfig {
    json raw;  // as loaded; the config hash is taken over this

    json generation_backend;
    json embedding_backend;
    json classifier_backend;
    GenParams gen_params;
    std::size_t k = kDefaultClusters;
    std::uint64_t rng_seed = kDefaultClusterSeed;
    std::optional<Polarity> polarity;
    std::optional<std::size_t> concurrency;
    TrainConfig train_config;

    std::filesystem::path seeds;
    std::filesystem::path output_dir;
    std::filesystem::path journal;  // defaults to <output_dir>/journal.jsonl
    std::vector<std::filesystem::path> real;

    AnnotationMode mode = AnnotationMode::Headless;
    std::optional<std::filesystem::path> label_map;
    bool fallback_to_predicted = false;
    int port = 8787;
    std::optional<std::string> bearer_token;

    /// Throws ConfigError on bad fields, k == 0, or input paths that do not resolve.
    static RunConfig from_json(const json& config, const std::filesystem::path& base_dir);
    static RunConfig load(const std::filesystem::path& path);

    std::string hash() const;
};

/// Tool version, config hash and backend identifiers.
json version_and_provenance(const RunConfig& config);

/// Raised when a pipeline stage fails; completed journals are left in place.
class StageFailure : public Error {
public:
    StageFailure(std::string stage, const std::string& detail)
        : Error("stage '" + stage + "' failed: " + detail), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

struct PipelineHooks {
    std::function<std::string()> clock;
    // Serve mode: called with the session id and bound port once the server is up.
    std::function<void(const std::string&, int)> on_serving;
};

/// generate → classify/split → cluster → annotate → propagate → assemble.
/// Writes journal, clustered corpus, labeled dataset, stage manifest and
/// `run_report.json` to the output directory; returns the report.
json run_pipeline(const RunConfig& config, const PipelineHooks& hooks = {});

/// `{"id": "label", ...}` as used by headless annotation.
std::map<std::string, LabelClass> load_label_map(const std::filesystem::path& path);

} // namespace bpf
