#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bpf/corpus.hpp"

namespace bpf {

/// Fine-tuning hyperparameters handed to the external trainer.
struct TrainConfig {
    double learning_rate = 2e-5;
    std::size_t batch_size = 16;
    std::size_t epochs = 5;
    double weight_decay = 0.01;
    bool operator==(const TrainConfig&) const = default;
};

json to_json(const TrainConfig& config);

struct StageManifest {
    std::string stage;  // "1", "2", "alternate-1", "alternate-2"
    Dataset records;
    std::vector<std::string> record_paths;  // filled by write_manifest
    SplitStats counts;
    TrainConfig train_config;
    std::vector<std::string> sources;
    Polarity synthetic_polarity = Polarity::Negative;
    bool purely_synthetic = false;
};

json to_json(const StageManifest& manifest);

bool is_synthetic(const TextSample& sample);
std::optional<Polarity> seed_polarity(const TextSample& sample);

/// Synthetic-from-negative-seeds plus real datasets. Throws PolarityError if
/// any synthetic record came from a positive (or unknown) seed.
StageManifest assemble_stage1(const Dataset& synthetic_negative, const std::vector<Dataset>& real);

/// Purely synthetic, positive-seed records only.
StageManifest assemble_stage2(const Dataset& synthetic_positive);

/// Swapped plan: positive-seed synthetic (+ real) first, negative-seed synthetic second.
std::pair<StageManifest, StageManifest> assemble_alternate(const Dataset& synthetic_positive,
                                                           const Dataset& synthetic_negative,
                                                           const std::vector<Dataset>& real);

/// Writes `<dir>/stage-<name>.jsonl` and `<dir>/stage-<name>.manifest.json`.
/// Returns the manifest path.
std::filesystem::path write_manifest(const std::filesystem::path& dir, StageManifest& manifest,
                                     const std::optional<json>& provenance = std::nullopt);

} // namespace bpf
