#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bpf/jsonl.hpp"
#include "bpf/labels.hpp"

namespace bpf {

/// One record of the canonical JSONL format:
/// `{"id", "text", "label"?, "source", ...extra}`. Extra keys round-trip through `meta`.
struct TextSample {
    std::string id;
    std::string text;
    std::optional<LabelClass> label;
    std::string source;
    json meta = json::object();

    bool operator==(const TextSample&) const = default;
};

using Dataset = std::vector<TextSample>;

struct SplitStats {
    std::size_t total = 0;
    std::map<LabelClass, std::size_t> per_label{
        {LabelClass::HealthAdvice, 0}, {LabelClass::HealthContent, 0}, {LabelClass::GeneralContent, 0}};
    std::size_t unlabeled = 0;

    std::size_t count(LabelClass label) const { return per_label.at(label); }
    bool operator==(const SplitStats&) const = default;
};

/// Source label strings that are mapped onto canonical labels at load time.
using LabelAliases = std::map<std::string, LabelClass>;

/// "strong advice" / "weak advice" → health-advice, "not health-advice" → health-content.
LabelAliases default_label_aliases();

struct LoadOptions {
    bool expect_labels = false;
    // Used when a record carries no "source"; defaults to the file stem.
    std::optional<std::string> source;
    LabelAliases aliases = default_label_aliases();
};

/// Loads a JSONL dataset in file order. Missing ids are synthesized as
/// `<source>:<line>`. Throws ParseError (with line number) on malformed
/// lines, unknown labels, blank text, duplicate ids, or a missing label
/// when `expect_labels` is set.
Dataset load_dataset(const std::filesystem::path& path, const LoadOptions& options = {});

json to_json(const TextSample& sample);
TextSample sample_from_json(const json& object, std::size_t line, const std::string& default_source,
                            const LabelAliases& aliases);

void write_dataset(const std::filesystem::path& path, const Dataset& dataset,
                   const std::optional<json>& provenance = std::nullopt);

SplitStats stats(const Dataset& dataset);

/// Keeps samples whose label collapses to `polarity`, in order.
/// Throws PreconditionError on an unlabeled sample.
Dataset filter_by_polarity(const Dataset& dataset, Polarity polarity);

json to_json(const SplitStats& stats);

} // namespace bpf
