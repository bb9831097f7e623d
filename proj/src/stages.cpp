#include "bpf/stages.hpp"

#include <algorithm>
#include <set>

#include "bpf/error.hpp"

namespace bpf {
namespace {

void require_labeled(const Dataset& dataset, const std::string& what) {
    for (const auto& s : dataset) {
        if (!s.label) throw PreconditionError(what + ": sample '" + s.id + "' is unlabeled");
    }
}

void require_synthetic_polarity(const Dataset& dataset, Polarity expected, const std::string& what) {
    for (const auto& s : dataset) {
        if (!is_synthetic(s)) throw PreconditionError(what + ": sample '" + s.id + "' is not synthetic");
        auto polarity = seed_polarity(s);
        if (!polarity || *polarity != expected) {
            throw PolarityError(what + ": sample '" + s.id + "' was generated from a " +
                                (polarity ? std::string(to_string(*polarity)) : std::string("unknown-polarity")) +
                                " seed; expected " + std::string(to_string(expected)));
        }
    }
}

void append_unique(Dataset& out, std::set<std::string>& ids, const Dataset& source) {
    for (auto sample : source) {
        if (ids.count(sample.id)) {
            auto base = sample.id + "#" + sample.source;
            sample.id = base;
            for (std::size_t n = 2; ids.count(sample.id); ++n) sample.id = base + "#" + std::to_string(n);
        }
        ids.insert(sample.id);
        out.push_back(std::move(sample));
    }
}

void add_sources(std::vector<std::string>& sources, const Dataset& dataset) {
    for (const auto& s : dataset) {
        if (std::find(sources.begin(), sources.end(), s.source) == sources.end()) sources.push_back(s.source);
    }
}

StageManifest mixed_stage(std::string name, const Dataset& synthetic, Polarity polarity, const std::vector<Dataset>& real) {
    require_labeled(synthetic, "stage " + name);
    require_synthetic_polarity(synthetic, polarity, "stage " + name);
    for (const auto& r : real) require_labeled(r, "stage " + name + " real data");

    StageManifest m;
    m.stage = std::move(name);
    m.synthetic_polarity = polarity;
    std::set<std::string> ids;
    append_unique(m.records, ids, synthetic);
    add_sources(m.sources, synthetic);
    for (const auto& r : real) {
        append_unique(m.records, ids, r);
        add_sources(m.sources, r);
    }
    m.purely_synthetic = real.empty() || std::all_of(real.begin(), real.end(), [](const Dataset& d) { return d.empty(); });
    if (m.records.empty()) throw PreconditionError("stage " + m.stage + " would be empty");
    m.counts = stats(m.records);
    return m;
}

StageManifest synthetic_stage(std::string name, const Dataset& synthetic, Polarity polarity) {
    require_labeled(synthetic, "stage " + name);
    require_synthetic_polarity(synthetic, polarity, "stage " + name);
    StageManifest m;
    m.stage = std::move(name);
    m.synthetic_polarity = polarity;
    m.purely_synthetic = true;
    std::set<std::string> ids;
    append_unique(m.records, ids, synthetic);
    add_sources(m.sources, synthetic);
    if (m.records.empty()) throw PreconditionError("stage " + m.stage + " would be empty");
    m.counts = stats(m.records);
    return m;
}

} // namespace

json to_json(const TrainConfig& c) {
    return {{"learning_rate", c.learning_rate},
            {"batch_size", c.batch_size},
            {"epochs", c.epochs},
            {"weight_decay", c.weight_decay}};
}

json to_json(const StageManifest& m) {
    return {{"stage", m.stage},
            {"record_paths", m.record_paths},
            {"counts", to_json(m.counts)},
            {"train_config", to_json(m.train_config)},
            {"provenance",
             {{"sources", m.sources},
              {"synthetic_polarity", to_string(m.synthetic_polarity)},
              {"purely_synthetic", m.purely_synthetic}}}};
}

bool is_synthetic(const TextSample& sample) {
    return sample.meta.is_object() && sample.meta.value("origin", std::string{}) == "synthetic";
}

std::optional<Polarity> seed_polarity(const TextSample& sample) {
    if (!sample.meta.is_object()) return std::nullopt;
    auto it = sample.meta.find("seed_polarity");
    if (it == sample.meta.end() || !it->is_string()) return std::nullopt;
    return parse_polarity(it->get<std::string>());
}

StageManifest assemble_stage1(const Dataset& synthetic_negative, const std::vector<Dataset>& real) {
    return mixed_stage("1", synthetic_negative, Polarity::Negative, real);
}

StageManifest assemble_stage2(const Dataset& synthetic_positive) {
    return synthetic_stage("2", synthetic_positive, Polarity::Positive);
}

std::pair<StageManifest, StageManifest> assemble_alternate(const Dataset& synthetic_positive,
                                                           const Dataset& synthetic_negative,
                                                           const std::vector<Dataset>& real) {
    auto first = mixed_stage("alternate-1", synthetic_positive, Polarity::Positive, real);
    auto second = synthetic_stage("alternate-2", synthetic_negative, Polarity::Negative);
    return {std::move(first), std::move(second)};
}

std::filesystem::path write_manifest(const std::filesystem::path& dir, StageManifest& manifest,
                                     const std::optional<json>& provenance) {
    const std::string stem = "stage-" + manifest.stage;
    write_dataset(dir / (stem + ".jsonl"), manifest.records, provenance);
    manifest.record_paths = {stem + ".jsonl"};
    auto body = to_json(manifest);
    if (provenance) body["provenance"]["run"] = *provenance;
    auto path = dir / (stem + ".manifest.json");
    write_file(path, body.dump(2) + "\n");
    return path;
}

} // namespace bpf
