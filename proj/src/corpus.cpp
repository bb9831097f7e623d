#include "bpf/corpus.hpp"

#include <unordered_set>

#include "bpf/error.hpp"

namespace bpf {
namespace {

bool is_blank(const std::string& text) {
    return text.find_first_not_of(" \t\r\n\f\v") == std::string::npos;
}

const char* const kCoreKeys[] = {"id", "text", "label", "source"};

} // namespace

LabelAliases default_label_aliases() {
    return {
        {"strong advice", LabelClass::HealthAdvice},
        {"weak advice", LabelClass::HealthAdvice},
        {"not health-advice", LabelClass::HealthContent},
    };
}

TextSample sample_from_json(const json& object, std::size_t line, const std::string& default_source,
                            const LabelAliases& aliases) {
    TextSample sample;
    auto text_it = object.find("text");
    if (text_it == object.end() || !text_it->is_string()) throw ParseError("missing string field 'text'", line);
    sample.text = text_it->get<std::string>();
    if (is_blank(sample.text)) throw ParseError("text is empty or whitespace-only", line);

    if (auto it = object.find("source"); it != object.end() && it->is_string()) {
        sample.source = it->get<std::string>();
    } else {
        sample.source = default_source;
    }

    if (auto it = object.find("id"); it != object.end() && !it->is_null()) {
        if (it->is_string()) {
            sample.id = it->get<std::string>();
        } else if (it->is_number_integer()) {
            sample.id = std::to_string(it->get<long long>());
        } else {
            throw ParseError("field 'id' must be a string", line);
        }
        if (sample.id.empty()) throw ParseError("field 'id' is empty", line);
    } else {
        sample.id = sample.source + ":" + std::to_string(line);
    }

    if (auto it = object.find("label"); it != object.end() && !it->is_null()) {
        if (!it->is_string()) throw ParseError("field 'label' must be a string", line);
        auto raw = it->get<std::string>();
        if (auto alias = aliases.find(raw); alias != aliases.end()) {
            sample.label = alias->second;
        } else if (auto label = try_parse_label(raw)) {
            sample.label = *label;
        } else {
            throw ParseError("unknown label '" + raw + "'", line);
        }
    }

    for (const auto& [key, value] : object.items()) {
        bool core = false;
        for (const char* k : kCoreKeys) core = core || key == k;
        if (!core) sample.meta[key] = value;
    }
    return sample;
}

Dataset load_dataset(const std::filesystem::path& path, const LoadOptions& options) {
    const std::string default_source = options.source.value_or(path.stem().string());
    Dataset out;
    std::unordered_set<std::string> seen;
    read_jsonl(path, [&](std::size_t line, const json& object) {
        auto sample = sample_from_json(object, line, default_source, options.aliases);
        if (options.expect_labels && !sample.label) throw ParseError("missing label", line);
        if (!seen.insert(sample.id).second) throw ParseError("duplicate id '" + sample.id + "'", line);
        out.push_back(std::move(sample));
    });
    return out;
}

json to_json(const TextSample& sample) {
    json object = sample.meta.is_object() ? sample.meta : json::object();
    object["id"] = sample.id;
    object["text"] = sample.text;
    if (sample.label) object["label"] = std::string(to_string(*sample.label));
    object["source"] = sample.source;
    return object;
}

void write_dataset(const std::filesystem::path& path, const Dataset& dataset,
                   const std::optional<json>& provenance) {
    std::vector<json> lines;
    lines.reserve(dataset.size());
    for (const auto& sample : dataset) lines.push_back(to_json(sample));
    write_jsonl(path, lines, provenance);
}

SplitStats stats(const Dataset& dataset) {
    SplitStats out;
    out.total = dataset.size();
    for (const auto& sample : dataset) {
        if (sample.label) {
            ++out.per_label[*sample.label];
        } else {
            ++out.unlabeled;
        }
    }
    return out;
}

Dataset filter_by_polarity(const Dataset& dataset, Polarity polarity) {
    Dataset out;
    for (const auto& sample : dataset) {
        if (!sample.label) throw PreconditionError("sample '" + sample.id + "' is unlabeled");
        if (matches(*sample.label, polarity)) out.push_back(sample);
    }
    return out;
}

json to_json(const SplitStats& s) {
    json per_label = json::object();
    for (const auto& [label, count] : s.per_label) per_label[std::string(to_string(label))] = count;
    return {{"total", s.total}, {"per_label", per_label}, {"unlabeled", s.unlabeled}};
}

} // namespace bpf
