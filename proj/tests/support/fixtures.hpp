#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "bpf/cluster.hpp"

namespace fixtures {

inline bpf::BackpromptRecord synthetic_record(const std::string& id, const std::string& text,
                                              bpf::Polarity polarity = bpf::Polarity::Positive) {
    bpf::BackpromptRecord r;
    r.seed_id = id;
    r.seed_text = "seed " + id;
    r.seed_source = "dha";
    r.seed_label = polarity == bpf::Polarity::Positive ? bpf::LabelClass::HealthAdvice : bpf::LabelClass::GeneralContent;
    r.seed_polarity = polarity;
    r.query = "query " + id + "?";
    r.synthetic_text = text;
    r.created_at = "2024-01-01T00:00:00Z";
    return r;
}

// Twelve records, four per mock-classifier split, two well-separated letter
// profiles inside each split: k = 2 yields 3 splits x 2 clusters = 6 items.
inline std::vector<bpf::BackpromptRecord> six_cluster_records() {
    return {
        synthetic_record("a1", "You should eat apples."),  synthetic_record("a2", "You should eat apples daily."),
        synthetic_record("a3", "zzz should zzz"),           synthetic_record("a4", "zzzz should zzzz"),
        synthetic_record("c1", "The patient felt well."),   synthetic_record("c2", "The patient felt fine."),
        synthetic_record("c3", "xx doctor xx xx"),          synthetic_record("c4", "xxx doctor xxx"),
        synthetic_record("g1", "Traffic was heavy today."), synthetic_record("g2", "Traffic was heavy again."),
        synthetic_record("g3", "qqqq qqq qq"),              synthetic_record("g4", "qqqqq qqqq"),
    };
}

inline bpf::ClusteredCorpus write_six_item_corpus(const std::filesystem::path& path) {
    bpf::MockClassifier classifier;
    auto corpus = bpf::cluster_corpus(six_cluster_records(), classifier, 2, 0);
    bpf::write_clustered_corpus(path, corpus.rows, bpf::json{{"tool", "bpf"}, {"config_hash", "fixture"}});
    return corpus;
}

} // namespace fixtures
