#include <gtest/gtest.h>

#include "bpf/error.hpp"
#include "bpf/stages.hpp"
#include "test_util.hpp"

using namespace bpf;
using testutil::TempDir;

namespace {

Dataset synthetic(const std::string& source, Polarity polarity, std::size_t hc, std::size_t ha, std::size_t gc) {
    Dataset d;
    auto add = [&](LabelClass label, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
            TextSample s;
            s.id = source + "/" + std::string(to_string(label)) + "/" + std::to_string(i);
            s.text = "synthetic text";
            s.label = label;
            s.source = source + "-synthetic";
            s.meta = json{{"origin", "synthetic"}, {"seed_polarity", to_string(polarity)}};
            d.push_back(std::move(s));
        }
    };
    add(LabelClass::HealthContent, hc);
    add(LabelClass::HealthAdvice, ha);
    add(LabelClass::GeneralContent, gc);
    return d;
}

Dataset real(const std::string& source, std::size_t hc, std::size_t ha, std::size_t gc) {
    Dataset d;
    auto add = [&](LabelClass label, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
            d.push_back({source + "/" + std::string(to_string(label)) + "/" + std::to_string(i), "real text", label, source,
                         json::object()});
        }
    };
    add(LabelClass::HealthContent, hc);
    add(LabelClass::HealthAdvice, ha);
    add(LabelClass::GeneralContent, gc);
    return d;
}

Dataset concat(Dataset a, const Dataset& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

} // namespace

TEST(TrainConfig, Defaults) {
    TrainConfig c;
    EXPECT_DOUBLE_EQ(c.learning_rate, 2e-5);
    EXPECT_EQ(c.batch_size, 16u);
    EXPECT_EQ(c.epochs, 5u);
    EXPECT_DOUBLE_EQ(c.weight_decay, 0.01);
}

TEST(Stage1, SyntheticGeneralPlusRealTotals) {
    auto m = assemble_stage1(synthetic("semeval", Polarity::Negative, 0, 0, 9925),
                             {real("dha", 6000, 3000, 0), real("healthe", 4356, 3148, 0)});
    EXPECT_EQ(m.counts.total, 26429u);
    EXPECT_EQ(m.counts.count(LabelClass::HealthContent), 10356u);
    EXPECT_EQ(m.counts.count(LabelClass::HealthAdvice), 6148u);
    EXPECT_EQ(m.counts.count(LabelClass::GeneralContent), 9925u);
    EXPECT_FALSE(m.purely_synthetic);
    EXPECT_EQ(m.synthetic_polarity, Polarity::Negative);
}

TEST(Stage1, NoRealDataIsStillValid) {
    auto m = assemble_stage1(synthetic("semeval", Polarity::Negative, 0, 0, 5), {});
    EXPECT_EQ(m.counts.total, 5u);
    EXPECT_TRUE(m.purely_synthetic);
}

TEST(Stage1, PositiveProvenanceRejected) {
    EXPECT_THROW(assemble_stage1(synthetic("dha", Polarity::Positive, 1, 1, 1), {}), PolarityError);
}

TEST(Stage2, SourceCountsAddUp) {
    auto m = assemble_stage2(concat(synthetic("dha", Polarity::Positive, 1461, 496, 790),
                                    synthetic("healthe", Polarity::Positive, 1455, 1847, 98)));
    EXPECT_EQ(m.counts.count(LabelClass::HealthContent), 2916u);
    EXPECT_EQ(m.counts.count(LabelClass::HealthAdvice), 2343u);
    EXPECT_EQ(m.counts.count(LabelClass::GeneralContent), 888u);
    EXPECT_EQ(m.counts.total, 6147u);
    EXPECT_TRUE(m.purely_synthetic);
    EXPECT_EQ(m.sources, (std::vector<std::string>{"dha-synthetic", "healthe-synthetic"}));
}

TEST(Stage2, SingleRecord) { EXPECT_EQ(assemble_stage2(synthetic("dha", Polarity::Positive, 0, 1, 0)).counts.total, 1u); }

TEST(Stage2, MixedProvenanceRejected) {
    auto mixed = concat(synthetic("dha", Polarity::Positive, 1, 0, 0), synthetic("semeval", Polarity::Negative, 0, 0, 1));
    EXPECT_THROW(assemble_stage2(mixed), PolarityError);
}

TEST(Stage2, RealRecordRejected) {
    auto mixed = concat(synthetic("dha", Polarity::Positive, 1, 0, 0), real("dha", 1, 0, 0));
    EXPECT_THROW(assemble_stage2(mixed), PreconditionError);
}

TEST(Stage2, EmptyRejected) { EXPECT_THROW(assemble_stage2({}), PreconditionError); }

TEST(Alternate, SwapsSyntheticRoles) {
    auto positive = concat(synthetic("dha", Polarity::Positive, 1461, 496, 790),
                           synthetic("healthe", Polarity::Positive, 1455, 1847, 98));
    auto negative = synthetic("semeval", Polarity::Negative, 0, 0, 9925);
    auto [first, second] = assemble_alternate(positive, negative, {real("dha", 10, 5, 0)});
    EXPECT_EQ(first.stage, "alternate-1");
    EXPECT_EQ(first.counts.total, 6147u + 15u);
    EXPECT_EQ(first.synthetic_polarity, Polarity::Positive);
    EXPECT_EQ(second.stage, "alternate-2");
    EXPECT_EQ(second.counts.total, 9925u);
    EXPECT_EQ(second.synthetic_polarity, Polarity::Negative);
}

TEST(Alternate, EmptyNegativeSecondStageRejected) {
    EXPECT_THROW(assemble_alternate(synthetic("dha", Polarity::Positive, 1, 1, 1), {}, {}), PreconditionError);
}

TEST(Manifest, DeterministicAndCarriesTrainConfig) {
    TempDir a, b;
    auto build = [] { return assemble_stage2(synthetic("dha", Polarity::Positive, 3, 2, 1)); };
    auto m1 = build();
    auto m2 = build();
    auto p1 = write_manifest(a.path(), m1, json{{"config_hash", "h"}});
    auto p2 = write_manifest(b.path(), m2, json{{"config_hash", "h"}});
    EXPECT_EQ(read_file(p1), read_file(p2));
    EXPECT_EQ(read_file(a / "stage-2.jsonl"), read_file(b / "stage-2.jsonl"));
    auto manifest = json::parse(read_file(p1));
    EXPECT_EQ(manifest["stage"], "2");
    EXPECT_EQ(manifest["record_paths"][0], "stage-2.jsonl");
    EXPECT_EQ(manifest["train_config"]["batch_size"], 16);
    EXPECT_EQ(manifest["train_config"]["epochs"], 5);
    EXPECT_EQ(manifest["counts"]["total"], 6);
    EXPECT_EQ(manifest["provenance"]["synthetic_polarity"], "positive");
    EXPECT_EQ(manifest["provenance"]["run"]["config_hash"], "h");
    EXPECT_EQ(load_dataset(a / "stage-2.jsonl").size(), 6u);
}

TEST(Manifest, DuplicateIdsAcrossSourcesAreKept) {
    Dataset r1{{"x", "one", LabelClass::HealthAdvice, "dha", json::object()}};
    Dataset r2{{"x", "two", LabelClass::HealthContent, "healthe", json::object()}};
    auto m = assemble_stage1(synthetic("semeval", Polarity::Negative, 0, 0, 1), {r1, r2});
    EXPECT_EQ(m.records.size(), 3u);
    EXPECT_EQ(m.records[2].id, "x#healthe");
}
