#include <gtest/gtest.h>

#include <thread>

#include "bpf/annotation.hpp"
#include "bpf/error.hpp"
#include "fixtures.hpp"
#include "test_util.hpp"

using namespace bpf;
using testutil::TempDir;

namespace {

std::map<std::string, LabelClass> label_all(AnnotationService& service, const std::string& id) {
    std::map<std::string, LabelClass> given;
    for (const auto& item : service.items(id)) {
        // Deliberately not the predicted label for one split, to show the human label wins.
        auto label = item.predicted_label == LabelClass::GeneralContent ? LabelClass::HealthContent : item.predicted_label;
        service.submit_label(id, item.item_id, label);
        given[item.item_id] = label;
    }
    return given;
}

} // namespace

TEST(AnnotationService, ThreeSplitsTwoClustersSixItems) {
    TempDir dir;
    fixtures::write_six_item_corpus(dir / "clustered.jsonl");
    AnnotationService service(dir / "data");
    auto id = service.create_session(dir / "clustered.jsonl");
    auto items = service.items(id);
    ASSERT_EQ(items.size(), 6u);
    for (std::size_t i = 1; i < items.size(); ++i) {
        auto prev = std::make_pair(items[i - 1].predicted_label, items[i - 1].cluster_id);
        auto cur = std::make_pair(items[i].predicted_label, items[i].cluster_id);
        EXPECT_LT(prev, cur);
    }
    for (const auto& item : items) {
        EXPECT_EQ(item.cluster_size, 2u);
        EXPECT_EQ(item.neighbors.size(), 1u);
    }
    EXPECT_EQ(service.status(id).total, 6u);
    EXPECT_EQ(service.status(id).state, SessionState::Open);
}

TEST(AnnotationService, EmptyCorpusRejected) {
    TempDir dir;
    write_file(dir / "empty.jsonl", "");
    AnnotationService service(dir / "data");
    EXPECT_THROW(service.create_session(dir / "empty.jsonl"), PreconditionError);
}

TEST(AnnotationService, RecreateGivesNewIdSameItems) {
    TempDir dir;
    fixtures::write_six_item_corpus(dir / "clustered.jsonl");
    AnnotationService service(dir / "data");
    auto a = service.create_session(dir / "clustered.jsonl");
    auto b = service.create_session(dir / "clustered.jsonl");
    EXPECT_NE(a, b);
    auto ia = service.items(a), ib = service.items(b);
    ASSERT_EQ(ia.size(), ib.size());
    for (std::size_t i = 0; i < ia.size(); ++i) EXPECT_EQ(to_json(ia[i]), to_json(ib[i]));
}

TEST(AnnotationService, FinalizePropagatesRepresentativeLabels) {
    TempDir dir;
    auto corpus = fixtures::write_six_item_corpus(dir / "clustered.jsonl");
    AnnotationService service(dir / "data");
    auto id = service.create_session(dir / "clustered.jsonl");
    auto given = label_all(service, id);
    auto result = service.finalize(id);
    EXPECT_EQ(service.status(id).state, SessionState::Finalized);
    EXPECT_TRUE(std::filesystem::exists(result.output_path));

    auto labeled = load_dataset(result.output_path);
    ASSERT_EQ(labeled.size(), 12u);
    std::map<ClusterRef, std::string> reps = representatives_of(corpus.rows);
    for (std::size_t i = 0; i < labeled.size(); ++i) {
        const auto& row = corpus.rows[i];
        EXPECT_EQ(labeled[i].id, row.id());
        EXPECT_EQ(labeled[i].label, given.at(reps.at(row.cluster())));
    }
    EXPECT_EQ(result.counts.total, 12u);
}

TEST(AnnotationService, IdenticalResubmissionIsNoOp) {
    TempDir dir;
    fixtures::write_six_item_corpus(dir / "clustered.jsonl");
    AnnotationService service(dir / "data");
    auto id = service.create_session(dir / "clustered.jsonl");
    auto item = service.items(id).front();
    EXPECT_TRUE(service.submit_label(id, item.item_id, LabelClass::HealthAdvice));
    EXPECT_FALSE(service.submit_label(id, item.item_id, LabelClass::HealthAdvice));
    EXPECT_EQ(service.status(id).labeled, 1u);
}

TEST(AnnotationService, RelabelConflictsUnlessAllowed) {
    TempDir dir;
    fixtures::write_six_item_corpus(dir / "clustered.jsonl");
    AnnotationService strict(dir / "strict");
    auto id = strict.create_session(dir / "clustered.jsonl");
    auto item = strict.items(id).front();
    strict.submit_label(id, item.item_id, LabelClass::HealthAdvice);
    EXPECT_THROW(strict.submit_label(id, item.item_id, LabelClass::GeneralContent), ConflictError);

    AnnotationService lenient(dir / "lenient", true);
    auto id2 = lenient.create_session(dir / "clustered.jsonl");
    lenient.submit_label(id2, item.item_id, LabelClass::HealthAdvice);
    EXPECT_TRUE(lenient.submit_label(id2, item.item_id, LabelClass::GeneralContent));
    EXPECT_EQ(lenient.labels(id2).at(item.item_id), LabelClass::GeneralContent);
}

TEST(AnnotationService, FinalizeWithPendingNamesThem) {
    TempDir dir;
    fixtures::write_six_item_corpus(dir / "clustered.jsonl");
    AnnotationService service(dir / "data");
    auto id = service.create_session(dir / "clustered.jsonl");
    auto items = service.items(id);
    for (std::size_t i = 0; i + 1 < items.size(); ++i) service.submit_label(id, items[i].item_id, items[i].predicted_label);
    try {
        service.finalize(id);
        FAIL() << "expected ConflictError";
    } catch (const ConflictError& e) {
        ASSERT_EQ(e.ids().size(), 1u);
        EXPECT_EQ(e.ids()[0], items.back().item_id);
    }
    EXPECT_EQ(service.status(id).state, SessionState::Open);
}

TEST(AnnotationService, UnknownSessionAndItem) {
    TempDir dir;
    fixtures::write_six_item_corpus(dir / "clustered.jsonl");
    AnnotationService service(dir / "data");
    EXPECT_THROW(service.status("nope"), NotFoundError);
    auto id = service.create_session(dir / "clustered.jsonl");
    EXPECT_THROW(service.submit_label(id, "not-a-representative", LabelClass::HealthAdvice), NotFoundError);
    EXPECT_THROW(service.export_jsonl(id), ConflictError);
}

TEST(AnnotationService, NextItemWalksInOrderThenEnds) {
    TempDir dir;
    fixtures::write_six_item_corpus(dir / "clustered.jsonl");
    AnnotationService service(dir / "data");
    auto id = service.create_session(dir / "clustered.jsonl");
    auto items = service.items(id);
    for (const auto& expected : items) {
        auto next = service.next_item(id);
        ASSERT_TRUE(next.has_value());
        EXPECT_EQ(next->item_id, expected.item_id);
        service.submit_label(id, next->item_id, next->predicted_label);
    }
    EXPECT_FALSE(service.next_item(id).has_value());
}

TEST(AnnotationService, ProgressSurvivesRestart) {
    TempDir dir;
    fixtures::write_six_item_corpus(dir / "clustered.jsonl");
    std::string id;
    std::string first_item;
    {
        AnnotationService service(dir / "data");
        id = service.create_session(dir / "clustered.jsonl");
        first_item = service.items(id)[0].item_id;
        service.submit_label(id, first_item, LabelClass::HealthContent);
        service.submit_label(id, service.items(id)[1].item_id, LabelClass::HealthAdvice);
    }
    AnnotationService reopened(dir / "data");
    EXPECT_EQ(reopened.status(id).labeled, 2u);
    EXPECT_EQ(reopened.labels(id).at(first_item), LabelClass::HealthContent);
    while (auto item = reopened.next_item(id)) reopened.submit_label(id, item->item_id, item->predicted_label);
    reopened.finalize(id);
    AnnotationService again(dir / "data");
    EXPECT_EQ(again.status(id).state, SessionState::Finalized);
    EXPECT_FALSE(again.export_jsonl(id).empty());
}

TEST(AnnotationService, FinalizeIsIdempotentAndMatchesDirectPropagation) {
    TempDir dir;
    auto corpus = fixtures::write_six_item_corpus(dir / "clustered.jsonl");
    AnnotationService service(dir / "data");
    auto id = service.create_session(dir / "clustered.jsonl");
    auto given = label_all(service, id);
    auto first = service.finalize(id);
    auto bytes = read_file(first.output_path);
    auto second = service.finalize(id);
    EXPECT_EQ(second.output_path, first.output_path);
    EXPECT_EQ(read_file(second.output_path), bytes);
    EXPECT_EQ(service.export_jsonl(id), bytes);

    write_dataset(dir / "direct.jsonl", propagate_corpus(corpus.rows, given), read_provenance(dir / "clustered.jsonl"));
    EXPECT_EQ(read_file(dir / "direct.jsonl"), bytes);
}

TEST(AnnotationService, LabelsAfterFinalizeConflict) {
    TempDir dir;
    fixtures::write_six_item_corpus(dir / "clustered.jsonl");
    AnnotationService service(dir / "data", true);
    auto id = service.create_session(dir / "clustered.jsonl");
    label_all(service, id);
    service.finalize(id);
    auto item = service.items(id).front();
    EXPECT_THROW(service.submit_label(id, item.item_id, LabelClass::GeneralContent), ConflictError);
}

TEST(AnnotationService, ConcurrentSubmissionsAreAllRecorded) {
    TempDir dir;
    fixtures::write_six_item_corpus(dir / "clustered.jsonl");
    AnnotationService service(dir / "data");
    auto id = service.create_session(dir / "clustered.jsonl");
    auto items = service.items(id);
    std::vector<std::thread> threads;
    for (const auto& item : items) {
        threads.emplace_back([&, item] {
            for (int r = 0; r < 5; ++r) service.submit_label(id, item.item_id, item.predicted_label);
        });
    }
    for (auto& t : threads) t.join();
    EXPECT_EQ(service.status(id).labeled, items.size());
    AnnotationService reopened(dir / "data");
    EXPECT_EQ(reopened.status(id).labeled, items.size());
}
