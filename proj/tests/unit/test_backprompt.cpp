#include <gtest/gtest.h>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include "bpf/backprompt.hpp"
#include "bpf/error.hpp"
#include "bpf/log.hpp"
#include "test_util.hpp"

using namespace bpf;
using testutil::TempDir;

namespace {

const std::string kExpectedTemplate =
    "What question did the user ask to generate the following text:\n\nDrink water.\n\nThe user prompt is:";

std::string fixed_clock() { return "2024-01-01T00:00:00Z"; }

Dataset seeds(std::size_t n) {
    Dataset d;
    for (std::size_t i = 0; i < n; ++i) {
        d.push_back({"s" + std::to_string(i), "Seed text number " + std::to_string(i) + ".", LabelClass::HealthAdvice,
                     "dha", json::object()});
    }
    return d;
}

// Fixture table: seed i's query prompt -> "Query i?", "Query i?" -> "Answer i."
std::map<std::string, std::string> fixtures_for(const Dataset& d) {
    std::map<std::string, std::string> f;
    for (std::size_t i = 0; i < d.size(); ++i) {
        f[render_query_prompt(d[i].text)] = "  \"Query " + std::to_string(i) + "?\"\nextra";
        f["Query " + std::to_string(i) + "?"] = "Answer " + std::to_string(i) + ".";
    }
    return f;
}

BackpromptOptions options(std::size_t concurrency = 1) {
    BackpromptOptions o;
    o.concurrency = concurrency;
    o.clock = fixed_clock;
    return o;
}

std::size_t count_lines(const std::filesystem::path& p) {
    auto text = read_file(p);
    return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

class BackpromptRun : public ::testing::Test {
protected:
    void SetUp() override { previous_ = set_warning_sink([](const std::string&) {}); }
    void TearDown() override { set_warning_sink(previous_); }

private:
    LogSink previous_;
};

class FailingGenerator : public TextGenerator {
public:
    std::string id() const override { return "failing"; }

protected:
    std::string do_generate(const std::string&, const GenParams&) override { throw TransportError("connection refused"); }
};

} // namespace

TEST(QueryPrompt, ByteExactTemplate) { EXPECT_EQ(render_query_prompt("Drink water."), kExpectedTemplate); }

TEST(QueryPrompt, InternalNewlinesPreserved) {
    EXPECT_EQ(render_query_prompt("a\nb\n\nc"),
              "What question did the user ask to generate the following text:\n\na\nb\n\nc\n\nThe user prompt is:");
}

TEST(QueryPrompt, EmptySeedRejected) { EXPECT_THROW(render_query_prompt(""), PreconditionError); }

TEST(ExtractQuery, QuotedFirstLine) { EXPECT_EQ(extract_query("\"What should I drink?\"\nSome extra text"), "What should I drink?"); }

TEST(ExtractQuery, TrimsWhitespace) { EXPECT_EQ(extract_query("  How much sleep?  "), "How much sleep?"); }

TEST(ExtractQuery, EmptyQuotesFail) { EXPECT_THROW(extract_query("\"\""), ExtractionError); }

TEST(ExtractQuery, SingleQuotesAndOnlyOneLayer) {
    EXPECT_EQ(extract_query("'Is tea ok?'"), "Is tea ok?");
    EXPECT_EQ(extract_query("\"'nested'\""), "'nested'");
    EXPECT_EQ(extract_query("\"unbalanced"), "\"unbalanced");
}

TEST(ExtractQuery, BlankInputFails) {
    EXPECT_THROW(extract_query(""), ExtractionError);
    EXPECT_THROW(extract_query("\"  \"\nsecond line"), ExtractionError);
    EXPECT_EQ(extract_query("   \n  text on second line"), "text on second line");
}

TEST_F(BackpromptRun, ThreeSeedsThreeAlignedRecords) {
    TempDir dir;
    auto d = seeds(3);
    MockGenerator gen(fixtures_for(d));
    auto result = run_backprompt(d, gen, GenParams{}, dir / "journal.jsonl", options());
    ASSERT_EQ(result.records.size(), 3u);
    EXPECT_EQ(count_lines(dir / "journal.jsonl"), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        const auto& r = result.records[i];
        EXPECT_EQ(r.seed_id, d[i].id);
        EXPECT_EQ(r.seed_text, d[i].text);
        EXPECT_EQ(r.query, "Query " + std::to_string(i) + "?");
        EXPECT_EQ(r.synthetic_text, "Answer " + std::to_string(i) + ".");
        EXPECT_EQ(r.seed_polarity, Polarity::Positive);
        EXPECT_EQ(r.gen_params, GenParams{});
    }
    EXPECT_EQ(gen.calls(), 6u);
}

TEST_F(BackpromptRun, RerunGeneratesNothingNew) {
    TempDir dir;
    auto d = seeds(3);
    MockGenerator gen(fixtures_for(d));
    auto first = run_backprompt(d, gen, GenParams{}, dir / "journal.jsonl", options());
    auto before = read_file(dir / "journal.jsonl");
    auto second = run_backprompt(d, gen, GenParams{}, dir / "journal.jsonl", options());
    EXPECT_EQ(second.generated, 0u);
    EXPECT_EQ(second.resumed, 3u);
    EXPECT_EQ(gen.calls(), 6u);
    EXPECT_EQ(read_file(dir / "journal.jsonl"), before);
    ASSERT_EQ(second.records.size(), first.records.size());
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(to_json(second.records[i]), to_json(first.records[i]));
}

TEST_F(BackpromptRun, EmptyExtractionBecomesSkip) {
    TempDir dir;
    auto d = seeds(3);
    auto f = fixtures_for(d);
    f[render_query_prompt(d[1].text)] = "";
    MockGenerator gen(f);
    auto result = run_backprompt(d, gen, GenParams{}, dir / "journal.jsonl", options());
    EXPECT_EQ(result.records.size(), 2u);
    ASSERT_EQ(result.skips.size(), 1u);
    EXPECT_EQ(result.skips[0].seed_id, "s1");
    EXPECT_EQ(result.skips[0].phase, "query");
    auto journal = read_journal(dir / "journal.jsonl");
    EXPECT_EQ(journal.records.size(), 2u);
    EXPECT_EQ(journal.skips.size(), 1u);
}

TEST_F(BackpromptRun, SkippedSeedIsRetriedOnRerun) {
    TempDir dir;
    auto d = seeds(3);
    auto broken = fixtures_for(d);
    broken[render_query_prompt(d[2].text)] = "   ";
    MockGenerator first_gen(broken);
    run_backprompt(d, first_gen, GenParams{}, dir / "journal.jsonl", options());
    MockGenerator fixed_gen(fixtures_for(d));
    auto second = run_backprompt(d, fixed_gen, GenParams{}, dir / "journal.jsonl", options());
    EXPECT_EQ(second.records.size(), 3u);
    EXPECT_EQ(second.generated, 1u);
    EXPECT_EQ(fixed_gen.calls(), 2u);
}

TEST_F(BackpromptRun, TransportFailuresAreSkipsNotAborts) {
    TempDir dir;
    FailingGenerator gen;
    auto result = run_backprompt(seeds(2), gen, GenParams{}, dir / "journal.jsonl", options());
    EXPECT_TRUE(result.records.empty());
    EXPECT_EQ(result.skips.size(), 2u);
}

TEST_F(BackpromptRun, ConcurrentRunMatchesSequentialRun) {
    TempDir dir;
    auto d = seeds(40);
    MockGenerator seq_gen(fixtures_for(d));
    MockGenerator par_gen(fixtures_for(d), 8);
    auto a = run_backprompt(d, seq_gen, GenParams{}, dir / "seq.jsonl", options(1));
    auto b = run_backprompt(d, par_gen, GenParams{}, dir / "par.jsonl", options(8));
    ASSERT_EQ(a.records.size(), b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) EXPECT_EQ(a.records[i].seed_id, b.records[i].seed_id);
    EXPECT_EQ(canonical_journal(dir / "seq.jsonl"), canonical_journal(dir / "par.jsonl"));
}

TEST_F(BackpromptRun, ProvenanceHeaderWrittenOnce) {
    TempDir dir;
    auto d = seeds(2);
    MockGenerator gen(fixtures_for(d));
    auto o = options();
    o.provenance = json{{"config_hash", "abc"}};
    run_backprompt(d, gen, GenParams{}, dir / "journal.jsonl", o);
    run_backprompt(d, gen, GenParams{}, dir / "journal.jsonl", o);
    EXPECT_EQ(read_provenance(dir / "journal.jsonl")->at("config_hash"), "abc");
    EXPECT_EQ(count_lines(dir / "journal.jsonl"), 3u);
}

TEST_F(BackpromptRun, LockedJournalIsRefused) {
    TempDir dir;
    auto path = dir / "journal.jsonl";
    write_file(path, "");
    int fd = ::open(path.c_str(), O_RDWR);
    ASSERT_GE(fd, 0);
    ASSERT_EQ(::flock(fd, LOCK_EX | LOCK_NB), 0);
    auto d = seeds(1);
    MockGenerator gen(fixtures_for(d));
    EXPECT_THROW(run_backprompt(d, gen, GenParams{}, path, options()), Error);
    ::close(fd);
}

TEST(Journal, CanonicalFormIgnoresTimestampsAndOrder) {
    TempDir dir;
    BackpromptRecord a{"a", "seed a", "src", std::nullopt, std::nullopt, "q", "y", GenParams{}, "2024-01-01T00:00:00Z"};
    BackpromptRecord b{"b", "seed b", "src", std::nullopt, std::nullopt, "q", "y", GenParams{}, "2024-01-02T00:00:00Z"};
    testutil::write_lines(dir / "1.jsonl", {to_json(a), to_json(b)});
    b.created_at = "2025-06-01T00:00:00Z";
    testutil::write_lines(dir / "2.jsonl", {to_json(b), to_json(a)});
    EXPECT_EQ(canonical_journal(dir / "1.jsonl"), canonical_journal(dir / "2.jsonl"));
}

TEST(Journal, RecordJsonRoundTrip) {
    BackpromptRecord r{"id", "seed", "dha", LabelClass::HealthContent, Polarity::Negative, "q?", "ans", GenParams{}, "t"};
    auto back = record_from_json(to_json(r));
    EXPECT_EQ(to_json(back), to_json(r));
}
