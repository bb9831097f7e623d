#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bpf/corpus.hpp"
#include "bpf/gateway.hpp"

namespace bpf {

// Query-generation template. The seed text goes between prefix and suffix verbatim.
inline constexpr std::string_view kQueryPromptPrefix =
    "What question did the user ask to generate the following text:\n\n";
inline constexpr std::string_view kQueryPromptSuffix = "\n\nThe user prompt is:";

// The answer phase sends the extracted query as the only user message.
inline constexpr std::string_view kAnswerPromptMode = "verbatim-user";

std::string render_query_prompt(std::string_view seed_text);

/// The template with a `{seed_text}` placeholder, as recorded in provenance.
std::string query_prompt_template();

/// Trims, strips one layer of matching quotes, keeps the first line.
/// Throws ExtractionError if nothing is left.
std::string extract_query(std::string_view raw_generation);

/// One aligned (seed, query, synthetic answer) triple.
struct BackpromptRecord {
    std::string seed_id;
    std::string seed_text;
    std::string seed_source;
    std::optional<LabelClass> seed_label;
    std::optional<Polarity> seed_polarity;
    std::string query;
    std::string synthetic_text;
    GenParams gen_params;
    std::string created_at;
};

struct SkipEntry {
    std::string seed_id;
    std::string phase;  // "query" | "answer"
    std::string reason;
    std::string created_at;
};

json to_json(const BackpromptRecord& record);
json to_json(const SkipEntry& skip);
BackpromptRecord record_from_json(const json& object);

struct Journal {
    std::vector<BackpromptRecord> records;  // file order, later duplicates dropped
    std::vector<SkipEntry> skips;
};

Journal read_journal(const std::filesystem::path& path);

/// Journal bytes with timestamps removed and entries sorted by (seed_id, type, content).
std::string canonical_journal(const std::filesystem::path& path);

struct BackpromptOptions {
    // Worker count; defaults to the generator's in-flight bound.
    std::optional<std::size_t> concurrency;
    // ISO-8601 UTC timestamp source.
    std::function<std::string()> clock;
    // Written as the first line when the journal is created.
    std::optional<json> provenance;
};

struct BackpromptResult {
    std::vector<BackpromptRecord> records;  // seed order
    std::vector<SkipEntry> skips;           // seeds that failed in this run
    std::size_t generated = 0;              // records produced by this run
    std::size_t resumed = 0;                // records taken from the existing journal
};

/// Runs query generation then answer generation for every seed not already
/// completed in `journal`, appending each outcome as it finishes. The journal
/// is held under an exclusive advisory lock for the whole run.
BackpromptResult run_backprompt(const Dataset& seeds, TextGenerator& generator, const GenParams& params,
                                const std::filesystem::path& journal, const BackpromptOptions& options = {});

std::string utc_timestamp();

} // namespace bpf
