#include "bpf/backprompt.hpp"

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <ctime>
#include <map>
#include <mutex>
#include <thread>
#include <unordered_map>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include "bpf/error.hpp"
#include "bpf/log.hpp"

namespace bpf {
namespace {

std::string_view trim(std::string_view s) {
    const auto* ws = " \t\r\n\f\v";
    auto first = s.find_first_not_of(ws);
    if (first == std::string_view::npos) return {};
    auto last = s.find_last_not_of(ws);
    return s.substr(first, last - first + 1);
}

// Exclusive, append-only handle on the journal file.
class JournalWriter {
public:
    explicit JournalWriter(const std::filesystem::path& path) : path_(path) {
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
        fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
        if (fd_ < 0) throw Error("cannot open journal " + path.string() + ": " + std::strerror(errno));
        if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
            ::close(fd_);
            throw Error("journal " + path.string() + " is locked by another run");
        }
    }
    ~JournalWriter() {
        if (fd_ >= 0) {
            ::flock(fd_, LOCK_UN);
            ::close(fd_);
        }
    }
    JournalWriter(const JournalWriter&) = delete;
    JournalWriter& operator=(const JournalWriter&) = delete;

    void append(const json& entry) {
        const auto line = to_jsonl_line(entry);
        std::lock_guard lock(mutex_);
        std::size_t written = 0;
        while (written < line.size()) {
            auto n = ::write(fd_, line.data() + written, line.size() - written);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw Error("journal write failed for " + path_.string() + ": " + std::strerror(errno));
            }
            written += static_cast<std::size_t>(n);
        }
    }

private:
    std::filesystem::path path_;
    int fd_ = -1;
    std::mutex mutex_;
};

struct Outcome {
    std::optional<BackpromptRecord> record;
    std::optional<SkipEntry> skip;
};

} // namespace

std::string render_query_prompt(std::string_view seed_text) {
    if (seed_text.empty()) throw PreconditionError("seed text is empty");
    std::string prompt;
    prompt.reserve(kQueryPromptPrefix.size() + seed_text.size() + kQueryPromptSuffix.size());
    prompt += kQueryPromptPrefix;
    prompt += seed_text;
    prompt += kQueryPromptSuffix;
    return prompt;
}

std::string query_prompt_template() { return render_query_prompt("{seed_text}"); }

std::string extract_query(std::string_view raw_generation) {
    auto text = trim(raw_generation);
    text = trim(text.substr(0, text.find('\n')));
    if (text.size() >= 2 && (text.front() == '"' || text.front() == '\'') && text.back() == text.front()) {
        text = trim(text.substr(1, text.size() - 2));
    }
    if (text.empty()) throw ExtractionError("generated query is empty after post-processing");
    return std::string(text);
}

std::string utc_timestamp() {
    auto now = std::chrono::system_clock::now();
    auto secs = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buffer[32];
    std::strftime(buffer, sizeof(buffer), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buffer;
}

json to_json(const BackpromptRecord& r) {
    json out{{"type", "record"},
             {"seed_id", r.seed_id},
             {"seed_text", r.seed_text},
             {"seed_source", r.seed_source},
             {"query", r.query},
             {"synthetic_text", r.synthetic_text},
             {"gen_params", to_json(r.gen_params)},
             {"answer_prompt_mode", kAnswerPromptMode},
             {"created_at", r.created_at}};
    out["seed_label"] = r.seed_label ? json(to_string(*r.seed_label)) : json(nullptr);
    out["seed_polarity"] = r.seed_polarity ? json(to_string(*r.seed_polarity)) : json(nullptr);
    return out;
}

json to_json(const SkipEntry& s) {
    return {{"type", "skip"}, {"seed_id", s.seed_id}, {"phase", s.phase}, {"reason", s.reason}, {"created_at", s.created_at}};
}

BackpromptRecord record_from_json(const json& o) {
    BackpromptRecord r;
    r.seed_id = o.at("seed_id").get<std::string>();
    r.seed_text = o.at("seed_text").get<std::string>();
    r.seed_source = o.value("seed_source", std::string{});
    r.query = o.at("query").get<std::string>();
    r.synthetic_text = o.at("synthetic_text").get<std::string>();
    if (auto it = o.find("gen_params"); it != o.end()) r.gen_params = gen_params_from_json(*it);
    if (auto it = o.find("seed_label"); it != o.end() && it->is_string()) r.seed_label = parse_label(it->get<std::string>());
    if (auto it = o.find("seed_polarity"); it != o.end() && it->is_string()) {
        r.seed_polarity = parse_polarity(it->get<std::string>());
    }
    r.created_at = o.value("created_at", std::string{});
    return r;
}

Journal read_journal(const std::filesystem::path& path) {
    Journal journal;
    if (!std::filesystem::exists(path)) return journal;
    std::unordered_map<std::string, std::size_t> seen;
    read_jsonl(path, [&](std::size_t line, const json& o) {
        auto type = o.value("type", std::string("record"));
        try {
            if (type == "skip") {
                journal.skips.push_back({o.at("seed_id").get<std::string>(), o.value("phase", std::string{}),
                                         o.value("reason", std::string{}), o.value("created_at", std::string{})});
            } else if (type == "record") {
                auto record = record_from_json(o);
                if (seen.emplace(record.seed_id, journal.records.size()).second) journal.records.push_back(std::move(record));
            } else {
                throw ParseError("unknown journal entry type '" + type + "'", line);
            }
        } catch (const json::exception& e) {
            throw ParseError(std::string("bad journal entry: ") + e.what(), line);
        }
    });
    return journal;
}

std::string canonical_journal(const std::filesystem::path& path) {
    std::vector<std::pair<std::string, std::string>> keyed;
    read_jsonl(path, [&](std::size_t, const json& o) {
        json copy = o;
        copy.erase("created_at");
        keyed.emplace_back(copy.value("seed_id", std::string{}) + '\x1f' + copy.value("type", std::string{}),
                           copy.dump());
    });
    std::sort(keyed.begin(), keyed.end());
    std::string out;
    for (const auto& [key, line] : keyed) out += line + "\n";
    return out;
}

BackpromptResult run_backprompt(const Dataset& seeds, TextGenerator& generator, const GenParams& params,
                                const std::filesystem::path& journal_path, const BackpromptOptions& options) {
    if (seeds.empty()) throw PreconditionError("no seeds to backprompt");
    params.validate();
    auto clock = options.clock ? options.clock : utc_timestamp;

    const bool fresh = !std::filesystem::exists(journal_path) || std::filesystem::file_size(journal_path) == 0;
    JournalWriter writer(journal_path);
    if (fresh && options.provenance) writer.append(json{{kProvenanceKey, *options.provenance}});

    std::unordered_map<std::string, BackpromptRecord> completed;
    if (!fresh) {
        for (auto& record : read_journal(journal_path).records) completed.emplace(record.seed_id, std::move(record));
    }

    BackpromptResult result;
    std::vector<Outcome> outcomes(seeds.size());
    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        if (auto it = completed.find(seeds[i].id); it != completed.end()) {
            outcomes[i].record = it->second;
            ++result.resumed;
        } else {
            pending.push_back(i);
        }
    }

    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr io_error;

    auto process = [&](std::size_t index) {
        const auto& seed = seeds[index];
        Outcome outcome;
        std::string phase = "query";
        try {
            auto query = extract_query(generator.generate(render_query_prompt(seed.text), params));
            phase = "answer";
            auto answer = std::string(trim(generator.generate(query, params)));
            if (answer.empty()) throw ExtractionError("generated answer is empty");
            BackpromptRecord record;
            record.seed_id = seed.id;
            record.seed_text = seed.text;
            record.seed_source = seed.source;
            record.seed_label = seed.label;
            if (seed.label) record.seed_polarity = collapse_for_inference(*seed.label);
            record.query = std::move(query);
            record.synthetic_text = std::move(answer);
            record.gen_params = params;
            record.created_at = clock();
            outcome.record = std::move(record);
        } catch (const PreconditionError& e) {
            outcome.skip = SkipEntry{seed.id, phase, e.what(), clock()};
        } catch (const ExtractionError& e) {
            outcome.skip = SkipEntry{seed.id, phase, e.what(), clock()};
        } catch (const TransportError& e) {
            outcome.skip = SkipEntry{seed.id, phase, e.what(), clock()};
        } catch (const CapabilityError& e) {
            outcome.skip = SkipEntry{seed.id, phase, e.what(), clock()};
        }
        if (outcome.skip) log_warning("skipping seed '" + seed.id + "' (" + phase + "): " + outcome.skip->reason);
        writer.append(outcome.record ? to_json(*outcome.record) : to_json(*outcome.skip));
        outcomes[index] = std::move(outcome);
    };

    auto worker = [&] {
        for (std::size_t k = next++; k < pending.size(); k = next++) {
            {
                std::lock_guard lock(error_mutex);
                if (io_error) return;
            }
            try {
                process(pending[k]);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!io_error) io_error = std::current_exception();
                return;
            }
        }
    };

    const std::size_t workers =
        std::max<std::size_t>(1, std::min(options.concurrency.value_or(generator.max_in_flight()), pending.size()));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (std::size_t i = 0; i < workers; ++i) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    if (io_error) std::rethrow_exception(io_error);

    for (auto& outcome : outcomes) {
        if (outcome.record) {
            result.records.push_back(std::move(*outcome.record));
        } else if (outcome.skip) {
            result.skips.push_back(std::move(*outcome.skip));
        }
    }
    result.generated = result.records.size() - result.resumed;
    return result;
}

} // namespace bpf
