#include "bpf/annotation.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <random>

#include "bpf/error.hpp"
#include "bpf/provenance.hpp"

namespace bpf {

struct AnnotationService::Session {
    std::string id;
    std::filesystem::path dir;
    std::string corpus_hash;
    std::optional<json> provenance;
    std::vector<ClusteredRow> rows;
    std::vector<AnnotationItem> items;
    std::map<std::string, LabelClass> labels;
    SessionState state = SessionState::Open;
    std::optional<FinalizeResult> finalized;
    mutable std::shared_mutex mutex;

    std::filesystem::path events_path() const { return dir / "events.jsonl"; }
    std::filesystem::path corpus_path() const { return dir / "corpus.jsonl"; }
    std::filesystem::path output_path() const { return dir / "labeled.jsonl"; }

    const AnnotationItem* find_item(const std::string& item_id) const {
        for (const auto& item : items) {
            if (item.item_id == item_id) return &item;
        }
        return nullptr;
    }

    void append_event(const json& event) const {
        std::ofstream out(events_path(), std::ios::binary | std::ios::app);
        if (!out) throw Error("cannot append to " + events_path().string());
        out << to_jsonl_line(event);
        out.flush();
        if (!out) throw Error("event write failed: " + events_path().string());
    }
};

namespace {

std::vector<AnnotationItem> build_items(const std::vector<ClusteredRow>& rows) {
    std::map<std::string, const ClusteredRow*> by_id;
    for (const auto& row : rows) by_id[row.id()] = &row;

    std::vector<const ClusteredRow*> reps;
    for (const auto& row : rows) {
        if (row.is_representative) reps.push_back(&row);
    }
    std::sort(reps.begin(), reps.end(),
              [](const ClusteredRow* a, const ClusteredRow* b) { return a->cluster() < b->cluster(); });

    std::vector<AnnotationItem> items;
    for (const auto* rep : reps) {
        AnnotationItem item{rep->id(), rep->record.synthetic_text, rep->predicted_label, rep->cluster_id,
                            rep->cluster_size, {}};
        for (const auto& neighbor : rep->neighbor_ids) {
            if (auto it = by_id.find(neighbor); it != by_id.end()) item.neighbors.push_back(it->second->record.synthetic_text);
        }
        items.push_back(std::move(item));
    }
    return items;
}

std::string new_session_id() {
    static std::atomic<std::uint64_t> counter{0};
    std::random_device device;
    std::uint64_t entropy = (static_cast<std::uint64_t>(device()) << 32) ^ device() ^ counter.fetch_add(1);
    return "s" + hex64(entropy).substr(0, 12);
}

} // namespace

json to_json(const AnnotationItem& item) {
    return {{"item_id", item.item_id},       {"text", item.text},
            {"predicted_label", to_string(item.predicted_label)}, {"cluster_id", item.cluster_id},
            {"cluster_size", item.cluster_size}, {"neighbors", item.neighbors}};
}

std::string_view to_string(SessionState state) noexcept {
    return state == SessionState::Open ? "open" : "finalized";
}

AnnotationService::AnnotationService(std::filesystem::path data_dir, bool allow_relabel)
    : data_dir_(std::move(data_dir)), allow_relabel_(allow_relabel) {
    std::filesystem::create_directories(data_dir_ / "sessions");
}

AnnotationService::~AnnotationService() = default;

std::string AnnotationService::create_session(const std::filesystem::path& clustered_corpus) {
    const auto bytes = read_file(clustered_corpus);
    auto rows = read_clustered_corpus(clustered_corpus);
    if (rows.empty()) throw PreconditionError("clustered corpus " + clustered_corpus.string() + " is empty");
    auto items = build_items(rows);
    if (items.empty()) throw PreconditionError("clustered corpus has no representative rows");

    auto session = std::make_unique<Session>();
    {
        std::lock_guard lock(sessions_mutex_);
        do {
            session->id = new_session_id();
            session->dir = data_dir_ / "sessions" / session->id;
        } while (sessions_.count(session->id) || std::filesystem::exists(session->dir));
        std::filesystem::create_directories(session->dir);
    }
    session->corpus_hash = hex64(fnv1a64(bytes));
    session->provenance = read_provenance(clustered_corpus);
    session->rows = std::move(rows);
    session->items = std::move(items);

    write_file(session->corpus_path(), bytes);
    write_file(session->dir / "session.json",
               json{{"session_id", session->id},
                    {"source_corpus", std::filesystem::absolute(clustered_corpus).string()},
                    {"corpus_hash", session->corpus_hash},
                    {"item_count", session->items.size()}}
                   .dump(2));
    write_file(session->events_path(), "");

    auto id = session->id;
    std::lock_guard lock(sessions_mutex_);
    sessions_.emplace(id, std::move(session));
    return id;
}

std::unique_ptr<AnnotationService::Session> AnnotationService::load(const std::string& session_id) const {
    if (session_id.empty() || session_id.find('/') != std::string::npos || session_id.find("..") != std::string::npos) {
        return nullptr;
    }
    auto dir = data_dir_ / "sessions" / session_id;
    if (!std::filesystem::exists(dir / "session.json")) return nullptr;

    auto session = std::make_unique<Session>();
    session->id = session_id;
    session->dir = dir;
    auto header = json::parse(read_file(dir / "session.json"));
    session->corpus_hash = header.at("corpus_hash").get<std::string>();
    if (hex64(fnv1a64(read_file(session->corpus_path()))) != session->corpus_hash) {
        throw Error("session " + session_id + ": corpus snapshot does not match its recorded hash");
    }
    session->provenance = read_provenance(session->corpus_path());
    session->rows = read_clustered_corpus(session->corpus_path());
    session->items = build_items(session->rows);

    read_jsonl(session->events_path(), [&](std::size_t line, const json& event) {
        auto kind = event.value("event", std::string{});
        if (kind == "label") {
            session->labels[event.at("item_id").get<std::string>()] = parse_label(event.at("label").get<std::string>());
        } else if (kind == "finalize") {
            session->state = SessionState::Finalized;
            FinalizeResult result;
            result.output_path = session->output_path();
            result.counts = stats(load_dataset(result.output_path));
            session->finalized = result;
        } else {
            throw ParseError("unknown session event '" + kind + "'", line);
        }
    });
    return session;
}

AnnotationService::Session& AnnotationService::session(const std::string& session_id) const {
    std::lock_guard lock(sessions_mutex_);
    if (auto it = sessions_.find(session_id); it != sessions_.end()) return *it->second;
    auto loaded = load(session_id);
    if (!loaded) throw NotFoundError("unknown session '" + session_id + "'");
    auto& ref = *loaded;
    sessions_.emplace(session_id, std::move(loaded));
    return ref;
}

SessionStatus AnnotationService::status(const std::string& session_id) const {
    auto& s = session(session_id);
    std::shared_lock lock(s.mutex);
    return {s.state, s.labels.size(), s.items.size()};
}

std::vector<AnnotationItem> AnnotationService::items(const std::string& session_id) const {
    auto& s = session(session_id);
    std::shared_lock lock(s.mutex);
    return s.items;
}

std::optional<AnnotationItem> AnnotationService::next_item(const std::string& session_id) const {
    auto& s = session(session_id);
    std::shared_lock lock(s.mutex);
    for (const auto& item : s.items) {
        if (!s.labels.count(item.item_id)) return item;
    }
    return std::nullopt;
}

std::map<std::string, LabelClass> AnnotationService::labels(const std::string& session_id) const {
    auto& s = session(session_id);
    std::shared_lock lock(s.mutex);
    return s.labels;
}

bool AnnotationService::submit_label(const std::string& session_id, const std::string& item_id, LabelClass label) {
    auto& s = session(session_id);
    std::unique_lock lock(s.mutex);
    if (!s.find_item(item_id)) throw NotFoundError("unknown item '" + item_id + "' in session " + session_id);
    auto existing = s.labels.find(item_id);
    if (existing != s.labels.end() && existing->second == label) return false;
    if (s.state == SessionState::Finalized) throw ConflictError("session " + session_id + " is finalized", {item_id});
    if (existing != s.labels.end() && !allow_relabel_) {
        throw ConflictError("item '" + item_id + "' already labeled " + std::string(to_string(existing->second)),
                            {item_id});
    }
    s.append_event(json{{"event", "label"}, {"item_id", item_id}, {"label", to_string(label)}});
    s.labels[item_id] = label;
    return true;
}

FinalizeResult AnnotationService::finalize(const std::string& session_id) {
    auto& s = session(session_id);
    std::unique_lock lock(s.mutex);
    if (s.finalized) return *s.finalized;

    std::vector<std::string> pending;
    for (const auto& item : s.items) {
        if (!s.labels.count(item.item_id)) pending.push_back(item.item_id);
    }
    if (!pending.empty()) {
        std::string message = std::to_string(pending.size()) + " item(s) still pending:";
        for (const auto& id : pending) message += " " + id;
        throw ConflictError(message, pending);
    }

    auto labeled = propagate_corpus(s.rows, s.labels);
    write_dataset(s.output_path(), labeled, s.provenance);
    s.append_event(json{{"event", "finalize"}});

    FinalizeResult result{s.output_path(), stats(labeled)};
    s.state = SessionState::Finalized;
    s.finalized = result;
    return result;
}

std::string AnnotationService::export_jsonl(const std::string& session_id) const {
    auto& s = session(session_id);
    std::shared_lock lock(s.mutex);
    if (!s.finalized) throw ConflictError("session " + session_id + " is not finalized");
    return read_file(s.finalized->output_path);
}

} // namespace bpf
