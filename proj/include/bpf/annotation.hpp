#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "bpf/cluster.hpp"
#include "bpf/corpus.hpp"

namespace bpf {

/// A cluster representative as shown to the annotator.
struct AnnotationItem {
    std::string item_id;
    std::string text;
    LabelClass predicted_label;
    std::size_t cluster_id = 0;
    std::size_t cluster_size = 0;
    std::vector<std::string> neighbors;  // up to 3 neighbor texts
};

json to_json(const AnnotationItem& item);

enum class SessionState { Open, Finalized };
std::string_view to_string(SessionState state) noexcept;

struct SessionStatus {
    SessionState state = SessionState::Open;
    std::size_t labeled = 0;
    std::size_t total = 0;
};

struct FinalizeResult {
    std::filesystem::path output_path;
    SplitStats counts;
};

/// Sessions over clustered corpora, persisted under `data_dir/sessions/<id>/`
/// as a corpus snapshot, a session header and an append-only label-event log.
/// Sessions are reloaded from disk on first access after a restart.
class AnnotationService {
public:
    explicit AnnotationService(std::filesystem::path data_dir, bool allow_relabel = false);
    ~AnnotationService();
    AnnotationService(const AnnotationService&) = delete;
    AnnotationService& operator=(const AnnotationService&) = delete;

    /// Items ordered by (split, cluster index). Throws PreconditionError when
    /// the corpus is empty or has no representative rows.
    std::string create_session(const std::filesystem::path& clustered_corpus);

    SessionStatus status(const std::string& session_id) const;
    std::vector<AnnotationItem> items(const std::string& session_id) const;
    std::optional<AnnotationItem> next_item(const std::string& session_id) const;

    /// Returns false when the identical label was already recorded.
    /// NotFoundError for an unknown item, ConflictError for a relabel (unless
    /// allowed) or a finalized session.
    bool submit_label(const std::string& session_id, const std::string& item_id, LabelClass label);

    /// Propagates the labels and writes the labeled JSONL. ConflictError lists
    /// pending item ids. Repeated calls return the first result.
    FinalizeResult finalize(const std::string& session_id);

    /// Labeled JSONL bytes; ConflictError until finalized.
    std::string export_jsonl(const std::string& session_id) const;

    std::map<std::string, LabelClass> labels(const std::string& session_id) const;

    const std::filesystem::path& data_dir() const noexcept { return data_dir_; }

private:
    struct Session;
    Session& session(const std::string& session_id) const;
    std::unique_ptr<Session> load(const std::string& session_id) const;

    std::filesystem::path data_dir_;
    bool allow_relabel_;
    mutable std::mutex sessions_mutex_;
    mutable std::map<std::string, std::unique_ptr<Session>> sessions_;
};

} // namespace bpf
