#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bpf/backprompt.hpp"
#include "bpf/corpus.hpp"
#include "bpf/gateway.hpp"

namespace bpf {

inline constexpr std::size_t kDefaultClusters = 20;
inline constexpr std::uint64_t kDefaultClusterSeed = 0;

struct EmbeddedSample {
    std::string id;
    Vector embedding;
};

/// Groups samples by the classifier's predicted label. All three labels are
/// present as keys; a group may be empty. Input order is kept within a group.
std::map<LabelClass, std::vector<EmbeddedSample>> split_by_prediction(
    const std::vector<std::pair<std::string, std::string>>& samples, Classifier& classifier);

// ---- k-means ---------------------------------------------------------------

struct KMeansOptions {
    std::size_t max_iterations = 300;
    // Independent k-means++ initializations; the lowest-SSE run wins.
    std::size_t restarts = 10;
};

struct KMeansResult {
    std::vector<Vector> centroids;
    std::vector<std::size_t> assignments;
    double sse = 0.0;
    // SSE of the winning run: initialization first, then after each centroid update.
    std::vector<double> sse_history;
    std::size_t iterations = 0;
};

/// Lloyd's algorithm from k-means++ seeding. Effective k is min(k, #distinct
/// vectors). Deterministic for a given `rng_seed`. Throws PreconditionError
/// on empty input, k == 0, ragged dimensions or non-finite components.
KMeansResult kmeans(std::span<const Vector> vectors, std::size_t k, std::uint64_t rng_seed,
                    const KMeansOptions& options = {});

double squared_distance(const Vector& a, const Vector& b);
double within_cluster_sse(std::span<const Vector> vectors, std::span<const Vector> centroids,
                          std::span<const std::size_t> assignments);

/// Per non-empty cluster, the member nearest its centroid (ties: lowest id).
std::map<std::size_t, std::string> select_representatives(std::span<const Vector> vectors,
                                                          std::span<const std::size_t> assignments,
                                                          std::span<const Vector> centroids,
                                                          std::span<const std::string> ids);

/// Population standard deviation of the non-empty cluster sizes.
double cluster_size_std(std::span<const std::size_t> assignments);

// ---- propagation ---------------------------------------------------------------

struct ClusterRef {
    LabelClass split;
    std::size_t index;
    auto operator<=>(const ClusterRef&) const = default;
};

enum class LabelProvenance { HumanCentroid, Propagated };
std::string_view to_string(LabelProvenance provenance) noexcept;

struct PropagatedLabel {
    std::string sample_id;
    LabelClass final_label;
    LabelProvenance provenance;
    ClusterRef cluster;
    bool operator==(const PropagatedLabel&) const = default;
};

using ClusterAssignments = std::vector<std::pair<std::string, ClusterRef>>;

/// Gives every sample its representative's human label. `human_labels` must
/// cover exactly the representatives; otherwise throws ConflictError whose
/// ids() lists the missing and unexpected ids.
std::vector<PropagatedLabel> propagate(const ClusterAssignments& assignments,
                                       const std::map<ClusterRef, std::string>& representatives,
                                       const std::map<std::string, LabelClass>& human_labels);

// ---- clustered corpus ------------------------------------------------------------

struct ClusterModel {
    LabelClass split_label = LabelClass::GeneralContent;
    std::size_t k = 0;  // effective
    std::vector<Vector> centroids;
    std::map<std::string, std::size_t> assignments;
    std::map<std::size_t, std::string> representatives;
    std::map<std::size_t, std::vector<std::string>> neighbors;  // <= 3 per representative
    std::uint64_t rng_seed = kDefaultClusterSeed;
    double sse = 0.0;
};

/// L2-normalizes the embeddings, clusters them and picks representatives.
ClusterModel cluster_split(LabelClass split, const std::vector<EmbeddedSample>& samples, std::size_t k,
                           std::uint64_t rng_seed);

struct ClusteredRow {
    BackpromptRecord record;
    LabelClass predicted_label = LabelClass::GeneralContent;
    std::size_t cluster_id = 0;
    std::size_t cluster_size = 0;
    bool is_representative = false;
    std::vector<std::string> neighbor_ids;

    const std::string& id() const { return record.seed_id; }
    ClusterRef cluster() const { return {predicted_label, cluster_id}; }
};

struct ClusteredCorpus {
    std::vector<ClusteredRow> rows;  // corpus order
    std::map<LabelClass, ClusterModel> models;
};

ClusteredCorpus cluster_corpus(const std::vector<BackpromptRecord>& records, Classifier& classifier, std::size_t k,
                               std::uint64_t rng_seed);

json to_json(const ClusteredRow& row);
ClusteredRow clustered_row_from_json(const json& object);

void write_clustered_corpus(const std::filesystem::path& path, const std::vector<ClusteredRow>& rows,
                            const std::optional<json>& provenance = std::nullopt);
/// Throws ParseError if any row lacks the cluster fields.
std::vector<ClusteredRow> read_clustered_corpus(const std::filesystem::path& path);

ClusterAssignments assignments_of(const std::vector<ClusteredRow>& rows);
std::map<ClusterRef, std::string> representatives_of(const std::vector<ClusteredRow>& rows);

/// The labeled synthetic dataset: one sample per row carrying its final label
/// and label provenance. `labels` must follow `rows` order.
Dataset labeled_dataset(const std::vector<ClusteredRow>& rows, const std::vector<PropagatedLabel>& labels);

/// propagate() over a clustered corpus followed by labeled_dataset().
Dataset propagate_corpus(const std::vector<ClusteredRow>& rows, const std::map<std::string, LabelClass>& human_labels);

} // namespace bpf
