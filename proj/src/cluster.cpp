#include "bpf/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "bpf/error.hpp"

namespace bpf {
namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// [0, 1) from the top 53 bits; identical on every standard library.
double uniform01(std::mt19937_64& engine) {
    return static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

std::size_t nearest_centroid(const Vector& point, std::span<const Vector> centroids) {
    std::size_t best = 0;
    double best_distance = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.size(); ++c) {
        double d = squared_distance(point, centroids[c]);
        if (d < best_distance) {
            best_distance = d;
            best = c;
        }
    }
    return best;
}

std::vector<Vector> kmeanspp_init(std::span<const Vector> vectors, std::size_t k, std::mt19937_64& engine) {
    const std::size_t n = vectors.size();
    std::vector<Vector> centers;
    centers.reserve(k);
    centers.push_back(vectors[std::min(n - 1, static_cast<std::size_t>(uniform01(engine) * n))]);

    std::vector<double> min_distance(n);
    for (std::size_t i = 0; i < n; ++i) min_distance[i] = squared_distance(vectors[i], centers.back());

    while (centers.size() < k) {
        double total = std::accumulate(min_distance.begin(), min_distance.end(), 0.0);
        double target = uniform01(engine) * total;
        std::size_t chosen = n;
        double cumulative = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (min_distance[i] <= 0.0) continue;
            cumulative += min_distance[i];
            chosen = i;
            if (cumulative > target) break;
        }
        // chosen < n: effective k never exceeds the number of distinct vectors.
        centers.push_back(vectors[chosen]);
        for (std::size_t i = 0; i < n; ++i) {
            min_distance[i] = std::min(min_distance[i], squared_distance(vectors[i], centers.back()));
        }
    }
    return centers;
}

KMeansResult lloyd(std::span<const Vector> vectors, std::vector<Vector> centroids, std::size_t max_iterations) {
    const std::size_t n = vectors.size();
    const std::size_t k = centroids.size();
    const std::size_t dim = vectors.front().size();

    KMeansResult result;
    std::vector<std::size_t> assignments(n);
    for (std::size_t i = 0; i < n; ++i) assignments[i] = nearest_centroid(vectors[i], centroids);
    result.sse_history.push_back(within_cluster_sse(vectors, centroids, assignments));

    for (std::size_t iteration = 0; iteration < max_iterations; ++iteration) {
        if (iteration > 0) {
            bool changed = false;
            for (std::size_t i = 0; i < n; ++i) {
                auto c = nearest_centroid(vectors[i], centroids);
                changed = changed || c != assignments[i];
                assignments[i] = c;
            }
            if (!changed) break;
        }

        // Repair empty clusters with the point farthest from its centroid.
        std::vector<std::size_t> sizes(k, 0);
        for (auto c : assignments) ++sizes[c];
        for (std::size_t empty = 0; empty < k; ++empty) {
            if (sizes[empty] != 0) continue;
            std::size_t farthest = n;
            double farthest_distance = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (sizes[assignments[i]] < 2) continue;
                double d = squared_distance(vectors[i], centroids[assignments[i]]);
                if (d > farthest_distance) {
                    farthest_distance = d;
                    farthest = i;
                }
            }
            if (farthest == n) break;
            --sizes[assignments[farthest]];
            assignments[farthest] = empty;
            sizes[empty] = 1;
        }

        std::vector<Vector> sums(k, Vector(dim, 0.0));
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t d = 0; d < dim; ++d) sums[assignments[i]][d] += vectors[i][d];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (sizes[c] == 0) continue;
            for (std::size_t d = 0; d < dim; ++d) centroids[c][d] = sums[c][d] / static_cast<double>(sizes[c]);
        }
        result.sse_history.push_back(within_cluster_sse(vectors, centroids, assignments));
        result.iterations = iteration + 1;
    }

    result.centroids = std::move(centroids);
    result.assignments = std::move(assignments);
    result.sse = result.sse_history.back();
    return result;
}

std::size_t count_distinct(std::span<const Vector> vectors) {
    std::set<Vector> distinct(vectors.begin(), vectors.end());
    return distinct.size();
}

Vector l2_normalized(Vector v) {
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm > 0.0) {
        norm = std::sqrt(norm);
        for (double& x : v) x /= norm;
    }
    return v;
}

} // namespace

double squared_distance(const Vector& a, const Vector& b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        sum += d * d;
    }
    return sum;
}

double within_cluster_sse(std::span<const Vector> vectors, std::span<const Vector> centroids,
                          std::span<const std::size_t> assignments) {
    double total = 0.0;
    for (std::size_t i = 0; i < vectors.size(); ++i) total += squared_distance(vectors[i], centroids[assignments[i]]);
    return total;
}

KMeansResult kmeans(std::span<const Vector> vectors, std::size_t k, std::uint64_t rng_seed, const KMeansOptions& options) {
    if (vectors.empty()) throw PreconditionError("kmeans: no vectors");
    if (k == 0) throw PreconditionError("kmeans: k must be >= 1");
    const std::size_t dim = vectors.front().size();
    for (const auto& v : vectors) {
        if (v.size() != dim) throw PreconditionError("kmeans: vectors have differing dimensions");
        for (double x : v) {
            if (!std::isfinite(x)) throw PreconditionError("kmeans: non-finite vector component");
        }
    }

    const std::size_t effective_k = std::min(k, count_distinct(vectors));
    std::uint64_t stream = rng_seed;
    std::optional<KMeansResult> best;
    for (std::size_t run = 0; run < std::max<std::size_t>(1, options.restarts); ++run) {
        std::mt19937_64 engine(splitmix64(stream));
        auto candidate = lloyd(vectors, kmeanspp_init(vectors, effective_k, engine), options.max_iterations);
        if (!best || candidate.sse < best->sse) best = std::move(candidate);
        if (best->sse == 0.0) break;
    }
    return std::move(*best);
}

std::map<std::size_t, std::string> select_representatives(std::span<const Vector> vectors,
                                                          std::span<const std::size_t> assignments,
                                                          std::span<const Vector> centroids,
                                                          std::span<const std::string> ids) {
    std::map<std::size_t, std::pair<double, std::size_t>> best;  // cluster -> (distance, row)
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        auto c = assignments[i];
        double d = squared_distance(vectors[i], centroids[c]);
        auto it = best.find(c);
        if (it == best.end()) {
            best.emplace(c, std::make_pair(d, i));
        } else if (d < it->second.first || (d == it->second.first && ids[i] < ids[it->second.second])) {
            it->second = {d, i};
        }
    }
    std::map<std::size_t, std::string> out;
    for (const auto& [c, entry] : best) out.emplace(c, ids[entry.second]);
    return out;
}

double cluster_size_std(std::span<const std::size_t> assignments) {
    std::map<std::size_t, std::size_t> sizes;
    for (auto c : assignments) ++sizes[c];
    if (sizes.empty()) return 0.0;
    double mean = static_cast<double>(assignments.size()) / static_cast<double>(sizes.size());
    double variance = 0.0;
    for (const auto& [c, size] : sizes) variance += (static_cast<double>(size) - mean) * (static_cast<double>(size) - mean);
    return std::sqrt(variance / static_cast<double>(sizes.size()));
}

std::map<LabelClass, std::vector<EmbeddedSample>> split_by_prediction(
    const std::vector<std::pair<std::string, std::string>>& samples, Classifier& classifier) {
    if (samples.empty()) throw PreconditionError("split_by_prediction: no samples");
    std::vector<std::string> texts;
    texts.reserve(samples.size());
    for (const auto& [id, text] : samples) texts.push_back(text);
    auto outputs = classifier.classify(texts);

    std::map<LabelClass, std::vector<EmbeddedSample>> groups;
    for (auto label : kAllLabels) groups[label];
    for (std::size_t i = 0; i < samples.size(); ++i) {
        groups[outputs[i].label].push_back({samples[i].first, std::move(outputs[i].embedding)});
    }
    return groups;
}

std::string_view to_string(LabelProvenance provenance) noexcept {
    return provenance == LabelProvenance::HumanCentroid ? "human-centroid" : "propagated";
}

std::vector<PropagatedLabel> propagate(const ClusterAssignments& assignments,
                                       const std::map<ClusterRef, std::string>& representatives,
                                       const std::map<std::string, LabelClass>& human_labels) {
    std::set<std::string> representative_ids;
    for (const auto& [cluster, id] : representatives) representative_ids.insert(id);

    std::vector<std::string> offending;
    for (const auto& id : representative_ids) {
        if (!human_labels.count(id)) offending.push_back("missing:" + id);
    }
    for (const auto& [id, label] : human_labels) {
        if (!representative_ids.count(id)) offending.push_back("unexpected:" + id);
    }
    if (!offending.empty()) {
        std::string message = "human labels must cover exactly the representatives:";
        for (const auto& o : offending) message += " " + o;
        throw ConflictError(message, offending);
    }

    std::vector<PropagatedLabel> out;
    out.reserve(assignments.size());
    for (const auto& [sample_id, cluster] : assignments) {
        auto rep = representatives.find(cluster);
        if (rep == representatives.end()) {
            throw PreconditionError("cluster of sample '" + sample_id + "' has no representative");
        }
        out.push_back({sample_id, human_labels.at(rep->second),
                       rep->second == sample_id ? LabelProvenance::HumanCentroid : LabelProvenance::Propagated,
                       cluster});
    }
    return out;
}

ClusterModel cluster_split(LabelClass split, const std::vector<EmbeddedSample>& samples, std::size_t k,
                           std::uint64_t rng_seed) {
    ClusterModel model;
    model.split_label = split;
    model.rng_seed = rng_seed;
    if (samples.empty()) return model;

    std::vector<Vector> vectors;
    std::vector<std::string> ids;
    vectors.reserve(samples.size());
    ids.reserve(samples.size());
    for (const auto& s : samples) {
        vectors.push_back(l2_normalized(s.embedding));
        ids.push_back(s.id);
    }

    auto result = kmeans(vectors, k, rng_seed);
    model.k = result.centroids.size();
    model.centroids = result.centroids;
    model.sse = result.sse;
    for (std::size_t i = 0; i < ids.size(); ++i) model.assignments[ids[i]] = result.assignments[i];
    model.representatives = select_representatives(vectors, result.assignments, result.centroids, ids);

    for (const auto& [cluster, rep_id] : model.representatives) {
        auto rep_row = static_cast<std::size_t>(std::find(ids.begin(), ids.end(), rep_id) - ids.begin());
        std::vector<std::pair<double, std::string>> members;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (result.assignments[i] == cluster && i != rep_row) {
                members.emplace_back(squared_distance(vectors[i], vectors[rep_row]), ids[i]);
            }
        }
        std::sort(members.begin(), members.end());
        auto& neighbors = model.neighbors[cluster];
        for (std::size_t j = 0; j < std::min<std::size_t>(3, members.size()); ++j) neighbors.push_back(members[j].second);
    }
    return model;
}

ClusteredCorpus cluster_corpus(const std::vector<BackpromptRecord>& records, Classifier& classifier, std::size_t k,
                               std::uint64_t rng_seed) {
    std::vector<std::pair<std::string, std::string>> samples;
    samples.reserve(records.size());
    for (const auto& r : records) samples.emplace_back(r.seed_id, r.synthetic_text);
    auto groups = split_by_prediction(samples, classifier);

    ClusteredCorpus corpus;
    std::map<std::string, LabelClass> predicted;
    for (const auto& [label, members] : groups) {
        for (const auto& m : members) predicted[m.id] = label;
        corpus.models[label] = cluster_split(label, members, k, rng_seed);
    }

    for (const auto& record : records) {
        ClusteredRow row;
        row.record = record;
        row.predicted_label = predicted.at(record.seed_id);
        const auto& model = corpus.models.at(row.predicted_label);
        row.cluster_id = model.assignments.at(record.seed_id);
        row.cluster_size = static_cast<std::size_t>(std::count_if(
            model.assignments.begin(), model.assignments.end(), [&](const auto& a) { return a.second == row.cluster_id; }));
        row.is_representative = model.representatives.at(row.cluster_id) == record.seed_id;
        if (row.is_representative) row.neighbor_ids = model.neighbors.at(row.cluster_id);
        corpus.rows.push_back(std::move(row));
    }
    return corpus;
}

json to_json(const ClusteredRow& row) {
    json out = to_json(row.record);
    out.erase("type");
    out["predicted_label"] = to_string(row.predicted_label);
    out["split"] = to_string(row.predicted_label);
    out["cluster_id"] = row.cluster_id;
    out["cluster_size"] = row.cluster_size;
    out["is_representative"] = row.is_representative;
    if (row.is_representative) out["neighbors"] = row.neighbor_ids;
    return out;
}

ClusteredRow clustered_row_from_json(const json& o) {
    ClusteredRow row;
    row.record = record_from_json(o);
    row.predicted_label = parse_label(o.at("split").get<std::string>());
    row.cluster_id = o.at("cluster_id").get<std::size_t>();
    row.cluster_size = o.value("cluster_size", std::size_t{0});
    row.is_representative = o.at("is_representative").get<bool>();
    if (auto it = o.find("neighbors"); it != o.end()) row.neighbor_ids = it->get<std::vector<std::string>>();
    return row;
}

void write_clustered_corpus(const std::filesystem::path& path, const std::vector<ClusteredRow>& rows,
                            const std::optional<json>& provenance) {
    std::vector<json> lines;
    lines.reserve(rows.size());
    for (const auto& row : rows) lines.push_back(to_json(row));
    write_jsonl(path, lines, provenance);
}

std::vector<ClusteredRow> read_clustered_corpus(const std::filesystem::path& path) {
    std::vector<ClusteredRow> rows;
    read_jsonl(path, [&](std::size_t line, const json& o) {
        for (const char* key : {"split", "cluster_id", "is_representative"}) {
            if (!o.contains(key)) throw ParseError(std::string("clustered corpus row lacks '") + key + "'", line);
        }
        try {
            rows.push_back(clustered_row_from_json(o));
        } catch (const json::exception& e) {
            throw ParseError(std::string("bad clustered corpus row: ") + e.what(), line);
        }
    });
    return rows;
}

ClusterAssignments assignments_of(const std::vector<ClusteredRow>& rows) {
    ClusterAssignments out;
    out.reserve(rows.size());
    for (const auto& row : rows) out.emplace_back(row.id(), row.cluster());
    return out;
}

std::map<ClusterRef, std::string> representatives_of(const std::vector<ClusteredRow>& rows) {
    std::map<ClusterRef, std::string> out;
    for (const auto& row : rows) {
        if (row.is_representative) out[row.cluster()] = row.id();
    }
    return out;
}

Dataset labeled_dataset(const std::vector<ClusteredRow>& rows, const std::vector<PropagatedLabel>& labels) {
    if (rows.size() != labels.size()) throw PreconditionError("labeled_dataset: rows and labels differ in length");
    Dataset out;
    out.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& row = rows[i];
        const auto& label = labels[i];
        if (label.sample_id != row.id()) throw PreconditionError("labeled_dataset: label order does not follow rows");
        TextSample sample;
        sample.id = row.id();
        sample.text = row.record.synthetic_text;
        sample.label = label.final_label;
        sample.source = row.record.seed_source + "-synthetic";
        sample.meta = json{{"origin", "synthetic"},
                           {"seed_id", row.record.seed_id},
                           {"seed_source", row.record.seed_source},
                           {"query", row.record.query},
                           {"predicted_label", to_string(row.predicted_label)},
                           {"split", to_string(label.cluster.split)},
                           {"cluster_id", label.cluster.index},
                           {"label_provenance", to_string(label.provenance)}};
        sample.meta["seed_polarity"] =
            row.record.seed_polarity ? json(to_string(*row.record.seed_polarity)) : json(nullptr);
        out.push_back(std::move(sample));
    }
    return out;
}

Dataset propagate_corpus(const std::vector<ClusteredRow>& rows, const std::map<std::string, LabelClass>& human_labels) {
    return labeled_dataset(rows, propagate(assignments_of(rows), representatives_of(rows), human_labels));
}

} // namespace bpf
