#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bpf/corpus.hpp"
#include "bpf/gateway.hpp"

namespace bpf {

/// Binary-collapsed counts (health-advice positive).
struct ConfusionMatrix {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t tn = 0;

    std::size_t total() const noexcept { return tp + fp + fn + tn; }
    bool operator==(const ConfusionMatrix&) const = default;
};

ConfusionMatrix confusion(std::span<const LabelClass> predictions, std::span<const LabelClass> golds);

/// Percent with two decimals, rounded half-up exactly from num/den (0 when den == 0).
double percent_2dp(std::uint64_t numerator, std::uint64_t denominator);

/// Half-up rounding of a non-negative value to `decimals` places.
double round_half_up(double value, int decimals);

/// Fractions in [0, 1] at full precision, plus the two-decimal percentages a
/// table would show. `display_pr_gap` is |shown precision - shown recall|.
struct ClassificationMetrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double pr_gap = 0.0;

    double display_accuracy = 0.0;
    double display_precision = 0.0;
    double display_recall = 0.0;
    double display_f1 = 0.0;
    double display_pr_gap = 0.0;
};

/// Throws PreconditionError on an all-zero matrix.
ClassificationMetrics classification_metrics(const ConfusionMatrix& cm);

/// fp / (fp + tn); throws PreconditionError when there are no negatives.
double false_positive_rate(const ConfusionMatrix& cm);

json metrics_report(const ConfusionMatrix& cm);

struct DistributionStats {
    std::map<LabelClass, std::size_t> counts;
    std::size_t total = 0;
    double health_fraction = 0.0;  // (HC + HA) / total
    double advice_fraction = 0.0;  // HA / total
};

DistributionStats distribution_stats(const Dataset& labeled);

/// Greedy-matching similarity between token embeddings (no IDF weighting,
/// no baseline rescaling).
struct DriftScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// precision: mean over candidate tokens of the best cosine against the
/// reference; recall: the converse. Throws PreconditionError on empty lists,
/// mixed dimensions or a zero-norm vector.
DriftScore drift_score(std::span<const Vector> candidate, std::span<const Vector> reference);

// ---- label audit -------------------------------------------------------------

enum class AuditVerdict { Correct, FalsePositive, FalseNegative };
std::string_view to_string(AuditVerdict verdict) noexcept;
AuditVerdict parse_verdict(std::string_view text);

struct AuditRow {
    std::string split;
    std::size_t cluster_id = 0;
    std::string sample_id;
    std::string text;
    LabelClass propagated_label = LabelClass::GeneralContent;
    std::optional<AuditVerdict> verdict;
};

json to_json(const AuditRow& row);
AuditRow audit_row_from_json(const json& object);

/// Draws min(per_cluster, size) members of every cluster of a labeled
/// synthetic dataset (records need `split` and `cluster_id` metadata),
/// without replacement. Clusters are visited in (split, cluster) order.
std::vector<AuditRow> audit_sample(const Dataset& labeled, std::size_t per_cluster = 2, std::uint64_t rng_seed = 0);

struct AuditScore {
    std::size_t total = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    double accuracy = 0.0;
    double display_accuracy = 0.0;
};

AuditScore audit_accuracy(std::span<const AuditVerdict> verdicts);

/// Two-sided paired bootstrap over the accuracy difference of two systems
/// scored on the same samples. Returns the fraction of resamples whose
/// centered difference is at least as extreme as the observed one.
double significance(std::span<const bool> correct_a, std::span<const bool> correct_b, std::size_t iterations = 10000,
                    std::uint64_t rng_seed = 0);

} // namespace bpf
