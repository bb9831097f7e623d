#include "bpf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <random>

#include "bpf/error.hpp"

namespace bpf {
namespace {

double ratio(std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

// Two-decimal percent in integer hundredths, half-up.
std::int64_t hundredths(std::uint64_t num, std::uint64_t den) {
    if (den == 0) return 0;
    return static_cast<std::int64_t>((2 * num * 10000 + den) / (2 * den));
}

double cosine(const Vector& a, const Vector& b, double norm_a, double norm_b) {
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
    return dot / (norm_a * norm_b);
}

std::vector<double> checked_norms(std::span<const Vector> vectors, std::size_t dim, const char* which) {
    std::vector<double> norms;
    norms.reserve(vectors.size());
    for (const auto& v : vectors) {
        if (v.size() != dim) throw PreconditionError(std::string("drift_score: ") + which + " has mixed dimensions");
        double n = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
        if (!(n > 0.0) || !std::isfinite(n)) throw PreconditionError(std::string("drift_score: zero-norm ") + which + " vector");
        norms.push_back(n);
    }
    return norms;
}

double mean_best_match(std::span<const Vector> from, const std::vector<double>& from_norms, std::span<const Vector> to,
                       const std::vector<double>& to_norms) {
    double sum = 0.0;
    for (std::size_t i = 0; i < from.size(); ++i) {
        double best = -1.0;
        for (std::size_t j = 0; j < to.size(); ++j) best = std::max(best, cosine(from[i], to[j], from_norms[i], to_norms[j]));
        sum += best;
    }
    return sum / static_cast<double>(from.size());
}

double uniform01(std::mt19937_64& engine) {
    return static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

std::size_t uniform_index(std::mt19937_64& engine, std::size_t n) {
    return std::min(n - 1, static_cast<std::size_t>(uniform01(engine) * static_cast<double>(n)));
}

} // namespace

ConfusionMatrix confusion(std::span<const LabelClass> predictions, std::span<const LabelClass> golds) {
    if (predictions.size() != golds.size()) {
        throw PreconditionError("confusion: " + std::to_string(predictions.size()) + " predictions vs " +
                                std::to_string(golds.size()) + " gold labels");
    }
    if (predictions.empty()) throw PreconditionError("confusion: no samples");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        bool pred = collapse_for_inference(predictions[i]) == Polarity::Positive;
        bool gold = collapse_for_inference(golds[i]) == Polarity::Positive;
        if (pred && gold) {
            ++cm.tp;
        } else if (pred) {
            ++cm.fp;
        } else if (gold) {
            ++cm.fn;
        } else {
            ++cm.tn;
        }
    }
    return cm;
}

double percent_2dp(std::uint64_t numerator, std::uint64_t denominator) {
    return static_cast<double>(hundredths(numerator, denominator)) / 100.0;
}

double round_half_up(double value, int decimals) {
    double scale = std::pow(10.0, decimals);
    return std::floor(value * scale + 0.5) / scale;
}

ClassificationMetrics classification_metrics(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw PreconditionError("classification_metrics: empty confusion matrix");
    ClassificationMetrics m;
    m.accuracy = ratio(cm.tp + cm.tn, cm.total());
    m.precision = ratio(cm.tp, cm.tp + cm.fp);
    m.recall = ratio(cm.tp, cm.tp + cm.fn);
    // Harmonic mean of P and R, written as 2tp / (2tp + fp + fn).
    m.f1 = ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn);
    m.pr_gap = std::abs(m.precision - m.recall);

    m.display_accuracy = percent_2dp(cm.tp + cm.tn, cm.total());
    m.display_precision = percent_2dp(cm.tp, cm.tp + cm.fp);
    m.display_recall = percent_2dp(cm.tp, cm.tp + cm.fn);
    m.display_f1 = percent_2dp(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn);
    m.display_pr_gap =
        static_cast<double>(std::llabs(hundredths(cm.tp, cm.tp + cm.fp) - hundredths(cm.tp, cm.tp + cm.fn))) / 100.0;
    return m;
}

double false_positive_rate(const ConfusionMatrix& cm) {
    if (cm.fp + cm.tn == 0) throw PreconditionError("false_positive_rate: no negative samples");
    return ratio(cm.fp, cm.fp + cm.tn);
}

json metrics_report(const ConfusionMatrix& cm) {
    auto m = classification_metrics(cm);
    json report{{"confusion", {{"tp", cm.tp}, {"fp", cm.fp}, {"fn", cm.fn}, {"tn", cm.tn}}},
                {"accuracy", m.accuracy},
                {"precision", m.precision},
                {"recall", m.recall},
                {"f1", m.f1},
                {"pr_gap", m.pr_gap},
                {"display_percent",
                 {{"accuracy", m.display_accuracy},
                  {"precision", m.display_precision},
                  {"recall", m.display_recall},
                  {"f1", m.display_f1},
                  {"pr_gap", m.display_pr_gap}}}};
    if (cm.fp + cm.tn > 0) {
        report["fpr"] = false_positive_rate(cm);
        report["display_percent"]["fpr"] = percent_2dp(cm.fp, cm.fp + cm.tn);
    }
    return report;
}

DistributionStats distribution_stats(const Dataset& labeled) {
    if (labeled.empty()) throw PreconditionError("distribution_stats: empty dataset");
    DistributionStats out;
    for (auto label : kAllLabels) out.counts[label] = 0;
    for (const auto& s : labeled) {
        if (!s.label) throw PreconditionError("distribution_stats: sample '" + s.id + "' is unlabeled");
        ++out.counts[*s.label];
    }
    out.total = labeled.size();
    const auto ha = out.counts[LabelClass::HealthAdvice];
    const auto hc = out.counts[LabelClass::HealthContent];
    out.health_fraction = ratio(ha + hc, out.total);
    out.advice_fraction = ratio(ha, out.total);
    return out;
}

DriftScore drift_score(std::span<const Vector> candidate, std::span<const Vector> reference) {
    if (candidate.empty() || reference.empty()) throw PreconditionError("drift_score: empty token list");
    const std::size_t dim = candidate.front().size();
    auto cand_norms = checked_norms(candidate, dim, "candidate");
    auto ref_norms = checked_norms(reference, dim, "reference");

    DriftScore s;
    s.precision = mean_best_match(candidate, cand_norms, reference, ref_norms);
    s.recall = mean_best_match(reference, ref_norms, candidate, cand_norms);
    s.f1 = (s.precision + s.recall) > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    return s;
}

std::string_view to_string(AuditVerdict verdict) noexcept {
    switch (verdict) {
    case AuditVerdict::Correct: return "correct";
    case AuditVerdict::FalsePositive: return "fp";
    case AuditVerdict::FalseNegative: return "fn";
    }
    return "correct";
}

AuditVerdict parse_verdict(std::string_view text) {
    if (text == "correct") return AuditVerdict::Correct;
    if (text == "fp") return AuditVerdict::FalsePositive;
    if (text == "fn") return AuditVerdict::FalseNegative;
    throw ParseError("unknown audit verdict '" + std::string(text) + "' (expected correct|fp|fn)");
}

json to_json(const AuditRow& row) {
    json out{{"split", row.split},
             {"cluster_id", row.cluster_id},
             {"sample_id", row.sample_id},
             {"text", row.text},
             {"propagated_label", to_string(row.propagated_label)}};
    out["verdict"] = row.verdict ? json(to_string(*row.verdict)) : json(nullptr);
    return out;
}

AuditRow audit_row_from_json(const json& o) {
    AuditRow row;
    row.split = o.at("split").get<std::string>();
    row.cluster_id = o.at("cluster_id").get<std::size_t>();
    row.sample_id = o.at("sample_id").get<std::string>();
    row.text = o.value("text", std::string{});
    row.propagated_label = parse_label(o.at("propagated_label").get<std::string>());
    if (auto it = o.find("verdict"); it != o.end() && it->is_string()) row.verdict = parse_verdict(it->get<std::string>());
    return row;
}

std::vector<AuditRow> audit_sample(const Dataset& labeled, std::size_t per_cluster, std::uint64_t rng_seed) {
    std::map<std::pair<std::string, std::size_t>, std::vector<const TextSample*>> clusters;
    for (const auto& s : labeled) {
        if (!s.label) throw PreconditionError("audit_sample: sample '" + s.id + "' is unlabeled");
        if (!s.meta.is_object() || !s.meta.contains("split") || !s.meta.contains("cluster_id")) {
            throw PreconditionError("audit_sample: sample '" + s.id + "' has no cluster metadata");
        }
        clusters[{s.meta["split"].get<std::string>(), s.meta["cluster_id"].get<std::size_t>()}].push_back(&s);
    }

    // Split order follows the label enumeration, not the string order.
    auto split_rank = [](const std::string& split) {
        auto label = try_parse_label(split);
        return label ? static_cast<int>(*label) : 3;
    };
    std::vector<std::pair<std::string, std::size_t>> order;
    for (const auto& [key, members] : clusters) order.push_back(key);
    std::stable_sort(order.begin(), order.end(), [&](const auto& a, const auto& b) {
        return std::make_pair(split_rank(a.first), a.second) < std::make_pair(split_rank(b.first), b.second);
    });

    std::mt19937_64 engine(rng_seed);
    std::vector<AuditRow> rows;
    for (const auto& key : order) {
        auto members = clusters[key];
        const std::size_t take = std::min(per_cluster, members.size());
        for (std::size_t i = 0; i < take; ++i) {
            std::swap(members[i], members[i + uniform_index(engine, members.size() - i)]);
            const auto& s = *members[i];
            rows.push_back({key.first, key.second, s.id, s.text, *s.label, std::nullopt});
        }
    }
    return rows;
}

AuditScore audit_accuracy(std::span<const AuditVerdict> verdicts) {
    if (verdicts.empty()) throw PreconditionError("audit_accuracy: no audited rows");
    AuditScore score;
    score.total = verdicts.size();
    for (auto v : verdicts) {
        if (v == AuditVerdict::FalsePositive) ++score.fp;
        if (v == AuditVerdict::FalseNegative) ++score.fn;
    }
    const auto correct = score.total - score.fp - score.fn;
    score.accuracy = ratio(correct, score.total);
    score.display_accuracy = percent_2dp(correct, score.total);
    return score;
}

double significance(std::span<const bool> correct_a, std::span<const bool> correct_b, std::size_t iterations,
                    std::uint64_t rng_seed) {
    if (correct_a.size() != correct_b.size()) throw PreconditionError("significance: inputs differ in length");
    if (correct_a.empty()) throw PreconditionError("significance: no samples");
    if (iterations == 0) throw PreconditionError("significance: iterations must be >= 1");

    const std::size_t n = correct_a.size();
    std::vector<int> diff(n);
    std::int64_t observed = 0;
    for (std::size_t i = 0; i < n; ++i) {
        diff[i] = static_cast<int>(correct_a[i]) - static_cast<int>(correct_b[i]);
        observed += diff[i];
    }

    // Sums are compared as integers: |S* - S| >= |S| over n-sample resamples.
    std::mt19937_64 engine(rng_seed);
    std::size_t extreme = 0;
    for (std::size_t it = 0; it < iterations; ++it) {
        std::int64_t resampled = 0;
        for (std::size_t j = 0; j < n; ++j) resampled += diff[uniform_index(engine, n)];
        if (std::llabs(resampled - observed) >= std::llabs(observed)) ++extreme;
    }
    return static_cast<double>(extreme) / static_cast<double>(iterations);
}

} // namespace bpf
