#include "bpf/labels.hpp"

#include "bpf/error.hpp"

namespace bpf {

std::string_view to_string(LabelClass label) noexcept {
    switch (label) {
    case LabelClass::HealthAdvice: return "health-advice";
    case LabelClass::HealthContent: return "health-content";
    case LabelClass::GeneralContent: return "general-content";
    }
    return "general-content";
}

std::string_view to_string(Polarity polarity) noexcept {
    return polarity == Polarity::Positive ? "positive" : "negative";
}

std::optional<LabelClass> try_parse_label(std::string_view text) noexcept {
    for (auto label : kAllLabels) {
        if (to_string(label) == text) return label;
    }
    return std::nullopt;
}

LabelClass parse_label(std::string_view text) {
    if (auto label = try_parse_label(text)) return *label;
    throw ParseError("unknown label '" + std::string(text) + "'");
}

Polarity parse_polarity(std::string_view text) {
    if (text == "positive") return Polarity::Positive;
    if (text == "negative") return Polarity::Negative;
    throw ParseError("unknown polarity '" + std::string(text) + "' (expected positive|negative)");
}

} // namespace bpf
