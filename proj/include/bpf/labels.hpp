#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace bpf {

/// Three-way training label. At inference time only `HealthAdvice` is positive.
enum class LabelClass { HealthAdvice, HealthContent, GeneralContent };

inline constexpr std::array<LabelClass, 3> kAllLabels{
    LabelClass::HealthAdvice, LabelClass::HealthContent, LabelClass::GeneralContent};

enum class Polarity { Positive, Negative };

std::string_view to_string(LabelClass label) noexcept;
std::string_view to_string(Polarity polarity) noexcept;

/// Parses a canonical label string; throws ParseError on anything else.
LabelClass parse_label(std::string_view text);
std::optional<LabelClass> try_parse_label(std::string_view text) noexcept;

Polarity parse_polarity(std::string_view text);

/// Binary collapse used at inference: health-advice is positive, the rest negative.
constexpr Polarity collapse_for_inference(LabelClass label) noexcept {
    return label == LabelClass::HealthAdvice ? Polarity::Positive : Polarity::Negative;
}

constexpr bool matches(LabelClass label, Polarity polarity) noexcept {
    return collapse_for_inference(label) == polarity;
}

} // namespace bpf
