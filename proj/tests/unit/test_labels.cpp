#include <gtest/gtest.h>

#include "bpf/error.hpp"
#include "bpf/labels.hpp"

using namespace bpf;

TEST(Labels, CollapseHealthAdviceIsPositive) {
    EXPECT_EQ(collapse_for_inference(LabelClass::HealthAdvice), Polarity::Positive);
}

TEST(Labels, CollapseHealthContentIsNegative) {
    EXPECT_EQ(collapse_for_inference(LabelClass::HealthContent), Polarity::Negative);
}

TEST(Labels, CollapseGeneralContentIsNegative) {
    EXPECT_EQ(collapse_for_inference(LabelClass::GeneralContent), Polarity::Negative);
}

TEST(Labels, CanonicalStringsRoundTrip) {
    for (auto label : kAllLabels) EXPECT_EQ(parse_label(to_string(label)), label);
    EXPECT_EQ(to_string(LabelClass::HealthAdvice), "health-advice");
    EXPECT_EQ(to_string(LabelClass::HealthContent), "health-content");
    EXPECT_EQ(to_string(LabelClass::GeneralContent), "general-content");
}

TEST(Labels, UnknownLabelIsParseError) {
    EXPECT_THROW(parse_label("advice!"), ParseError);
    EXPECT_FALSE(try_parse_label("Health-Advice").has_value());
}

TEST(Labels, PolarityParsing) {
    EXPECT_EQ(parse_polarity("positive"), Polarity::Positive);
    EXPECT_EQ(parse_polarity("negative"), Polarity::Negative);
    EXPECT_THROW(parse_polarity("neutral"), ParseError);
}

TEST(Labels, MatchesFollowsCollapse) {
    EXPECT_TRUE(matches(LabelClass::HealthAdvice, Polarity::Positive));
    EXPECT_TRUE(matches(LabelClass::HealthContent, Polarity::Negative));
    EXPECT_FALSE(matches(LabelClass::GeneralContent, Polarity::Positive));
}
