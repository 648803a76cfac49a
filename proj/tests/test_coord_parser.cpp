#include <gtest/gtest.h>

#include <cmath>

#include "autofocus/coord_parser.hpp"

using namespace autofocus;

namespace {
std::vector<TokenScore> toks(std::initializer_list<std::pair<const char*, double>> list) {
    std::vector<TokenScore> out;
    for (const auto& [t, lp] : list) out.push_back({t, lp});
    return out;
}
}  // namespace

TEST(ParseCoordinate, ParenPairSplitTokens) {
    const auto t = toks({{"(", 0}, {"12", -0.1}, {"3", -0.2}, {", ", 0}, {"45", -0.3}, {"6", -0.4}, {")", 0}});
    const ParsedCoordinate p = parse_coordinate(t, CoordinateGrammar{});
    EXPECT_EQ(p.point, (Point{123, 456}));
    EXPECT_EQ(p.spans.x, (TokenSpan{1, 3}));
    EXPECT_EQ(p.spans.y, (TokenSpan{4, 6}));
}

TEST(ParseCoordinate, DelimiterMergedIntoDigitToken) {
    const auto t = toks({{"(", 0}, {"7", -1}, {",4", -2}, {"2)", -3}});
    const ParsedCoordinate p = parse_coordinate(t, CoordinateGrammar{});
    EXPECT_EQ(p.point, (Point{7, 42}));
    EXPECT_EQ(p.spans.x, (TokenSpan{1, 2}));
    EXPECT_EQ(p.spans.y, (TokenSpan{2, 4}));
}

TEST(ParseCoordinate, JsonAndTagged) {
    const CoordinateGrammar json{GrammarStyle::json_object};
    const auto a = toks({{"{\"x\": ", 0}, {"81", -1}, {", \"y\": ", 0}, {"9", -1}, {"}", 0}});
    EXPECT_EQ(parse_coordinate(a, json).point, (Point{81, 9}));

    const CoordinateGrammar tagged{GrammarStyle::tagged_box};
    const auto b = toks({{"<|box_start|>", 0}, {"(", 0}, {"640", -1}, {",", 0}, {"48", -1}, {")<|box_end|>", 0}});
    const ParsedCoordinate p = parse_coordinate(b, tagged);
    EXPECT_EQ(p.point, (Point{640, 48}));
    EXPECT_EQ(p.spans.y, (TokenSpan{4, 5}));
}

TEST(ParseCoordinate, UnitIntervalRescales) {
    const CoordinateGrammar g{GrammarStyle::paren_pair, CoordinateUnits::unit_interval};
    const auto t = toks({{"(0.", -1}, {"25", -1}, {", 0.5)", -1}});
    const ParsedCoordinate p = parse_coordinate(t, g, {1920, 1080});
    EXPECT_DOUBLE_EQ(p.point.x, 480.0);
    EXPECT_DOUBLE_EQ(p.point.y, 540.0);
    EXPECT_THROW(parse_coordinate(t, g), InvalidArgument);
}

TEST(ParseCoordinate, Errors) {
    auto kind_of = [](const std::vector<TokenScore>& t) {
        try {
            parse_coordinate(t, CoordinateGrammar{});
        } catch (const ParseError& e) {
            return e.kind();
        }
        ADD_FAILURE() << "no ParseError";
        return ParseErrorKind::no_coordinate;
    };
    EXPECT_EQ(kind_of(toks({{"I cannot see it", -1}})), ParseErrorKind::no_coordinate);
    EXPECT_EQ(kind_of(toks({{"(1, 2) or (3, 4)", -1}})), ParseErrorKind::multiple_coordinates);
    EXPECT_EQ(kind_of(toks({{"(1, 2)", -1}, {"", 0}})), ParseErrorKind::alignment_failure);
    const auto t = toks({{"(1, 2)", -1}});
    EXPECT_THROW(parse_coordinate(t, "(1, 3)", CoordinateGrammar{}), ParseError);
}

TEST(Serialize, RoundTripsThroughParser) {
    for (auto style : {GrammarStyle::paren_pair, GrammarStyle::json_object, GrammarStyle::tagged_box}) {
        const CoordinateGrammar g{style};
        const std::string s = serialize_point({317.4, 22.6}, g);
        const ParsedCoordinate p = parse_coordinate(toks({{s.c_str(), -0.5}}), g);
        EXPECT_EQ(p.point, (Point{317, 23})) << s;
    }
    EXPECT_EQ(serialize_point({5, 6}, {}), "(5, 6)");
}

TEST(Perplexity, TwoHalfTokensGiveTwo) {
    const auto t = toks({{"a", std::log(0.5)}, {"b", std::log(0.5)}});
    EXPECT_DOUBLE_EQ(axial_perplexity(t, {0, 2}), 2.0);
    EXPECT_DOUBLE_EQ(total_perplexity(t), 2.0);
}

TEST(Perplexity, AxialSpansAreIndependent) {
    const auto t = toks({{"(", 0}, {"12", std::log(0.5)}, {", ", 0}, {"3", std::log(0.25)}, {")", 0}});
    const ParsedCoordinate p = parse_coordinate(t, CoordinateGrammar{});
    EXPECT_DOUBLE_EQ(axial_perplexity(t, p.spans.x), 2.0);
    EXPECT_DOUBLE_EQ(axial_perplexity(t, p.spans.y), 4.0);
    EXPECT_NEAR(coordinate_perplexity(t, p.spans), std::sqrt(8.0), 1e-12);
    EXPECT_NEAR(total_perplexity(t), std::exp(std::log(8.0) / 5.0), 1e-12);
}

TEST(Perplexity, SharedTokenCountedOnce) {
    // "1,2" in one token belongs to both spans.
    const auto t = toks({{"(", 0}, {"1,2", std::log(0.5)}, {")", 0}});
    const ParsedCoordinate p = parse_coordinate(t, CoordinateGrammar{});
    EXPECT_EQ(p.spans.x, p.spans.y);
    EXPECT_DOUBLE_EQ(coordinate_perplexity(t, p.spans), 2.0);
}

TEST(FormatHint, NamesTheGrammar) {
    EXPECT_EQ(format_hint({}), "formatted as (x, y) in integer pixels of the given image");
    EXPECT_NE(format_hint({GrammarStyle::json_object}).find("\"x\": x"), std::string::npos);
}
