#pragma once

// Coordinate extraction from generated text and the token-to-axis alignment
// that axial perplexity is computed over.

#include <charconv>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <iterator>
#include <regex>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "autofocus/error.hpp"
#include "autofocus/geometry.hpp"

namespace autofocus {

struct TokenScore {
    std::string text;
    double logprob = 0.0;  // natural log, <= 0

    friend bool operator==(const TokenScore&, const TokenScore&) = default;
};

// Half-open token index range [begin, end).
struct TokenSpan {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const { return end - begin; }
    bool empty() const { return end <= begin; }
    friend bool operator==(const TokenSpan&, const TokenSpan&) = default;
};

struct AxialSpans {
    TokenSpan x;
    TokenSpan y;

    friend bool operator==(const AxialSpans&, const AxialSpans&) = default;
};

enum class GrammarStyle { paren_pair, json_object, tagged_box };
enum class CoordinateUnits { pixels, unit_interval };

struct CoordinateGrammar {
    GrammarStyle style = GrammarStyle::paren_pair;
    CoordinateUnits units = CoordinateUnits::pixels;
    // tagged_box delimiters
    std::string open_tag = "<|box_start|>";
    std::string close_tag = "<|box_end|>";
    // json_object keys
    std::string x_key = "x";
    std::string y_key = "y";
};

inline const char* to_string(GrammarStyle style) {
    switch (style) {
        case GrammarStyle::paren_pair: return "paren_pair";
        case GrammarStyle::json_object: return "json_object";
        case GrammarStyle::tagged_box: return "tagged_box";
    }
    return "paren_pair";
}

inline GrammarStyle parse_grammar_style(std::string_view name) {
    if (name == "paren_pair") return GrammarStyle::paren_pair;
    if (name == "json_object") return GrammarStyle::json_object;
    if (name == "tagged_box") return GrammarStyle::tagged_box;
    throw InvalidArgument("unknown coordinate_grammar: " + std::string(name));
}

struct ParsedCoordinate {
    Point point;
    AxialSpans spans;
    // Character ranges [first, second) of the x and y numbers in the text.
    std::pair<std::size_t, std::size_t> x_chars;
    std::pair<std::size_t, std::size_t> y_chars;
};

namespace detail {

inline std::string regex_escape(std::string_view s) {
    static const std::string special = R"(\^$.|?*+()[]{}/)";
    std::string out;
    for (char c : s) {
        if (special.find(c) != std::string::npos) out.push_back('\\');
        out.push_back(c);
    }
    return out;
}

inline std::string grammar_pattern(const CoordinateGrammar& g) {
    const std::string num = g.units == CoordinateUnits::pixels ? R"((\d+))" : R"((\d+(?:\.\d+)?))";
    const std::string pair = R"(\(\s*)" + num + R"(\s*,\s*)" + num + R"(\s*\))";
    switch (g.style) {
        case GrammarStyle::paren_pair:
            return pair;
        case GrammarStyle::json_object:
            return R"(\{\s*")" + regex_escape(g.x_key) + R"("\s*:\s*)" + num + R"(\s*,\s*")" +
                   regex_escape(g.y_key) + R"("\s*:\s*)" + num + R"(\s*\})";
        case GrammarStyle::tagged_box:
            return regex_escape(g.open_tag) + R"(\s*)" + pair + R"(\s*)" + regex_escape(g.close_tag);
    }
    return pair;
}

inline const std::regex& grammar_regex(const CoordinateGrammar& g) {
    // Default delimiters are by far the common case; cache those.
    static const std::regex cached[3][2] = {
        {std::regex(grammar_pattern({GrammarStyle::paren_pair, CoordinateUnits::pixels})),
         std::regex(grammar_pattern({GrammarStyle::paren_pair, CoordinateUnits::unit_interval}))},
        {std::regex(grammar_pattern({GrammarStyle::json_object, CoordinateUnits::pixels})),
         std::regex(grammar_pattern({GrammarStyle::json_object, CoordinateUnits::unit_interval}))},
        {std::regex(grammar_pattern({GrammarStyle::tagged_box, CoordinateUnits::pixels})),
         std::regex(grammar_pattern({GrammarStyle::tagged_box, CoordinateUnits::unit_interval}))},
    };
    const CoordinateGrammar defaults;
    if (g.open_tag == defaults.open_tag && g.close_tag == defaults.close_tag &&
        g.x_key == defaults.x_key && g.y_key == defaults.y_key) {
        return cached[int(g.style)][int(g.units)];
    }
    thread_local std::regex custom;
    custom = std::regex(grammar_pattern(g));
    return custom;
}

inline double parse_number(std::string_view digits) {
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
    if (ec != std::errc() || ptr != digits.data() + digits.size()) {
        throw ParseError(ParseErrorKind::no_coordinate, "malformed number '" + std::string(digits) + "'");
    }
    return value;
}

// Tokens whose character range intersects [lo, hi).
inline TokenSpan tokens_covering(const std::vector<std::size_t>& offsets,
                                 std::span<const TokenScore> tokens,
                                 std::size_t lo, std::size_t hi) {
    TokenSpan span{tokens.size(), 0};
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const std::size_t a = offsets[i];
        const std::size_t b = a + tokens[i].text.size();
        if (a < hi && b > lo) {
            span.begin = std::min(span.begin, i);
            span.end = i + 1;
        }
    }
    if (span.empty()) {
        throw ParseError(ParseErrorKind::alignment_failure, "no token covers the coordinate digits");
    }
    return span;
}

}  // namespace detail

inline std::string concat_tokens(std::span<const TokenScore> tokens) {
    std::string text;
    for (const auto& t : tokens) text += t.text;
    return text;
}

/// Parses exactly one coordinate out of the concatenated token text and
/// assigns tokens to the x and y digit runs. `frame` is required in
/// unit_interval mode to rescale to pixels.
inline ParsedCoordinate parse_coordinate(std::span<const TokenScore> tokens,
                                         const CoordinateGrammar& grammar,
                                         ImageSize frame = {}) {
    std::vector<std::size_t> offsets;
    offsets.reserve(tokens.size());
    std::string text;
    for (const auto& t : tokens) {
        if (t.text.empty()) {
            throw ParseError(ParseErrorKind::alignment_failure, "empty token text");
        }
        offsets.push_back(text.size());
        text += t.text;
    }

    const std::regex& re = detail::grammar_regex(grammar);
    auto begin = std::sregex_iterator(text.begin(), text.end(), re);
    const auto end = std::sregex_iterator();
    const auto count = std::distance(begin, end);
    if (count == 0) {
        throw ParseError(ParseErrorKind::no_coordinate, "no coordinate in '" + text + "'");
    }
    if (count > 1) {
        throw ParseError(ParseErrorKind::multiple_coordinates,
                         std::to_string(count) + " coordinates in '" + text + "'");
    }
    const std::smatch& m = *begin;

    ParsedCoordinate out;
    out.x_chars = {std::size_t(m.position(1)), std::size_t(m.position(1) + m.length(1))};
    out.y_chars = {std::size_t(m.position(2)), std::size_t(m.position(2) + m.length(2))};
    out.point = {detail::parse_number(m.str(1)), detail::parse_number(m.str(2))};
    if (grammar.units == CoordinateUnits::unit_interval) {
        if (frame.width < 1 || frame.height < 1) {
            throw InvalidArgument("parse_coordinate: unit_interval grammar needs the image size");
        }
        out.point = {out.point.x * frame.width, out.point.y * frame.height};
    }
    out.spans.x = detail::tokens_covering(offsets, tokens, out.x_chars.first, out.x_chars.second);
    out.spans.y = detail::tokens_covering(offsets, tokens, out.y_chars.first, out.y_chars.second);
    return out;
}

/// As above, but first checks that the tokens reproduce the backend's reported text.
inline ParsedCoordinate parse_coordinate(std::span<const TokenScore> tokens,
                                         std::string_view raw_text,
                                         const CoordinateGrammar& grammar,
                                         ImageSize frame = {}) {
    if (concat_tokens(tokens) != raw_text) {
        throw ParseError(ParseErrorKind::alignment_failure,
                         "token texts do not concatenate to the response text");
    }
    return parse_coordinate(tokens, grammar, frame);
}

/// Text a model following `grammar` would emit for `p` (pixels are rounded).
inline std::string serialize_point(Point p, const CoordinateGrammar& grammar, ImageSize frame = {}) {
    auto num = [&](double v, int extent) {
        if (grammar.units == CoordinateUnits::pixels) {
            return std::to_string(std::lround(std::max(0.0, v)));
        }
        std::ostringstream os;
        os << std::fixed << std::setprecision(3) << std::clamp(v / extent, 0.0, 1.0);
        return os.str();
    };
    const std::string xs = num(p.x, frame.width);
    const std::string ys = num(p.y, frame.height);
    switch (grammar.style) {
        case GrammarStyle::paren_pair:
            return "(" + xs + ", " + ys + ")";
        case GrammarStyle::json_object:
            return "{\"" + grammar.x_key + "\": " + xs + ", \"" + grammar.y_key + "\": " + ys + "}";
        case GrammarStyle::tagged_box:
            return grammar.open_tag + "(" + xs + "," + ys + ")" + grammar.close_tag;
    }
    return {};
}

/// Output-format instruction placed in the grounding prompt.
inline std::string format_hint(const CoordinateGrammar& grammar) {
    std::string units = grammar.units == CoordinateUnits::pixels
                            ? "in integer pixels of the given image"
                            : "as fractions of the image width and height in [0, 1]";
    switch (grammar.style) {
        case GrammarStyle::paren_pair:
            return "formatted as (x, y) " + units;
        case GrammarStyle::json_object:
            return "formatted as {\"" + grammar.x_key + "\": x, \"" + grammar.y_key + "\": y} " + units;
        case GrammarStyle::tagged_box:
            return "formatted as " + grammar.open_tag + "(x,y)" + grammar.close_tag + " " + units;
    }
    return {};
}

/// exp(-mean logprob) over a token range.
inline double axial_perplexity(std::span<const TokenScore> tokens, TokenSpan span) {
    if (span.empty() || span.end > tokens.size()) {
        throw InvalidArgument("axial_perplexity: empty or out-of-range span");
    }
    double sum = 0.0;
    for (std::size_t i = span.begin; i < span.end; ++i) sum += tokens[i].logprob;
    return std::exp(-sum / double(span.size()));
}

inline double total_perplexity(std::span<const TokenScore> tokens) {
    if (tokens.empty()) throw InvalidArgument("total_perplexity: empty token sequence");
    return axial_perplexity(tokens, {0, tokens.size()});
}

/// Perplexity over x_span ∪ y_span; a token shared by both spans counts once.
inline double coordinate_perplexity(std::span<const TokenScore> tokens, const AxialSpans& spans) {
    if (spans.x.empty() || spans.y.empty()) {
        throw InvalidArgument("coordinate_perplexity: empty axial span");
    }
    const std::size_t lo = std::min(spans.x.begin, spans.y.begin);
    const std::size_t hi = std::max(spans.x.end, spans.y.end);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = lo; i < hi && i < tokens.size(); ++i) {
        const bool in_x = i >= spans.x.begin && i < spans.x.end;
        const bool in_y = i >= spans.y.begin && i < spans.y.end;
        if (in_x || in_y) {
            sum += tokens[i].logprob;
            ++n;
        }
    }
    return std::exp(-sum / double(n));
}

}  // namespace autofocus
