#pragma once

// Backend contract. A ChatModel answers one multi-image prompt with text and
// per-token log-probabilities; grounding, verification and aggregation are
// prompt templates plus reply parsers layered on top of it.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "autofocus/coord_parser.hpp"
#include "autofocus/error.hpp"
#include "autofocus/geometry.hpp"
#include "autofocus/image.hpp"
#include "autofocus/marker.hpp"
#include "autofocus/uncertainty.hpp"

namespace autofocus {

struct Decoding {
    double temperature = 0.0;
    double top_p = 1.0;
    std::uint64_t seed = 0;
};

struct ChatRequest {
    std::span<const Image> images;  // must outlive the call
    std::string prompt;
    Decoding decoding;
    int max_tokens = 64;
};

struct ChatReply {
    std::string text;
    std::vector<TokenScore> tokens;
};

class ChatModel {
public:
    virtual ~ChatModel() = default;
    // Must be safe to call concurrently.
    virtual ChatReply complete(const ChatRequest& request) const = 0;
};

namespace prompts {

inline constexpr std::string_view version = "v1";

inline constexpr std::string_view grounding =
    "Locate the user interface element described by the instruction in this screenshot "
    "and reply with only its click point, {format}.\n"
    "Instruction: \"{instruction}\"";

inline constexpr std::string_view verification =
    "A pink star has been drawn on this screenshot.\n"
    "Instruction: \"{instruction}\"\n"
    "Is the star placed on the element this instruction refers to? Reply with Yes or No.";

inline constexpr std::string_view aggregation =
    "You are shown {count} copies of the same screenshot, numbered 1 to {count} in the order given. "
    "Each copy has one pink star marking a candidate click point.\n"
    "Instruction: \"{instruction}\"\n"
    "Which image has its star on the element this instruction refers to? Reply with \"Image <number>\".";

/// Substitutes every {key} occurrence.
inline std::string render(std::string_view tmpl, const std::map<std::string, std::string>& values) {
    std::string out(tmpl);
    for (const auto& [key, value] : values) {
        const std::string needle = "{" + key + "}";
        for (std::size_t pos = out.find(needle); pos != std::string::npos;
             pos = out.find(needle, pos + value.size())) {
            out.replace(pos, needle.size(), value);
        }
    }
    return out;
}

}  // namespace prompts

struct GroundingRequest {
    const Image* image = nullptr;
    std::string instruction;
    Decoding decoding;
    CoordinateGrammar grammar;
};

struct GroundingResponse {
    std::string raw_text;
    std::vector<TokenScore> tokens;
    Point point;  // frame of the submitted image
    AxialSpans spans;
    int attempts = 1;
};

enum class PplScope { coordinate_tokens, full_response };

struct GroundOptions {
    int parse_retries = 1;
    std::uint64_t reseed_offset = 7919;
};

/// One grounding query. A reply without a coordinate is resampled with a
/// shifted seed up to `parse_retries` times before GroundingError is thrown.
inline GroundingResponse ground(const ChatModel& model, const GroundingRequest& req, const GroundOptions& opts = {}) {
    if (req.image == nullptr || req.image->empty()) throw InvalidArgument("ground: empty image");
    if (req.instruction.empty()) throw InvalidArgument("ground: empty instruction");

    const std::string prompt = prompts::render(
        prompts::grounding, {{"format", format_hint(req.grammar)}, {"instruction", req.instruction}});
    std::string last_error;
    for (int attempt = 0; attempt <= opts.parse_retries; ++attempt) {
        ChatRequest chat{std::span<const Image>(req.image, 1), prompt, req.decoding};
        chat.decoding.seed = req.decoding.seed + std::uint64_t(attempt) * opts.reseed_offset;
        ChatReply reply = model.complete(chat);
        if (reply.tokens.empty() && !reply.text.empty()) {
            throw ConfigurationError("backend returned no token log-probabilities; "
                                     "a backend exposing logprobs is required");
        }
        try {
            const ParsedCoordinate parsed = parse_coordinate(reply.tokens, reply.text, req.grammar, req.image->size());
            GroundingResponse out;
            out.raw_text = std::move(reply.text);
            out.tokens = std::move(reply.tokens);
            out.point = parsed.point;
            out.spans = parsed.spans;
            out.attempts = attempt + 1;
            return out;
        } catch (const ParseError& e) {
            last_error = e.what();
        }
    }
    throw GroundingError("grounding failed after " + std::to_string(opts.parse_retries + 1) +
                         " attempts: " + last_error);
}

inline CoordinateSample make_sample(const GroundingResponse& r, SampleSource source,
                                    PplScope scope = PplScope::coordinate_tokens) {
    CoordinateSample s;
    s.point = r.point;
    s.ppl_x = axial_perplexity(r.tokens, r.spans.x);
    s.ppl_y = axial_perplexity(r.tokens, r.spans.y);
    s.ppl_total = scope == PplScope::coordinate_tokens ? coordinate_perplexity(r.tokens, r.spans)
                                                       : total_perplexity(r.tokens);
    s.source = source;
    return s;
}

namespace detail {
inline std::vector<std::string> lower_words(std::string_view text) {
    std::vector<std::string> words;
    std::string cur;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '\'') {
            cur.push_back(char(std::tolower(static_cast<unsigned char>(c))));
        } else if (!cur.empty()) {
            words.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) words.push_back(std::move(cur));
    return words;
}
}  // namespace detail

/// Keyword mapping of a verification reply. Any negation wins; anything that
/// is neither clearly positive nor negative counts as "no".
inline bool parse_verification_reply(std::string_view text) {
    static const std::vector<std::string> negative{"no", "not", "incorrect", "wrong", "isn't", "doesn't",
                                                   "cannot", "can't", "false", "fails"};
    static const std::vector<std::string> positive{"yes", "correct", "correctly", "true", "matches"};
    const auto words = detail::lower_words(text);
    auto any_of = [&](const std::vector<std::string>& set) {
        return std::any_of(words.begin(), words.end(),
                           [&](const std::string& w) { return std::find(set.begin(), set.end(), w) != set.end(); });
    };
    if (any_of(negative)) return false;
    return any_of(positive);
}

/// 1-based "Image k" (or a bare number) to a 0-based index, if in range.
inline std::optional<std::size_t> parse_aggregation_reply(std::string_view text, std::size_t count) {
    static const std::regex tagged(R"(image\s*#?\s*(\d+))", std::regex::icase);
    static const std::regex bare(R"(^\s*(\d+)\s*\.?\s*$)");
    const std::string s(text);
    std::smatch m;
    if (!std::regex_search(s, m, tagged) && !std::regex_match(s, m, bare)) return std::nullopt;
    const unsigned long k = std::stoul(m.str(1));
    if (k < 1 || k > count) return std::nullopt;
    return std::size_t(k - 1);
}

inline bool verify(const ChatModel& model, const Image& image, Point point, const std::string& instruction,
                   const MarkerStyle& style = {}, std::uint64_t seed = 0) {
    const Image marked = draw_marker(image, point, style);
    ChatRequest chat{std::span<const Image>(&marked, 1),
                     prompts::render(prompts::verification, {{"instruction", instruction}}),
                     Decoding{0.0, 1.0, seed}, 16};
    return parse_verification_reply(model.complete(chat).text);
}

struct AggregationOutcome {
    std::size_t index = 0;
    bool from_reply = false;  // false: forced (single candidate) or fallback
    bool called = false;
};

/// Picks one of the annotated candidate images. Unparseable replies resolve
/// to `fallback`.
inline AggregationOutcome aggregate(const ChatModel& model, std::span<const Image> annotated,
                                    const std::string& instruction, std::size_t fallback = 0,
                                    std::uint64_t seed = 0) {
    if (annotated.empty()) throw InvalidArgument("aggregate: no candidates");
    if (fallback >= annotated.size()) throw InvalidArgument("aggregate: fallback out of range");
    if (annotated.size() == 1) return {0, false, false};
    ChatRequest chat{annotated,
                     prompts::render(prompts::aggregation, {{"count", std::to_string(annotated.size())},
                                                            {"instruction", instruction}}),
                     Decoding{0.0, 1.0, seed}, 16};
    const auto choice = parse_aggregation_reply(model.complete(chat).text, annotated.size());
    if (choice) return {*choice, true, true};
    return {fallback, false, true};
}

}  // namespace autofocus
