#pragma once

// OpenAI-compatible chat-completions client (POST /v1/chat/completions).

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <regex>
#include <string>
#include <thread>

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>
#include <json.hpp>

#include "autofocus/backend.hpp"
#include "autofocus/error.hpp"
#include "autofocus/image.hpp"

namespace autofocus {

struct EndpointConfig {
    std::string base_url;
    std::string model;
    std::string api_key;
    int timeout_seconds = 120;
    int transport_retries = 1;
    std::chrono::milliseconds backoff{250};
};

/// Fills empty fields from AUTOFOCUS_BASE_URL / AUTOFOCUS_MODEL / AUTOFOCUS_API_KEY.
inline EndpointConfig endpoint_from_env(EndpointConfig cfg = {}) {
    auto env = [](const char* name) -> std::string {
        const char* v = std::getenv(name);
        return v ? std::string(v) : std::string();
    };
    if (cfg.base_url.empty()) cfg.base_url = env("AUTOFOCUS_BASE_URL");
    if (cfg.model.empty()) cfg.model = env("AUTOFOCUS_MODEL");
    if (cfg.api_key.empty()) cfg.api_key = env("AUTOFOCUS_API_KEY");
    return cfg;
}

namespace wire {

inline constexpr const char* completions_path = "/v1/chat/completions";

inline std::string data_url(const Image& img) { return "data:image/png;base64," + base64_encode(encode_png(img)); }

inline nlohmann::json build_request(const ChatRequest& req, const std::string& model) {
    nlohmann::json content = nlohmann::json::array();
    for (const Image& img : req.images) {
        content.push_back({{"type", "image_url"}, {"image_url", {{"url", data_url(img)}}}});
    }
    content.push_back({{"type", "text"}, {"text", req.prompt}});
    return {{"model", model},
            {"messages", nlohmann::json::array({{{"role", "user"}, {"content", content}}})},
            {"temperature", req.decoding.temperature},
            {"top_p", req.decoding.top_p},
            {"seed", req.decoding.seed},
            {"max_tokens", req.max_tokens},
            {"logprobs", true}};
}

/// Reads choices[0]; a reply without per-token logprobs is a configuration error.
inline ChatReply parse_response(const nlohmann::json& body) {
    if (!body.contains("choices") || !body["choices"].is_array() || body["choices"].empty()) {
        throw TransportError("malformed completion response: no choices");
    }
    const auto& choice = body["choices"][0];
    ChatReply reply;
    const auto& content = choice.at("message").at("content");
    reply.text = content.is_string() ? content.get<std::string>() : std::string();
    const auto lp = choice.find("logprobs");
    if (lp == choice.end() || !lp->is_object() || !lp->contains("content") || !(*lp)["content"].is_array()) {
        throw ConfigurationError("backend response carries no token logprobs "
                                 "(choices[0].logprobs.content missing); enable logprobs on the server");
    }
    for (const auto& t : (*lp)["content"]) {
        reply.tokens.push_back({t.at("token").get<std::string>(), t.at("logprob").get<double>()});
    }
    if (!reply.text.empty() && reply.tokens.empty()) {
        throw ConfigurationError("backend returned text but an empty logprob list");
    }
    if (concat_tokens(reply.tokens) != reply.text) {
        throw ConfigurationError("backend logprob tokens do not reproduce the message text");
    }
    return reply;
}

/// Decodes the images and prompt of an incoming request (server side).
struct DecodedRequest {
    std::vector<Image> images;
    ChatRequest chat;
    bool logprobs = false;
};

inline DecodedRequest decode_request(const nlohmann::json& body) {
    DecodedRequest out;
    const auto& messages = body.at("messages");
    if (!messages.is_array() || messages.empty()) throw InvalidArgument("request has no messages");
    const auto& content = messages.back().at("content");
    if (content.is_string()) {
        out.chat.prompt = content.get<std::string>();
    } else {
        for (const auto& part : content) {
            const std::string type = part.at("type").get<std::string>();
            if (type == "text") {
                out.chat.prompt += part.at("text").get<std::string>();
            } else if (type == "image_url") {
                const std::string url = part.at("image_url").at("url").get<std::string>();
                const auto comma = url.find(',');
                if (url.rfind("data:", 0) != 0 || comma == std::string::npos) {
                    throw InvalidArgument("only data: image URLs are accepted");
                }
                out.images.push_back(decode_png(base64_decode(std::string_view(url).substr(comma + 1))));
            }
        }
    }
    out.chat.decoding.temperature = body.value("temperature", 1.0);
    out.chat.decoding.top_p = body.value("top_p", 1.0);
    out.chat.decoding.seed = body.value("seed", std::uint64_t{0});
    out.chat.max_tokens = body.value("max_tokens", 64);
    out.logprobs = body.value("logprobs", false);
    return out;
}

inline nlohmann::json encode_response(const ChatReply& reply, const std::string& model, bool with_logprobs) {
    nlohmann::json choice = {{"index", 0},
                             {"message", {{"role", "assistant"}, {"content", reply.text}}},
                             {"finish_reason", "stop"}};
    if (with_logprobs) {
        nlohmann::json toks = nlohmann::json::array();
        for (const auto& t : reply.tokens) toks.push_back({{"token", t.text}, {"logprob", t.logprob}});
        choice["logprobs"] = {{"content", toks}};
    } else {
        choice["logprobs"] = nullptr;
    }
    return {{"object", "chat.completion"}, {"model", model}, {"choices", nlohmann::json::array({choice})}};
}

struct ParsedUrl {
    std::string scheme_host_port;  // e.g. http://127.0.0.1:8080
    std::string path;              // endpoint path
};

inline ParsedUrl parse_base_url(const std::string& base) {
    static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(base, m, re)) throw ConfigurationError("invalid base URL: '" + base + "'");
    std::string prefix = m.str(2);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    const bool has_v1 = prefix.size() >= 3 && prefix.compare(prefix.size() - 3, 3, "/v1") == 0;
    return {m.str(1), has_v1 ? prefix + "/chat/completions" : prefix + completions_path};
}

}  // namespace wire

class HttpChatModel final : public ChatModel {
public:
    explicit HttpChatModel(EndpointConfig cfg) : cfg_(std::move(cfg)) {
        if (cfg_.base_url.empty()) {
            throw ConfigurationError("no backend base URL; pass --base-url or set AUTOFOCUS_BASE_URL");
        }
        url_ = wire::parse_base_url(cfg_.base_url);
    }

    const EndpointConfig& config() const { return cfg_; }

    ChatReply complete(const ChatRequest& req) const override {
        const std::string body = wire::build_request(req, cfg_.model).dump();
        std::string last_error;
        for (int attempt = 0; attempt <= cfg_.transport_retries; ++attempt) {
            if (attempt > 0) std::this_thread::sleep_for(cfg_.backoff * (1 << (attempt - 1)));
            // One client per call keeps the model shareable across threads.
            httplib::Client cli(url_.scheme_host_port);
            cli.set_connection_timeout(cfg_.timeout_seconds, 0);
            cli.set_read_timeout(cfg_.timeout_seconds, 0);
            cli.set_write_timeout(cfg_.timeout_seconds, 0);
            httplib::Headers headers;
            if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);
            const auto res = cli.Post(url_.path, headers, body, "application/json");
            if (!res) {
                last_error = "request failed: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status == 429 || res->status >= 500) {
                last_error = "HTTP " + std::to_string(res->status);
                continue;
            }
            if (res->status != 200) {
                throw TransportError("HTTP " + std::to_string(res->status) + " from " + cfg_.base_url + ": " +
                                     res->body.substr(0, 300));
            }
            nlohmann::json parsed = nlohmann::json::parse(res->body, nullptr, false);
            if (parsed.is_discarded()) throw TransportError("response body is not JSON");
            return wire::parse_response(parsed);
        }
        throw TransportError(last_error + " (" + cfg_.base_url + ")");
    }

private:
    EndpointConfig cfg_;
    wire::ParsedUrl url_;
};

struct ProbeResult {
    bool ok = false;
    std::string diagnostic;
    std::size_t token_count = 0;
};

/// Sends one tiny grounding prompt and checks that every generated token has a logprob.
inline ProbeResult probe(const ChatModel& model) {
    const Image canvas(64, 64, Rgb{255, 255, 255});
    ChatRequest req{std::span<const Image>(&canvas, 1),
                    prompts::render(prompts::grounding,
                                    {{"format", format_hint({})}, {"instruction", "Click the center of the image"}}),
                    Decoding{}, 16};
    ProbeResult out;
    try {
        const ChatReply reply = model.complete(req);
        out.token_count = reply.tokens.size();
        if (reply.tokens.empty()) {
            out.diagnostic = "backend returned no token logprobs; logprobs are required";
            return out;
        }
        out.ok = true;
        out.diagnostic = "ok: " + std::to_string(reply.tokens.size()) + " tokens with logprobs";
    } catch (const ConfigurationError& e) {
        out.diagnostic = std::string("logprobs unavailable: ") + e.what();
    } catch (const std::exception& e) {
        out.diagnostic = std::string("backend unreachable: ") + e.what();
    }
    return out;
}

}  // namespace autofocus
