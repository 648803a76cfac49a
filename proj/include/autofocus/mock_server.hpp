#pragma once

// Serves any ChatModel over the chat-completions wire protocol.

#include <memory>
#include <stdexcept>
#include <string>
#include <thread>

#include "autofocus/backend.hpp"
#include "autofocus/http_client.hpp"

namespace autofocus {

struct ServeOptions {
    std::string host = "127.0.0.1";
    int port = 0;  // 0: pick a free port
    std::string model_name = "autofocus-mock";
    bool omit_logprobs = false;  // behave like a backend that hides logprobs
};

class ModelServer {
public:
    ModelServer(const ChatModel& model, ServeOptions opts) : model_(model), opts_(std::move(opts)) {
        server_.Post(wire::completions_path, [this](const httplib::Request& req, httplib::Response& res) {
            handle(req, res);
        });
        server_.Get("/v1/models", [this](const httplib::Request&, httplib::Response& res) {
            const nlohmann::json body = {{"object", "list"},
                                         {"data", nlohmann::json::array({{{"id", opts_.model_name}}})}};
            res.set_content(body.dump(), "application/json");
        });
        if (opts_.port == 0) {
            port_ = server_.bind_to_any_port(opts_.host);
        } else if (server_.bind_to_port(opts_.host, opts_.port)) {
            port_ = opts_.port;
        }
        if (port_ <= 0) throw std::runtime_error("cannot bind " + opts_.host + ":" + std::to_string(opts_.port));
    }

    ModelServer(const ModelServer&) = delete;
    ModelServer& operator=(const ModelServer&) = delete;

    ~ModelServer() { stop(); }

    int port() const { return port_; }
    std::string base_url() const { return "http://" + opts_.host + ":" + std::to_string(port_); }

    /// Serves on a background thread.
    void start() {
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    /// Serves on the calling thread until stop().
    void run() { server_.listen_after_bind(); }

    void stop() {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }

private:
    void handle(const httplib::Request& req, httplib::Response& res) const {
        try {
            const nlohmann::json body = nlohmann::json::parse(req.body);
            wire::DecodedRequest decoded = wire::decode_request(body);
            decoded.chat.images = decoded.images;
            const ChatReply reply = model_.complete(decoded.chat);
            const bool with_lp = decoded.logprobs && !opts_.omit_logprobs;
            res.set_content(wire::encode_response(reply, opts_.model_name, with_lp).dump(), "application/json");
        } catch (const std::exception& e) {
            res.status = 400;
            res.set_content(nlohmann::json{{"error", {{"message", e.what()}}}}.dump(), "application/json");
        }
    }

    const ChatModel& model_;
    ServeOptions opts_;
    httplib::Server server_;
    int port_ = -1;
    std::thread thread_;
};

}  // namespace autofocus
