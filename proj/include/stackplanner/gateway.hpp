#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "stackplanner/errors.hpp"
#include "stackplanner/task_memory.hpp"
#include "stackplanner/util.hpp"

namespace stackplanner::gateway {

struct GatewayError : Error {
    explicit GatewayError(const std::string& what) : Error("gateway: " + what) {}
};
struct ReplayMismatch : Error {
    explicit ReplayMismatch(const std::string& what) : Error("replay mismatch: " + what) {}
};
struct ScriptExhausted : Error {
    ScriptExhausted() : Error("scripted gateway: response queue exhausted") {}
};

enum class Role { System, User, Assistant, Tool };

inline const char* to_string(Role role) {
    switch (role) {
        case Role::System: return "system";
        case Role::User: return "user";
        case Role::Assistant: return "assistant";
        case Role::Tool: return "tool";
    }
    return "user";
}

struct ChatMessage {
    Role role = Role::User;
    std::string content;
};

struct ChatRequest {
    std::string model = "default";
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    std::optional<int64_t> seed;
    int max_tokens = 2048;
};

struct Completion {
    std::string text;
    int prompt_tokens = 0;
    int completion_tokens = 0;
};

// Digest over the rendered messages only, so a replayed run matches as long
// as the prompts are byte-identical.
inline std::string request_digest(const ChatRequest& req) {
    std::string canon;
    for (const auto& m : req.messages) {
        canon += to_string(m.role);
        canon += '\x1f';
        canon += m.content;
        canon += '\x1e';
    }
    return util::fnv1a_hex(canon);
}

class Gateway {
public:
    virtual ~Gateway() = default;
    virtual Completion complete(const ChatRequest& req) = 0;
};

namespace detail {
inline int estimate_prompt_tokens(const ChatRequest& req) {
    int total = 0;
    for (const auto& m : req.messages) total += task_memory::estimate_tokens(m.content);
    return total;
}
}  // namespace detail

// Pops canned responses in order. Sequence semantics; access serialized.
class ScriptedGateway : public Gateway {
public:
    explicit ScriptedGateway(std::vector<std::string> responses = {})
        : queue_(responses.begin(), responses.end()) {}

    void enqueue(const std::string& response) {
        std::lock_guard<std::mutex> lock(mu_);
        queue_.push_back(response);
    }

    // Script file: JSONL, one {"response": text} document per line.
    static std::unique_ptr<ScriptedGateway> from_file(const std::string& path) {
        std::istringstream in(util::read_file(path));
        std::vector<std::string> responses;
        std::string line;
        while (std::getline(in, line)) {
            if (util::trim(line).empty()) continue;
            auto doc = nlohmann::json::parse(line);
            responses.push_back(doc.at("response").get<std::string>());
        }
        return std::make_unique<ScriptedGateway>(std::move(responses));
    }

    Completion complete(const ChatRequest& req) override {
        std::lock_guard<std::mutex> lock(mu_);
        if (queue_.empty()) throw ScriptExhausted();
        Completion c;
        c.text = queue_.front();
        queue_.pop_front();
        c.prompt_tokens = detail::estimate_prompt_tokens(req);
        c.completion_tokens = task_memory::estimate_tokens(c.text);
        return c;
    }

    size_t remaining() const {
        std::lock_guard<std::mutex> lock(mu_);
        return queue_.size();
    }

private:
    mutable std::mutex mu_;
    std::deque<std::string> queue_;
};

// Replays a recorded fixture by request sequence index. In strict mode the
// digest of the rendered messages must match what was recorded.
class ReplayGateway : public Gateway {
public:
    struct Record {
        int index = 0;
        std::string request_digest;
        std::string response_text;
        int prompt_tokens = 0;
        int completion_tokens = 0;
    };

    ReplayGateway(const std::string& fixture_path, bool strict)
        : strict_(strict), fixture_path_(fixture_path) {
        std::istringstream in(util::read_file(fixture_path));
        std::string line;
        while (std::getline(in, line)) {
            if (util::trim(line).empty()) continue;
            auto doc = nlohmann::json::parse(line);
            Record r;
            r.index = doc.at("index").get<int>();
            r.request_digest = doc.at("request_digest").get<std::string>();
            r.response_text = doc.at("response_text").get<std::string>();
            r.prompt_tokens = doc.at("prompt_tokens").get<int>();
            r.completion_tokens = doc.at("completion_tokens").get<int>();
            records_.push_back(std::move(r));
        }
    }

    Completion complete(const ChatRequest& req) override {
        std::lock_guard<std::mutex> lock(mu_);
        if (cursor_ >= records_.size())
            throw GatewayError("replay fixture exhausted at index " + std::to_string(cursor_) +
                               " (" + fixture_path_ + ")");
        const Record& r = records_[cursor_];
        if (strict_) {
            std::string digest = request_digest(req);
            if (digest != r.request_digest)
                throw ReplayMismatch("request " + std::to_string(cursor_) + ": digest " + digest +
                                     " != recorded " + r.request_digest);
        }
        ++cursor_;
        return {r.response_text, r.prompt_tokens, r.completion_tokens};
    }

private:
    std::mutex mu_;
    bool strict_;
    std::string fixture_path_;
    std::vector<Record> records_;
    size_t cursor_ = 0;
};

// OpenAI-compatible chat-completions client. Retries 429/5xx and transport
// failures with exponential backoff. The key is never logged; request log
// lines carry digests only.
struct RemoteOptions {
    int max_attempts = 4;
    int backoff_base_ms = 500;
    int backoff_factor = 2;
    int timeout_seconds = 60;
};

class RemoteGateway : public Gateway {
public:
    using Options = RemoteOptions;

    RemoteGateway(std::string base_url, std::string api_key, Options options = {},
                  std::function<void(const std::string&)> logger = {})
        : api_key_(std::move(api_key)), options_(options), logger_(std::move(logger)) {
        split_base_url(base_url);
    }

    Completion complete(const ChatRequest& req) override {
        nlohmann::ordered_json body;
        body["model"] = req.model;
        body["messages"] = nlohmann::ordered_json::array();
        for (const auto& m : req.messages)
            body["messages"].push_back({{"role", to_string(m.role)}, {"content", m.content}});
        body["temperature"] = req.temperature;
        if (req.seed) body["seed"] = *req.seed;
        body["max_tokens"] = req.max_tokens;
        std::string payload = body.dump();
        std::string digest = request_digest(req);

        int delay_ms = options_.backoff_base_ms;
        std::string last_error;
        for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
            if (attempt > 1) {
                std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
                delay_ms *= options_.backoff_factor;
            }
            httplib::Client client(authority_);
            client.set_connection_timeout(options_.timeout_seconds, 0);
            client.set_read_timeout(options_.timeout_seconds, 0);
            httplib::Headers headers;
            if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
            auto res = client.Post(endpoint_, headers, payload, "application/json");
            if (!res) {
                last_error = "transport error: " + httplib::to_string(res.error());
                log(digest, attempt, last_error);
                continue;
            }
            if (res->status == 429 || res->status >= 500) {
                last_error = "status " + std::to_string(res->status);
                log(digest, attempt, last_error);
                continue;
            }
            if (res->status != 200)
                throw GatewayError("status " + std::to_string(res->status) + ": " + res->body);
            return parse_response(res->body);
        }
        throw GatewayError("exhausted " + std::to_string(options_.max_attempts) + " attempts (" +
                           last_error + ")");
    }

private:
    void split_base_url(const std::string& base_url) {
        auto scheme_end = base_url.find("://");
        size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
        auto path_start = base_url.find('/', host_start);
        if (path_start == std::string::npos) {
            authority_ = base_url;
        } else {
            authority_ = base_url.substr(0, path_start);
            std::string prefix = base_url.substr(path_start);
            while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
            endpoint_prefix_ = prefix;
        }
        if (endpoint_prefix_.size() >= 3 &&
            endpoint_prefix_.compare(endpoint_prefix_.size() - 3, 3, "/v1") == 0)
            endpoint_ = endpoint_prefix_ + "/chat/completions";
        else
            endpoint_ = endpoint_prefix_ + "/v1/chat/completions";
    }

    static Completion parse_response(const std::string& body) {
        auto doc = nlohmann::json::parse(body);
        Completion c;
        c.text = doc.at("choices").at(0).at("message").at("content").get<std::string>();
        if (doc.contains("usage")) {
            c.prompt_tokens = doc["usage"].value("prompt_tokens", 0);
            c.completion_tokens = doc["usage"].value("completion_tokens", 0);
        }
        return c;
    }

    void log(const std::string& digest, int attempt, const std::string& note) {
        if (logger_)
            logger_("gateway request digest=" + digest + " attempt=" + std::to_string(attempt) +
                    " " + note);
    }

    std::string authority_;
    std::string endpoint_prefix_;
    std::string endpoint_;
    std::string api_key_;
    Options options_;
    std::function<void(const std::string&)> logger_;
};

// Tees request/response pairs into a replay fixture so golden traces are
// recorded once and tests run offline afterwards.
class RecordingGateway : public Gateway {
public:
    RecordingGateway(Gateway& inner, const std::string& fixture_path)
        : inner_(inner), out_(fixture_path, std::ios::binary | std::ios::trunc) {
        if (!out_) throw GatewayError("cannot open fixture for recording: " + fixture_path);
    }

    Completion complete(const ChatRequest& req) override {
        Completion c = inner_.complete(req);
        std::lock_guard<std::mutex> lock(mu_);
        nlohmann::ordered_json line;
        line["index"] = index_++;
        line["request_digest"] = request_digest(req);
        line["response_text"] = c.text;
        line["prompt_tokens"] = c.prompt_tokens;
        line["completion_tokens"] = c.completion_tokens;
        out_ << line.dump() << "\n";
        out_.flush();
        return c;
    }

private:
    Gateway& inner_;
    std::mutex mu_;
    std::ofstream out_;
    int index_ = 0;
};

}  // namespace stackplanner::gateway
