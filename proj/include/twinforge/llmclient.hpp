#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "twinforge/datamodel.hpp"
#include "twinforge/error.hpp"

namespace twinforge::llm {

enum class Role { system, user, assistant };

std::string_view to_string(Role r);
Role parse_role(std::string_view s);

struct Message {
    Role role = Role::user;
    std::string content;
};

struct ChatRequest {
    std::string endpoint;
    std::string model_id;
    std::vector<Message> messages;
    double temperature = 0.0;
    int max_tokens = 2048;
    std::optional<std::int64_t> seed;
};

/// Throws Error when the request breaks its invariants.
void validate(const ChatRequest& r);

/// Every keyed field, sorted keys, compact; the basis of the cache key.
nlohmann::json canonical_json(const ChatRequest& r);
std::string cache_key(const ChatRequest& r);

/// OpenAI-compatible chat-completions request body.
nlohmann::json wire_body(const ChatRequest& r);

struct ModelHandle {
    std::string model_id;
    std::string endpoint;
    Variant variant = Variant::pretrain;
};

struct Usage {
    int prompt_tokens = 0;
    int completion_tokens = 0;
    int total_tokens = 0;
};

struct ChatResponse {
    std::string content;
    Usage usage;
    bool from_cache = false;
    int attempts = 0;
};

enum class CachePolicy { use, bypass };

class TransportError : public Error {
public:
    using Error::Error;
};

class StatusError : public Error {
public:
    StatusError(int status, std::string body_excerpt);
    int status() const noexcept { return status_; }
    const std::string& body_excerpt() const noexcept { return body_; }

private:
    int status_;
    std::string body_;
};

class ProtocolError : public Error {
public:
    using Error::Error;
};

/// Raised in offline mode when a request is not in the cache.
class CacheMiss : public Error {
public:
    using Error::Error;
};

struct HttpResponse {
    int status = 0;
    std::string body;
};

class Transport {
public:
    virtual ~Transport() = default;
    /// Throws TransportError when no HTTP response was obtained.
    virtual HttpResponse post(const std::string& url, const std::string& body,
                              const std::map<std::string, std::string>& headers) = 0;
};

/// cpp-httplib backed transport; http and https URLs.
class HttpTransport final : public Transport {
public:
    explicit HttpTransport(std::chrono::seconds timeout = std::chrono::seconds(300));
    HttpResponse post(const std::string& url, const std::string& body,
                      const std::map<std::string, std::string>& headers) override;

private:
    std::chrono::seconds timeout_;
};

/// Adapts a callable; handy for stubs.
class FunctionTransport final : public Transport {
public:
    using Fn = std::function<HttpResponse(const std::string&, const std::string&)>;
    explicit FunctionTransport(Fn fn) : fn_(std::move(fn)) {}
    HttpResponse post(const std::string& url, const std::string& body,
                      const std::map<std::string, std::string>&) override {
        return fn_(url, body);
    }

private:
    Fn fn_;
};

/// OpenAI-style success body carrying `content`.
std::string chat_completion_body(const std::string& content, const Usage& usage = {});

class Sleeper {
public:
    virtual ~Sleeper() = default;
    virtual void sleep(std::chrono::milliseconds d) = 0;
};

class RealSleeper final : public Sleeper {
public:
    void sleep(std::chrono::milliseconds d) override;
};

/// Records requested sleeps instead of sleeping.
class FakeSleeper final : public Sleeper {
public:
    void sleep(std::chrono::milliseconds d) override;
    std::vector<std::chrono::milliseconds> sleeps() const;
    std::chrono::milliseconds total() const;

private:
    mutable std::mutex mu_;
    std::vector<std::chrono::milliseconds> sleeps_;
};

struct ClientOptions {
    /// Empty disables the disk cache.
    std::filesystem::path cache_dir;
    int max_attempts = 5;
    std::chrono::milliseconds base_delay{1000};
    double backoff_factor = 2.0;
    int max_in_flight_per_endpoint = 4;
    /// Serve only from cache; a miss raises CacheMiss.
    bool offline = false;
    /// Name of the environment variable holding the bearer token.
    std::string api_key_env = "OPENAI_API_KEY";
};

class ChatClient {
public:
    ChatClient(ClientOptions options, std::shared_ptr<Transport> transport,
               std::shared_ptr<Sleeper> sleeper = std::make_shared<RealSleeper>());
    ~ChatClient();
    ChatClient(const ChatClient&) = delete;
    ChatClient& operator=(const ChatClient&) = delete;

    ChatResponse complete_chat(const ChatRequest& request, CachePolicy policy = CachePolicy::use);

    /// Number of transport calls made so far.
    std::size_t upstream_calls() const noexcept { return upstream_calls_.load(); }
    const ClientOptions& options() const noexcept { return options_; }

private:
    class Gate;
    ChatResponse fetch(const ChatRequest& request);
    std::optional<ChatResponse> cache_load(const std::string& key) const;
    void cache_store(const std::string& key, const ChatRequest& request, const ChatResponse& response) const;
    Gate& gate_for(const std::string& endpoint);

    ClientOptions options_;
    std::shared_ptr<Transport> transport_;
    std::shared_ptr<Sleeper> sleeper_;
    std::atomic<std::size_t> upstream_calls_{0};
    std::mutex mu_;
    std::map<std::string, std::shared_future<ChatResponse>> in_flight_;
    std::map<std::string, std::unique_ptr<Gate>> gates_;
};

/// Convenience: single user message (optionally preceded by a system message).
ChatRequest make_request(const ModelHandle& model, std::string user_content, double temperature = 0.0,
                         std::optional<std::string> system_content = std::nullopt);

}  // namespace twinforge::llm
