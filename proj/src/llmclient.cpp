#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "twinforge/llmclient.hpp"

#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <regex>
#include <thread>

#include "twinforge/digest.hpp"

namespace twinforge::llm {

std::string_view to_string(Role r) {
    switch (r) {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
    }
    return "";
}

Role parse_role(std::string_view s) {
    for (auto r : {Role::system, Role::user, Role::assistant}) {
        if (to_string(r) == s) return r;
    }
    throw Error("unknown chat role: " + std::string(s));
}

void validate(const ChatRequest& r) {
    if (r.messages.empty()) throw Error("chat request needs at least one message");
    if (r.model_id.empty()) throw Error("chat request needs a model id");
    if (!(r.temperature >= 0.0)) throw Error("temperature must be >= 0");
    if (r.max_tokens <= 0) throw Error("max_tokens must be positive");
}

namespace {
nlohmann::json messages_json(const ChatRequest& r) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& m : r.messages) arr.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    return arr;
}
}  // namespace

nlohmann::json canonical_json(const ChatRequest& r) {
    nlohmann::json j = {{"endpoint", r.endpoint},       {"model", r.model_id},
                        {"messages", messages_json(r)}, {"temperature", r.temperature},
                        {"max_tokens", r.max_tokens}};
    j["seed"] = r.seed ? nlohmann::json(*r.seed) : nlohmann::json(nullptr);
    return j;
}

std::string cache_key(const ChatRequest& r) { return sha256_hex(canonical_json(r).dump()); }

nlohmann::json wire_body(const ChatRequest& r) {
    nlohmann::json j = {{"model", r.model_id},
                        {"messages", messages_json(r)},
                        {"temperature", r.temperature},
                        {"max_tokens", r.max_tokens}};
    if (r.seed) j["seed"] = *r.seed;
    return j;
}

StatusError::StatusError(int status, std::string body_excerpt)
    : Error("HTTP status " + std::to_string(status) + ": " + body_excerpt), status_(status),
      body_(std::move(body_excerpt)) {}

HttpTransport::HttpTransport(std::chrono::seconds timeout) : timeout_(timeout) {}

HttpResponse HttpTransport::post(const std::string& url, const std::string& body,
                                 const std::map<std::string, std::string>& headers) {
    static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(url, m, url_re)) throw TransportError("malformed endpoint URL: " + url);
    httplib::Client cli(m[1].str());
    cli.set_connection_timeout(timeout_);
    cli.set_read_timeout(timeout_);
    cli.set_write_timeout(timeout_);
    httplib::Headers h;
    std::string content_type = "application/json";
    for (const auto& [k, v] : headers) {
        if (k == "Content-Type") {
            content_type = v;
        } else {
            h.emplace(k, v);
        }
    }
    const std::string path = m[2].matched ? m[2].str() : "/";
    auto res = cli.Post(path, h, body, content_type);
    if (!res) throw TransportError("request to " + url + " failed: " + httplib::to_string(res.error()));
    return {res->status, res->body};
}

std::string chat_completion_body(const std::string& content, const Usage& usage) {
    nlohmann::json j = {
        {"choices", {{{"index", 0}, {"message", {{"role", "assistant"}, {"content", content}}}}}},
        {"usage",
         {{"prompt_tokens", usage.prompt_tokens},
          {"completion_tokens", usage.completion_tokens},
          {"total_tokens", usage.total_tokens}}}};
    return j.dump();
}

void RealSleeper::sleep(std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }

void FakeSleeper::sleep(std::chrono::milliseconds d) {
    std::lock_guard lock(mu_);
    sleeps_.push_back(d);
}

std::vector<std::chrono::milliseconds> FakeSleeper::sleeps() const {
    std::lock_guard lock(mu_);
    return sleeps_;
}

std::chrono::milliseconds FakeSleeper::total() const {
    std::lock_guard lock(mu_);
    std::chrono::milliseconds t{0};
    for (auto d : sleeps_) t += d;
    return t;
}

// Counting gate bounding in-flight requests for one endpoint.
class ChatClient::Gate {
public:
    explicit Gate(int width) : free_(width) {}
    void acquire() {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return free_ > 0; });
        --free_;
    }
    void release() {
        {
            std::lock_guard lock(mu_);
            ++free_;
        }
        cv_.notify_one();
    }

private:
    std::mutex mu_;
    std::condition_variable cv_;
    int free_;
};

ChatClient::ChatClient(ClientOptions options, std::shared_ptr<Transport> transport, std::shared_ptr<Sleeper> sleeper)
    : options_(std::move(options)), transport_(std::move(transport)), sleeper_(std::move(sleeper)) {
    if (options_.max_attempts < 1) throw ConfigError("max_attempts must be at least 1");
    if (options_.max_in_flight_per_endpoint < 1) throw ConfigError("max_in_flight_per_endpoint must be at least 1");
    if (!transport_ && !options_.offline) throw ConfigError("a transport is required unless offline");
}

ChatClient::~ChatClient() = default;

ChatClient::Gate& ChatClient::gate_for(const std::string& endpoint) {
    std::lock_guard lock(mu_);
    auto& g = gates_[endpoint];
    if (!g) g = std::make_unique<Gate>(options_.max_in_flight_per_endpoint);
    return *g;
}

std::optional<ChatResponse> ChatClient::cache_load(const std::string& key) const {
    if (options_.cache_dir.empty()) return std::nullopt;
    const auto path = options_.cache_dir / key.substr(0, 2) / (key + ".json");
    std::error_code ec;
    if (!std::filesystem::exists(path, ec)) return std::nullopt;
    try {
        const auto j = nlohmann::json::parse(read_file(path));
        ChatResponse r;
        r.content = j.at("response").at("content").get<std::string>();
        const auto& u = j.at("response").at("usage");
        r.usage = {u.value("prompt_tokens", 0), u.value("completion_tokens", 0), u.value("total_tokens", 0)};
        r.from_cache = true;
        return r;
    } catch (const nlohmann::json::exception&) {
        return std::nullopt;  // corrupt entry: refetch and overwrite
    }
}

void ChatClient::cache_store(const std::string& key, const ChatRequest& request, const ChatResponse& response) const {
    if (options_.cache_dir.empty()) return;
    nlohmann::json j = {{"key", key},
                        {"request", canonical_json(request)},
                        {"response",
                         {{"content", response.content},
                          {"usage",
                           {{"prompt_tokens", response.usage.prompt_tokens},
                            {"completion_tokens", response.usage.completion_tokens},
                            {"total_tokens", response.usage.total_tokens}}}}}};
    write_file_atomic(options_.cache_dir / key.substr(0, 2) / (key + ".json"), j.dump(2) + "\n");
}

namespace {

bool transient_status(int s) { return s == 408 || s == 429 || (s >= 500 && s <= 599); }

std::string excerpt(const std::string& s) { return s.size() > 500 ? s.substr(0, 500) + "..." : s; }

ChatResponse parse_completion(const std::string& body) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
        throw ProtocolError(std::string("response is not JSON: ") + e.what());
    }
    const auto* choices = j.contains("choices") ? &j["choices"] : nullptr;
    if (!choices || !choices->is_array() || choices->empty() || !(*choices)[0].contains("message") ||
        !(*choices)[0]["message"].contains("content") || !(*choices)[0]["message"]["content"].is_string()) {
        throw ProtocolError("response has no choices[0].message.content");
    }
    ChatResponse r;
    r.content = (*choices)[0]["message"]["content"].get<std::string>();
    if (j.contains("usage") && j["usage"].is_object()) {
        const auto& u = j["usage"];
        r.usage = {u.value("prompt_tokens", 0), u.value("completion_tokens", 0), u.value("total_tokens", 0)};
    }
    return r;
}

}  // namespace

ChatResponse ChatClient::fetch(const ChatRequest& request) {
    std::map<std::string, std::string> headers = {{"Content-Type", "application/json"}};
    if (const char* key = std::getenv(options_.api_key_env.c_str()); key && *key) {
        headers["Authorization"] = std::string("Bearer ") + key;
    }
    const std::string body = wire_body(request).dump();
    Gate& gate = gate_for(request.endpoint);
    std::string last_failure;
    for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
        if (attempt > 1) {
            const double ms = static_cast<double>(options_.base_delay.count()) *
                              std::pow(options_.backoff_factor, attempt - 2);
            sleeper_->sleep(std::chrono::milliseconds(static_cast<std::int64_t>(ms)));
        }
        HttpResponse res;
        gate.acquire();
        try {
            ++upstream_calls_;
            res = transport_->post(request.endpoint, body, headers);
        } catch (const TransportError& e) {
            gate.release();
            last_failure = e.what();
            continue;
        } catch (...) {
            gate.release();
            throw;
        }
        gate.release();
        if (res.status >= 200 && res.status < 300) {
            ChatResponse r = parse_completion(res.body);
            r.attempts = attempt;
            return r;
        }
        if (!transient_status(res.status)) throw StatusError(res.status, excerpt(res.body));
        last_failure = "HTTP status " + std::to_string(res.status) + ": " + excerpt(res.body);
    }
    throw TransportError("gave up after " + std::to_string(options_.max_attempts) + " attempts; last: " +
                         last_failure);
}

ChatResponse ChatClient::complete_chat(const ChatRequest& request, CachePolicy policy) {
    validate(request);
    const std::string key = cache_key(request);
    if (policy == CachePolicy::use || options_.offline) {
        if (auto hit = cache_load(key)) return *hit;
    }
    if (options_.offline) throw CacheMiss("offline and not cached: " + key);
    if (policy == CachePolicy::bypass) {
        ChatResponse r = fetch(request);
        cache_store(key, request, r);
        return r;
    }

    // Single flight: concurrent identical requests share one upstream call.
    std::promise<ChatResponse> promise;
    std::shared_future<ChatResponse> shared;
    bool leader = false;
    {
        std::lock_guard lock(mu_);
        auto it = in_flight_.find(key);
        if (it != in_flight_.end()) {
            shared = it->second;
        } else {
            shared = promise.get_future().share();
            in_flight_.emplace(key, shared);
            leader = true;
        }
    }
    if (!leader) {
        ChatResponse r = shared.get();
        r.from_cache = true;
        return r;
    }
    try {
        // Another leader may have finished between our cache check and now.
        ChatResponse r;
        if (auto hit = cache_load(key)) {
            r = *hit;
        } else {
            r = fetch(request);
            cache_store(key, request, r);
        }
        promise.set_value(r);
        std::lock_guard lock(mu_);
        in_flight_.erase(key);
        return r;
    } catch (...) {
        promise.set_exception(std::current_exception());
        std::lock_guard lock(mu_);
        in_flight_.erase(key);
        throw;
    }
}

ChatRequest make_request(const ModelHandle& model, std::string user_content, double temperature,
                         std::optional<std::string> system_content) {
    if (model.model_id.empty()) throw Error("model handle needs a model id");
    ChatRequest r;
    r.endpoint = model.endpoint;
    r.model_id = model.model_id;
    r.temperature = temperature;
    if (system_content) r.messages.push_back({Role::system, std::move(*system_content)});
    r.messages.push_back({Role::user, std::move(user_content)});
    return r;
}

}  // namespace twinforge::llm
