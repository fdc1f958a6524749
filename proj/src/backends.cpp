#include "debate/backends.hpp"

#include "debate/errors.hpp"
#include "debate/util.hpp"

#include "json.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <ctime>
#include <iomanip>
#include <sstream>
#include <thread>

namespace debate::backends {

using nlohmann::json;

namespace {

std::string format_double(double value) {
    char buffer[64];
    auto [end, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
    return std::string(buffer, end);
}

std::string excerpt(std::string_view body, std::size_t limit = 300) {
    if (body.size() <= limit) return std::string(body);
    return std::string(body.substr(0, limit)) + "...";
}

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::string iso8601(std::time_t seconds) {
    std::tm tm{};
    gmtime_r(&seconds, &tm);
    std::ostringstream out;
    out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return out.str();
}

std::string trim_trailing_slash(std::string url) {
    while (!url.empty() && url.back() == '/') url.pop_back();
    return url;
}

json request_to_json(const std::string& backend_id, const ChatRequest& request) {
    json messages = json::array();
    for (const auto& m : request.messages())
        messages.push_back({{"role", to_string(m.role)}, {"text", m.text}});
    return {{"backend_id", backend_id},
            {"model_id", request.model_id()},
            {"messages", messages},
            {"temperature", request.temperature()},
            {"max_tokens", request.max_tokens()},
            {"seed", request.seed() ? json(*request.seed()) : json(nullptr)}};
}

} // namespace

// --- enums ---------------------------------------------------------------

std::string_view to_string(Role role) {
    switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
    }
    return "user";
}

std::optional<Role> role_from_string(std::string_view name) {
    for (auto r : {Role::system, Role::user, Role::assistant})
        if (to_string(r) == name) return r;
    return std::nullopt;
}

std::string_view to_string(BackendKind kind) {
    switch (kind) {
    case BackendKind::openai_compatible: return "openai_compatible";
    case BackendKind::gemini: return "gemini";
    case BackendKind::mock_fixed: return "mock_fixed";
    case BackendKind::mock_scripted: return "mock_scripted";
    }
    return "mock_fixed";
}

std::optional<BackendKind> backend_kind_from_string(std::string_view name) {
    for (auto k : {BackendKind::openai_compatible, BackendKind::gemini, BackendKind::mock_fixed,
                   BackendKind::mock_scripted})
        if (to_string(k) == name) return k;
    return std::nullopt;
}

// --- requests and specs --------------------------------------------------

ChatRequest::ChatRequest(std::string model_id, std::vector<Message> messages, double temperature, int max_tokens,
                         std::optional<std::int64_t> seed)
    : model_id_(std::move(model_id)), messages_(std::move(messages)), temperature_(temperature),
      max_tokens_(max_tokens), seed_(seed) {
    if (messages_.empty()) throw InvalidArgument("chat request needs at least one message");
    if (messages_.back().role != Role::user) throw InvalidArgument("the final message of a chat request must be a user turn");
    if (!(temperature_ >= 0.0 && temperature_ <= kMaxTemperature))
        throw InvalidArgument("temperature must lie in [0, 2], got " + format_double(temperature_));
    if (max_tokens_ < 1 || max_tokens_ > kMaxTokensLimit)
        throw InvalidArgument("max_tokens must lie in [1, 32768], got " + std::to_string(max_tokens_));
}

void BackendSpec::validate() const {
    if (backend_id.empty()) throw InvalidArgument("backend_id must be non-empty");
    const std::string where = "backend '" + backend_id + "': ";
    if (rate_limit < 1) throw InvalidArgument(where + "rate_limit must be a positive integer");
    if (retry.max_attempts < 1) throw InvalidArgument(where + "retry.max_attempts must be >= 1");
    if (retry.base_backoff_ms < 0 || retry.max_backoff_ms < retry.base_backoff_ms)
        throw InvalidArgument(where + "retry backoff bounds must satisfy 0 <= base <= max");
    if (is_remote()) {
        if (endpoint_url.empty()) throw InvalidArgument(where + "remote backends require endpoint_url");
        if (credential_env_var.empty()) throw InvalidArgument(where + "remote backends require credential_env_var");
        if (!script.empty() || !faults.empty()) throw InvalidArgument(where + "script/faults are only valid for mocks");
    } else {
        if (!endpoint_url.empty()) throw InvalidArgument(where + "mock backends must not set endpoint_url");
        if (!credential_env_var.empty()) throw InvalidArgument(where + "mock backends must not set credential_env_var");
        if (kind == BackendKind::mock_fixed && script.size() != 1)
            throw InvalidArgument(where + "mock_fixed needs exactly one response text");
        if (kind == BackendKind::mock_scripted && script.empty()) throw EmptyScript();
    }
}

void validate_unique(const std::vector<BackendSpec>& specs) {
    std::vector<std::string> seen;
    for (const auto& spec : specs) {
        spec.validate();
        if (std::find(seen.begin(), seen.end(), spec.backend_id) != seen.end())
            throw InvalidArgument("duplicate backend_id '" + spec.backend_id + "'");
        seen.push_back(spec.backend_id);
    }
}

BackendSpec mock_fixed(std::string backend_id, std::string text) {
    BackendSpec spec;
    spec.backend_id = std::move(backend_id);
    spec.kind = BackendKind::mock_fixed;
    spec.rate_limit = kDefaultMockRateLimit;
    spec.script = {std::move(text)};
    return spec;
}

BackendSpec mock_scripted(std::string backend_id, std::vector<std::string> script) {
    if (script.empty()) throw EmptyScript();
    BackendSpec spec;
    spec.backend_id = std::move(backend_id);
    spec.kind = BackendKind::mock_scripted;
    spec.rate_limit = kDefaultMockRateLimit;
    spec.script = std::move(script);
    return spec;
}

std::string cache_key(const BackendSpec& spec, const ChatRequest& request) {
    json messages = json::array();
    for (const auto& m : request.messages()) messages.push_back(json::array({to_string(m.role), m.text}));
    json key = json::array({"debate-cache-v1", spec.backend_id, request.model_id(), messages,
                            format_double(request.temperature()), request.max_tokens(),
                            request.seed() ? json(*request.seed()) : json(nullptr)});
    return util::sha256_hex(key.dump());
}

std::int64_t approximate_tokens(std::string_view text) {
    std::int64_t count = 0;
    bool in_word = false;
    for (char c : text) {
        bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
        if (!space && !in_word) ++count;
        in_word = !space;
    }
    return count;
}

// --- clocks --------------------------------------------------------------

std::int64_t SystemClock::now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

void SystemClock::sleep_for_ms(std::int64_t ms) {
    if (ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(ms));
}

std::string SystemClock::timestamp() {
    return iso8601(std::chrono::system_clock::to_time_t(std::chrono::system_clock::now()));
}

void VirtualClock::sleep_for_ms(std::int64_t ms) {
    {
        std::lock_guard lock(mutex_);
        sleeps_.push_back(ms);
    }
    if (ms > 0) now_ += ms;
}

std::string VirtualClock::timestamp() { return iso8601(static_cast<std::time_t>(now_.load() / 1000)); }

std::vector<std::int64_t> VirtualClock::sleeps() const {
    std::lock_guard lock(mutex_);
    return sleeps_;
}

// --- rate limiting -------------------------------------------------------

RateLimiter::RateLimiter(int per_minute, std::shared_ptr<Clock> clock)
    : per_minute_(per_minute), clock_(std::move(clock)) {
    if (per_minute_ < 1) throw InvalidArgument("rate limit must be positive");
}

void RateLimiter::acquire() {
    constexpr std::int64_t window = 60'000;
    std::unique_lock lock(mutex_);
    for (;;) {
        std::int64_t now = clock_->now_ms();
        while (!dispatched_.empty() && dispatched_.front() <= now - window) dispatched_.pop_front();
        if (dispatched_.size() < static_cast<std::size_t>(per_minute_)) {
            dispatched_.push_back(now);
            return;
        }
        std::int64_t wait = dispatched_.front() + window - now;
        lock.unlock();
        clock_->sleep_for_ms(wait);
        lock.lock();
    }
}

// --- call recording ------------------------------------------------------

void CallRecorder::record(const std::string& backend_id, const ChatRequest& request, int attempt) {
    std::lock_guard lock(mutex_);
    entries_.push_back({backend_id, request.messages(), attempt});
}

std::size_t CallRecorder::count() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

std::size_t CallRecorder::count(std::string_view backend_id) const {
    std::lock_guard lock(mutex_);
    return static_cast<std::size_t>(
        std::count_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.backend_id == backend_id; }));
}

std::vector<CallRecorder::Entry> CallRecorder::entries() const {
    std::lock_guard lock(mutex_);
    return entries_;
}

void CallRecorder::clear() {
    std::lock_guard lock(mutex_);
    entries_.clear();
}

std::shared_ptr<RateLimiter> Runtime::limiter_for(const BackendSpec& spec) {
    std::lock_guard lock(limiter_mutex_);
    auto& limiter = limiters_[spec.backend_id];
    if (!limiter) limiter = std::make_shared<RateLimiter>(spec.rate_limit, clock);
    return limiter;
}

std::optional<std::string> Runtime::default_getenv(const std::string& name) {
    if (const char* value = std::getenv(name.c_str())) return std::string(value);
    return std::nullopt;
}

// --- retry ---------------------------------------------------------------

bool is_retryable_status(int status) { return status == 429 || (status >= 500 && status <= 599); }

std::int64_t backoff_delay_ms(const RetryPolicy& policy, int retry, std::int64_t previous_ms, double jitter01) {
    std::int64_t nominal = policy.base_backoff_ms;
    for (int i = 1; i < retry && nominal < policy.max_backoff_ms; ++i) nominal *= 2;
    nominal = std::min(nominal, policy.max_backoff_ms);
    std::int64_t floor = nominal / 2;
    jitter01 = std::clamp(jitter01, 0.0, 1.0);
    auto delay = floor + static_cast<std::int64_t>(jitter01 * static_cast<double>(nominal - floor));
    delay = std::max(delay, previous_ms);
    return std::min(delay, policy.max_backoff_ms);
}

Backend::Backend(BackendSpec spec, std::shared_ptr<Runtime> runtime)
    : spec_(std::move(spec)), runtime_(std::move(runtime)) {
    spec_.validate();
    if (!runtime_) throw InvalidArgument("backend needs a runtime");
    limiter_ = runtime_->limiter_for(spec_);
    jitter_state_ = runtime_->jitter_seed ^ std::hash<std::string>{}(spec_.backend_id);
}

ChatResponse Backend::complete(const ChatRequest& request) {
    prepare();
    Clock& clock = *runtime_->clock;
    const std::int64_t start = clock.now_ms();
    last_retries_ = 0;
    std::int64_t previous_delay = 0;
    for (int attempt_no = 1;; ++attempt_no) {
        limiter_->acquire();
        if (runtime_->recorder) runtime_->recorder->record(spec_.backend_id, request, attempt_no);
        Attempt result = attempt(request);
        if (result.ok) {
            ChatResponse response;
            response.text = std::move(result.text);
            response.usage = result.usage;
            response.latency_ms = std::max<std::int64_t>(0, clock.now_ms() - start);
            response.backend_id = spec_.backend_id;
            return response;
        }
        const HttpResult& failure = result.failure;
        bool retryable = failure.network_error || is_retryable_status(failure.status);
        if (!retryable || attempt_no >= spec_.retry.max_attempts)
            throw ProviderError(failure.status, excerpt(failure.body));
        double jitter = static_cast<double>(splitmix64(jitter_state_) >> 11) * 0x1.0p-53;
        previous_delay = backoff_delay_ms(spec_.retry, attempt_no, previous_delay, jitter);
        util::log_warning("backend '" + spec_.backend_id + "' attempt " + std::to_string(attempt_no) +
                          " failed with status " + std::to_string(failure.status) + "; retrying in " +
                          std::to_string(previous_delay) + " ms");
        clock.sleep_for_ms(previous_delay);
        ++last_retries_;
    }
}

// --- wire formats --------------------------------------------------------

HttpRequest encode_openai_request(const BackendSpec& spec, const ChatRequest& request, const std::string& api_key) {
    json messages = json::array();
    for (const auto& m : request.messages()) messages.push_back({{"role", to_string(m.role)}, {"content", m.text}});
    json body = {{"model", request.model_id()},
                 {"messages", messages},
                 {"temperature", request.temperature()},
                 {"max_tokens", request.max_tokens()}};
    if (request.seed()) body["seed"] = *request.seed();
    HttpRequest http;
    http.url = trim_trailing_slash(spec.endpoint_url) + "/chat/completions";
    http.headers = {{"Authorization", "Bearer " + api_key}, {"Content-Type", "application/json"}};
    http.body = body.dump();
    return http;
}

Completion decode_openai_response(std::string_view body) {
    json doc = json::parse(body, nullptr, false);
    if (doc.is_discarded()) throw MalformedProviderResponse("response is not JSON: " + excerpt(body));
    const json* content = nullptr;
    if (doc.contains("choices") && doc["choices"].is_array() && !doc["choices"].empty()) {
        const json& choice = doc["choices"][0];
        if (choice.contains("message") && choice["message"].contains("content")) content = &choice["message"]["content"];
    }
    if (!content || !content->is_string()) throw MalformedProviderResponse("response lacks choices[0].message.content");
    Completion out;
    out.text = content->get<std::string>();
    if (doc.contains("usage") && doc["usage"].is_object()) {
        out.usage.prompt_tokens = doc["usage"].value("prompt_tokens", std::int64_t{0});
        out.usage.completion_tokens = doc["usage"].value("completion_tokens", std::int64_t{0});
    }
    return out;
}

HttpRequest encode_gemini_request(const BackendSpec& spec, const ChatRequest& request, const std::string& api_key) {
    json contents = json::array();
    std::string system_text;
    for (const auto& m : request.messages()) {
        if (m.role == Role::system) {
            if (!system_text.empty()) system_text += "\n\n";
            system_text += m.text;
            continue;
        }
        contents.push_back({{"role", m.role == Role::assistant ? "model" : "user"},
                            {"parts", json::array({{{"text", m.text}}})}});
    }
    json config = {{"temperature", request.temperature()}, {"maxOutputTokens", request.max_tokens()}};
    if (request.seed()) config["seed"] = *request.seed();
    json body = {{"contents", contents}, {"generationConfig", config}};
    if (!system_text.empty()) body["systemInstruction"] = {{"parts", json::array({{{"text", system_text}}})}};
    HttpRequest http;
    http.url = trim_trailing_slash(spec.endpoint_url) + "/models/" + request.model_id() + ":generateContent";
    http.headers = {{"x-goog-api-key", api_key}, {"Content-Type", "application/json"}};
    http.body = body.dump();
    return http;
}

Completion decode_gemini_response(std::string_view body) {
    json doc = json::parse(body, nullptr, false);
    if (doc.is_discarded()) throw MalformedProviderResponse("response is not JSON: " + excerpt(body));
    Completion out;
    bool found = false;
    if (doc.contains("candidates") && doc["candidates"].is_array() && !doc["candidates"].empty()) {
        const json& candidate = doc["candidates"][0];
        if (candidate.contains("content") && candidate["content"].contains("parts") &&
            candidate["content"]["parts"].is_array()) {
            for (const auto& part : candidate["content"]["parts"]) {
                if (part.contains("text") && part["text"].is_string()) {
                    out.text += part["text"].get<std::string>();
                    found = true;
                }
            }
        }
    }
    if (!found) throw MalformedProviderResponse("response lacks candidates[0].content.parts[].text");
    if (doc.contains("usageMetadata") && doc["usageMetadata"].is_object()) {
        out.usage.prompt_tokens = doc["usageMetadata"].value("promptTokenCount", std::int64_t{0});
        out.usage.completion_tokens = doc["usageMetadata"].value("candidatesTokenCount", std::int64_t{0});
    }
    return out;
}

// --- concrete backends ---------------------------------------------------

namespace {

class RemoteBackend final : public Backend {
public:
    using Backend::Backend;

protected:
    void prepare() override {
        auto key = runtime().getenv(spec().credential_env_var);
        if (!key || key->empty()) throw MissingCredential(spec().credential_env_var);
        api_key_ = *key;
    }

    Attempt attempt(const ChatRequest& request) override {
        const bool openai = spec().kind == BackendKind::openai_compatible;
        HttpRequest http = openai ? encode_openai_request(spec(), request, api_key_)
                                  : encode_gemini_request(spec(), request, api_key_);
        HttpResult result = runtime().transport->post(http);
        Attempt out;
        if (!result.network_error && result.status >= 200 && result.status < 300) {
            Completion c = openai ? decode_openai_response(result.body) : decode_gemini_response(result.body);
            out.ok = true;
            out.text = std::move(c.text);
            out.usage = c.usage;
        } else {
            out.failure = std::move(result);
        }
        return out;
    }

private:
    std::string api_key_;
};

class MockBackend final : public Backend {
public:
    using Backend::Backend;

protected:
    Attempt attempt(const ChatRequest& request) override {
        std::lock_guard lock(mutex_);
        Attempt out;
        const auto& faults = spec().faults;
        if (fault_cursor_ < faults.size()) {
            int status = faults[fault_cursor_++];
            out.failure = {status, "injected fault", status == 0};
            return out;
        }
        const auto& script = spec().script;
        std::size_t index = std::min(script_cursor_, script.size() - 1);
        ++script_cursor_;
        out.ok = true;
        out.text = script[index];
        for (const auto& m : request.messages()) out.usage.prompt_tokens += approximate_tokens(m.text);
        out.usage.completion_tokens = approximate_tokens(out.text);
        return out;
    }

private:
    std::mutex mutex_;
    std::size_t fault_cursor_ = 0;
    std::size_t script_cursor_ = 0;
};

} // namespace

std::unique_ptr<Backend> make_backend(const BackendSpec& spec, std::shared_ptr<Runtime> runtime) {
    if (spec.is_remote()) return std::make_unique<RemoteBackend>(spec, std::move(runtime));
    return std::make_unique<MockBackend>(spec, std::move(runtime));
}

ChatResponse complete(const BackendSpec& spec, const ChatRequest& request, std::shared_ptr<Runtime> runtime) {
    return make_backend(spec, std::move(runtime))->complete(request);
}

// --- cache ---------------------------------------------------------------

ChatResponse cached_complete(Backend& backend, const ChatRequest& request, const std::filesystem::path& cache_dir) {
    const std::string key = cache_key(backend.spec(), request);
    const auto path = cache_dir / (key + ".json");

    std::error_code ec;
    if (std::filesystem::exists(path, ec)) {
        try {
            json doc = json::parse(util::read_file(path), nullptr, false);
            if (doc.is_discarded() || !doc.is_object()) throw CacheCorrupt("entry is not valid JSON");
            if (doc.value("key", std::string{}) != key) throw CacheCorrupt("entry key does not match its file name");
            if (doc.at("request") != request_to_json(backend.spec().backend_id, request))
                throw CacheCorrupt("stored request differs from the lookup request");
            const json& r = doc.at("response");
            ChatResponse response;
            response.text = r.at("text").get<std::string>();
            response.usage.prompt_tokens = r.at("usage").at("prompt_tokens").get<std::int64_t>();
            response.usage.completion_tokens = r.at("usage").at("completion_tokens").get<std::int64_t>();
            response.latency_ms = r.at("latency_ms").get<std::int64_t>();
            response.backend_id = r.at("backend_id").get<std::string>();
            response.cached = true;
            return response;
        } catch (const CacheCorrupt& e) {
            util::log_warning("CacheCorrupt: " + path.string() + ": " + e.what() + "; refetching");
        } catch (const std::exception& e) {
            util::log_warning("CacheCorrupt: " + path.string() + ": " + e.what() + "; refetching");
        }
    }

    ChatResponse response = backend.complete(request);
    std::filesystem::create_directories(cache_dir, ec);
    json doc = {{"key", key},
                {"request", request_to_json(backend.spec().backend_id, request)},
                {"response",
                 {{"text", response.text},
                  {"usage", {{"prompt_tokens", response.usage.prompt_tokens},
                             {"completion_tokens", response.usage.completion_tokens}}},
                  {"latency_ms", response.latency_ms},
                  {"backend_id", response.backend_id}}}};
    util::write_file_atomic(path, doc.dump(2));
    return response;
}

} // namespace debate::backends
