#pragma once

// Uniform chat-completion interface over remote providers (OpenAI-compatible
// and Gemini-style endpoints) and deterministic local doubles.
//
// BackendSpec is plain configuration. A Backend is the runtime object built
// from it; debates create one per agent so that scripted doubles keep a
// per-conversation counter. Everything shared between Backend instances
// (clock, rate limiters, transport, call log) lives in a Runtime.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace debate::backends {

enum class Role { system, user, assistant };

std::string_view to_string(Role role);
std::optional<Role> role_from_string(std::string_view name);

struct Message {
    Role role;
    std::string text;
    friend bool operator==(const Message&, const Message&) = default;
};

inline constexpr double kMaxTemperature = 2.0;
inline constexpr int kMaxTokensLimit = 32768;

/// Validated on construction: non-empty messages ending with a user turn,
/// 0 <= temperature <= 2, 1 <= max_tokens <= 32768.
class ChatRequest {
public:
    ChatRequest(std::string model_id, std::vector<Message> messages, double temperature, int max_tokens,
                std::optional<std::int64_t> seed = std::nullopt);

    const std::string& model_id() const noexcept { return model_id_; }
    const std::vector<Message>& messages() const noexcept { return messages_; }
    double temperature() const noexcept { return temperature_; }
    int max_tokens() const noexcept { return max_tokens_; }
    const std::optional<std::int64_t>& seed() const noexcept { return seed_; }

    friend bool operator==(const ChatRequest&, const ChatRequest&) = default;

private:
    std::string model_id_;
    std::vector<Message> messages_;
    double temperature_;
    int max_tokens_;
    std::optional<std::int64_t> seed_;
};

struct Usage {
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
    Usage& operator+=(const Usage& other) {
        prompt_tokens += other.prompt_tokens;
        completion_tokens += other.completion_tokens;
        return *this;
    }
    friend bool operator==(const Usage&, const Usage&) = default;
};

struct ChatResponse {
    std::string text; ///< verbatim provider output
    Usage usage;
    std::int64_t latency_ms = 0;
    std::string backend_id;
    bool cached = false;
    friend bool operator==(const ChatResponse&, const ChatResponse&) = default;
};

enum class BackendKind { openai_compatible, gemini, mock_fixed, mock_scripted };

std::string_view to_string(BackendKind kind);
std::optional<BackendKind> backend_kind_from_string(std::string_view name);

struct RetryPolicy {
    int max_attempts = 5;
    std::int64_t base_backoff_ms = 500;
    std::int64_t max_backoff_ms = 30'000;
    friend bool operator==(const RetryPolicy&, const RetryPolicy&) = default;
};

inline constexpr int kDefaultRemoteRateLimit = 60;
inline constexpr int kDefaultMockRateLimit = 1'000'000;

struct BackendSpec {
    std::string backend_id;
    BackendKind kind = BackendKind::mock_fixed;
    std::string endpoint_url;       // remote kinds only
    std::string credential_env_var; // remote kinds only
    int rate_limit = kDefaultRemoteRateLimit; ///< requests per minute
    RetryPolicy retry;
    /// mock_fixed: exactly one entry. mock_scripted: the i-th completion of a
    /// conversation returns script[i], then the last entry forever.
    std::vector<std::string> script;
    /// Mock fault injection: HTTP statuses returned, in order, before any
    /// scripted text. They go through the normal retry path.
    std::vector<int> faults;

    bool is_remote() const noexcept { return kind == BackendKind::openai_compatible || kind == BackendKind::gemini; }

    /// Throws InvalidArgument.
    void validate() const;

    friend bool operator==(const BackendSpec&, const BackendSpec&) = default;
};

/// Throws InvalidArgument on duplicate ids or an invalid spec.
void validate_unique(const std::vector<BackendSpec>& specs);

BackendSpec mock_fixed(std::string backend_id, std::string text);
/// Throws EmptyScript.
BackendSpec mock_scripted(std::string backend_id, std::vector<std::string> script);

/// SHA-256 hex digest over backend_id, model_id, ordered messages,
/// temperature, max_tokens and seed.
std::string cache_key(const BackendSpec& spec, const ChatRequest& request);

// --- runtime services ----------------------------------------------------

class Clock {
public:
    virtual ~Clock() = default;
    /// Monotonic milliseconds.
    virtual std::int64_t now_ms() = 0;
    virtual void sleep_for_ms(std::int64_t ms) = 0;
    /// ISO-8601 UTC wall time, used for run timestamps.
    virtual std::string timestamp() = 0;
};

class SystemClock final : public Clock {
public:
    std::int64_t now_ms() override;
    void sleep_for_ms(std::int64_t ms) override;
    std::string timestamp() override;
};

/// Time only moves when someone sleeps. Sleeps are recorded for inspection.
class VirtualClock final : public Clock {
public:
    explicit VirtualClock(std::int64_t start_ms = 0) : now_(start_ms) {}
    std::int64_t now_ms() override { return now_.load(); }
    void sleep_for_ms(std::int64_t ms) override;
    std::string timestamp() override;
    void advance(std::int64_t ms) { now_ += ms; }
    std::vector<std::int64_t> sleeps() const;

private:
    std::atomic<std::int64_t> now_;
    mutable std::mutex mutex_;
    std::vector<std::int64_t> sleeps_;
};

/// Sliding 60-second window: at most `per_minute` acquisitions in any window.
class RateLimiter {
public:
    RateLimiter(int per_minute, std::shared_ptr<Clock> clock);
    void acquire();
    int per_minute() const noexcept { return per_minute_; }

private:
    int per_minute_;
    std::shared_ptr<Clock> clock_;
    std::mutex mutex_;
    std::deque<std::int64_t> dispatched_;
};

struct HttpRequest {
    std::string url;
    std::vector<std::pair<std::string, std::string>> headers;
    std::string body;
};

struct HttpResult {
    int status = 0; ///< 0 when no response arrived (timeout, connection failure)
    std::string body;
    bool network_error = false;
};

class Transport {
public:
    virtual ~Transport() = default;
    virtual HttpResult post(const HttpRequest& request) = 0;
};

/// cpp-httplib client; https needs OpenSSL, which the build links.
class HttpTransport final : public Transport {
public:
    explicit HttpTransport(std::chrono::seconds connect_timeout = std::chrono::seconds(15),
                           std::chrono::seconds read_timeout = std::chrono::seconds(300));
    HttpResult post(const HttpRequest& request) override;

private:
    std::chrono::seconds connect_timeout_;
    std::chrono::seconds read_timeout_;
};

/// Thread-safe log of every dispatched attempt, for call accounting.
class CallRecorder {
public:
    struct Entry {
        std::string backend_id;
        std::vector<Message> messages;
        int attempt; ///< 1-based
    };
    void record(const std::string& backend_id, const ChatRequest& request, int attempt);
    std::size_t count() const;
    std::size_t count(std::string_view backend_id) const;
    std::vector<Entry> entries() const;
    void clear();

private:
    mutable std::mutex mutex_;
    std::vector<Entry> entries_;
};

struct Runtime {
    std::shared_ptr<Clock> clock = std::make_shared<SystemClock>();
    std::shared_ptr<Transport> transport = std::make_shared<HttpTransport>();
    std::shared_ptr<CallRecorder> recorder; // optional
    std::function<std::optional<std::string>(const std::string&)> getenv = default_getenv;
    std::uint64_t jitter_seed = 0x5eed;

    /// One limiter per backend_id, shared by every Backend built from this runtime.
    std::shared_ptr<RateLimiter> limiter_for(const BackendSpec& spec);

    static std::optional<std::string> default_getenv(const std::string& name);

private:
    std::mutex limiter_mutex_;
    std::map<std::string, std::shared_ptr<RateLimiter>> limiters_;
};

// --- backends ------------------------------------------------------------

/// Backoff before retry number `retry` (1-based), given the previous delay.
/// Delays grow exponentially from base, jittered within
/// [half the nominal delay, the nominal delay], never decrease and never
/// exceed max_backoff_ms.
std::int64_t backoff_delay_ms(const RetryPolicy& policy, int retry, std::int64_t previous_ms, double jitter01);

bool is_retryable_status(int status);

class Backend {
public:
    Backend(BackendSpec spec, std::shared_ptr<Runtime> runtime);
    virtual ~Backend() = default;
    Backend(const Backend&) = delete;
    Backend& operator=(const Backend&) = delete;

    const BackendSpec& spec() const noexcept { return spec_; }

    /// Rate-limited, retried completion. Throws MissingCredential,
    /// ProviderError, MalformedProviderResponse.
    ChatResponse complete(const ChatRequest& request);

    /// Retries performed by the most recent complete() call.
    int last_retry_count() const noexcept { return last_retries_; }

protected:
    struct Attempt {
        bool ok = false;
        std::string text;
        Usage usage;
        HttpResult failure;
    };

    /// Called before the first attempt; remote backends check credentials here.
    virtual void prepare() {}
    virtual Attempt attempt(const ChatRequest& request) = 0;

    Runtime& runtime() { return *runtime_; }

private:
    BackendSpec spec_;
    std::shared_ptr<Runtime> runtime_;
    std::shared_ptr<RateLimiter> limiter_;
    std::uint64_t jitter_state_;
    int last_retries_ = 0;
};

std::unique_ptr<Backend> make_backend(const BackendSpec& spec, std::shared_ptr<Runtime> runtime);

/// Free-function form: builds a fresh backend and completes one request.
ChatResponse complete(const BackendSpec& spec, const ChatRequest& request, std::shared_ptr<Runtime> runtime);

/// On a hit returns the stored response with cached = true and makes no call.
/// On a miss delegates to backend.complete and persists the result. Corrupt
/// entries are logged and treated as misses.
ChatResponse cached_complete(Backend& backend, const ChatRequest& request, const std::filesystem::path& cache_dir);

// --- wire formats --------------------------------------------------------

struct Completion {
    std::string text;
    Usage usage;
};

HttpRequest encode_openai_request(const BackendSpec& spec, const ChatRequest& request, const std::string& api_key);
/// Throws MalformedProviderResponse.
Completion decode_openai_response(std::string_view body);

HttpRequest encode_gemini_request(const BackendSpec& spec, const ChatRequest& request, const std::string& api_key);
/// Throws MalformedProviderResponse.
Completion decode_gemini_response(std::string_view body);

/// Whitespace-delimited word count; the doubles' token estimate.
std::int64_t approximate_tokens(std::string_view text);

} // namespace debate::backends
