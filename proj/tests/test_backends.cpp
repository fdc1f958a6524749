#include "debate/backends.hpp"
#include "debate/errors.hpp"
#include "debate/util.hpp"

#include "doctest.h"
#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

using namespace debate::backends;
namespace fs = std::filesystem;

namespace {

ChatRequest simple_request(std::string text = "What is 2+2?", double temperature = 1.0) {
    return ChatRequest("model-a", {{Role::user, std::move(text)}}, temperature, 256);
}

std::shared_ptr<Runtime> test_runtime() {
    auto rt = std::make_shared<Runtime>();
    rt->clock = std::make_shared<VirtualClock>();
    rt->recorder = std::make_shared<CallRecorder>();
    rt->getenv = [](const std::string&) -> std::optional<std::string> { return std::nullopt; };
    return rt;
}

/// Plays back canned HTTP results and remembers what was sent.
class ScriptedTransport final : public Transport {
public:
    explicit ScriptedTransport(std::vector<HttpResult> results) : results_(std::move(results)) {}
    HttpResult post(const HttpRequest& request) override {
        sent.push_back(request);
        return results_[std::min(sent.size() - 1, results_.size() - 1)];
    }
    std::vector<HttpRequest> sent;

private:
    std::vector<HttpResult> results_;
};

const char* kOpenAiOk = R"({"choices":[{"message":{"role":"assistant","content":"A: \\boxed{4}"}}],
                            "usage":{"prompt_tokens":12,"completion_tokens":5}})";

BackendSpec remote_spec(BackendKind kind = BackendKind::openai_compatible) {
    BackendSpec spec;
    spec.backend_id = "remote";
    spec.kind = kind;
    spec.endpoint_url = "https://example.invalid/v1";
    spec.credential_env_var = "DEBATE_TEST_KEY";
    spec.retry = {3, 100, 1000};
    return spec;
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("debate-test-" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

} // namespace

TEST_CASE("ChatRequest validation") {
    CHECK_NOTHROW(simple_request());
    CHECK_THROWS_AS(ChatRequest("m", {}, 1.0, 10), debate::InvalidArgument);
    CHECK_THROWS_AS(ChatRequest("m", {{Role::assistant, "x"}}, 1.0, 10), debate::InvalidArgument);
    CHECK_THROWS_AS(ChatRequest("m", {{Role::user, "x"}}, -0.1, 10), debate::InvalidArgument);
    CHECK_THROWS_AS(ChatRequest("m", {{Role::user, "x"}}, 2.5, 10), debate::InvalidArgument);
    CHECK_THROWS_AS(ChatRequest("m", {{Role::user, "x"}}, 1.0, 0), debate::InvalidArgument);
    CHECK_THROWS_AS(ChatRequest("m", {{Role::user, "x"}}, 1.0, 32769), debate::InvalidArgument);
    CHECK_NOTHROW(ChatRequest("m", {{Role::user, "x"}}, 2.0, 32768));
}

TEST_CASE("BackendSpec validation") {
    CHECK_NOTHROW(remote_spec().validate());
    auto no_url = remote_spec();
    no_url.endpoint_url.clear();
    CHECK_THROWS_AS(no_url.validate(), debate::InvalidArgument);
    auto no_env = remote_spec();
    no_env.credential_env_var.clear();
    CHECK_THROWS_AS(no_env.validate(), debate::InvalidArgument);

    auto mock = mock_fixed("m", "x");
    mock.endpoint_url = "https://nope";
    CHECK_THROWS_AS(mock.validate(), debate::InvalidArgument);
    mock = mock_fixed("m", "x");
    mock.credential_env_var = "KEY";
    CHECK_THROWS_AS(mock.validate(), debate::InvalidArgument);

    CHECK_THROWS_AS(validate_unique({mock_fixed("a", "x"), mock_fixed("a", "y")}), debate::InvalidArgument);
    CHECK_NOTHROW(validate_unique({mock_fixed("a", "x"), mock_fixed("b", "y")}));
}

TEST_CASE("complete: fixed double returns its script") {
    auto rt = test_runtime();
    auto response = complete(mock_fixed("fixed", "A: \\boxed{4}"), simple_request("anything"), rt);
    CHECK(response.text == "A: \\boxed{4}");
    CHECK_FALSE(response.cached);
    CHECK(response.backend_id == "fixed");
    CHECK(response.usage.completion_tokens == 2);
}

TEST_CASE("complete: text is returned verbatim") {
    auto rt = test_runtime();
    std::string odd = "  leading and trailing space \n\n";
    CHECK(complete(mock_fixed("fixed", odd), simple_request(), rt).text == odd);
}

TEST_CASE("complete: remote without credential") {
    auto rt = test_runtime();
    CHECK_THROWS_AS(complete(remote_spec(), simple_request(), rt), debate::MissingCredential);
    rt->getenv = [](const std::string&) -> std::optional<std::string> { return std::string(); };
    CHECK_THROWS_AS(complete(remote_spec(), simple_request(), rt), debate::MissingCredential);
    CHECK(rt->recorder->count() == 0);
}

TEST_CASE("mock_scripted: exhaustion repeats the last entry") {
    auto rt = test_runtime();
    auto backend = make_backend(mock_scripted("s", {"x", "y"}), rt);
    CHECK(backend->complete(simple_request()).text == "x");
    CHECK(backend->complete(simple_request()).text == "y");
    CHECK(backend->complete(simple_request()).text == "y");
    CHECK_THROWS_AS(mock_scripted("s", {}), debate::EmptyScript);
}

TEST_CASE("retry: 429 twice then success within three attempts") {
    auto rt = test_runtime();
    auto spec = mock_fixed("flaky", "\\boxed{4}");
    spec.faults = {429, 429};
    spec.retry = {3, 100, 1000};
    auto backend = make_backend(spec, rt);
    auto response = backend->complete(simple_request());
    CHECK(response.text == "\\boxed{4}");
    CHECK(backend->last_retry_count() == 2);
    CHECK(rt->recorder->count("flaky") == 3);
}

TEST_CASE("retry: remote path through the transport") {
    auto rt = test_runtime();
    rt->getenv = [](const std::string& name) -> std::optional<std::string> {
        return name == "DEBATE_TEST_KEY" ? std::optional<std::string>("sk-test") : std::nullopt;
    };
    auto transport = std::make_shared<ScriptedTransport>(std::vector<HttpResult>{
        {429, "slow down", false}, {503, "busy", false}, {200, kOpenAiOk, false}});
    rt->transport = transport;
    auto backend = make_backend(remote_spec(), rt);
    auto response = backend->complete(simple_request());
    CHECK(response.text == "A: \\boxed{4}");
    CHECK(response.usage == Usage{12, 5});
    CHECK(backend->last_retry_count() == 2);
    REQUIRE(transport->sent.size() == 3);
    CHECK(transport->sent[0].url == "https://example.invalid/v1/chat/completions");
    bool has_auth = false;
    for (const auto& [k, v] : transport->sent[0].headers) has_auth |= (k == "Authorization" && v == "Bearer sk-test");
    CHECK(has_auth);
}

TEST_CASE("retry: non-retryable and exhausted failures") {
    auto rt = test_runtime();
    auto spec = mock_fixed("bad", "x");
    spec.retry = {4, 10, 100};

    spec.faults = {400};
    auto backend = make_backend(spec, rt);
    try {
        backend->complete(simple_request());
        FAIL("expected ProviderError");
    } catch (const debate::ProviderError& e) {
        CHECK(e.status() == 400);
    }
    CHECK(rt->recorder->count("bad") == 1);

    rt->recorder->clear();
    spec.faults = {500, 502, 503, 504, 500};
    backend = make_backend(spec, rt);
    try {
        backend->complete(simple_request());
        FAIL("expected ProviderError");
    } catch (const debate::ProviderError& e) {
        CHECK(e.status() == 504);
    }
    CHECK(rt->recorder->count("bad") == 4);

    rt->recorder->clear();
    spec.faults = {0, 408};
    backend = make_backend(spec, rt);
    CHECK_THROWS_AS(backend->complete(simple_request()), debate::ProviderError);
    CHECK(rt->recorder->count("bad") == 2); // network error retried, 408 not
}

TEST_CASE("retry: malformed payloads are not retried") {
    auto rt = test_runtime();
    rt->getenv = [](const std::string&) -> std::optional<std::string> { return "k"; };
    auto transport = std::make_shared<ScriptedTransport>(std::vector<HttpResult>{{200, R"({"choices":[]})", false}});
    rt->transport = transport;
    CHECK_THROWS_AS(complete(remote_spec(), simple_request(), rt), debate::MalformedProviderResponse);
    CHECK(transport->sent.size() == 1);
}

TEST_CASE("property: backoff is bounded and non-decreasing") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 300; ++trial) {
        auto rt = test_runtime();
        auto clock = std::static_pointer_cast<VirtualClock>(rt->clock);
        rt->jitter_seed = rng();
        auto spec = mock_fixed("b", "x");
        spec.retry = {1 + static_cast<int>(rng() % 8), static_cast<std::int64_t>(rng() % 600),
                      600 + static_cast<std::int64_t>(rng() % 5000)};
        spec.faults.assign(rng() % 10, 503);
        auto backend = make_backend(spec, rt);
        bool ok = true;
        try {
            backend->complete(simple_request());
        } catch (const debate::ProviderError&) {
            ok = false;
        }
        CHECK(ok == (spec.faults.size() < static_cast<std::size_t>(spec.retry.max_attempts)));
        CHECK(rt->recorder->count() <= static_cast<std::size_t>(spec.retry.max_attempts));
        auto sleeps = clock->sleeps();
        for (std::size_t i = 0; i < sleeps.size(); ++i) {
            CHECK(sleeps[i] <= spec.retry.max_backoff_ms);
            if (i > 0) CHECK(sleeps[i] >= sleeps[i - 1]);
        }
    }
    RetryPolicy policy{5, 500, 30'000};
    CHECK(backoff_delay_ms(policy, 1, 0, 1.0) == 500);
    CHECK(backoff_delay_ms(policy, 2, 0, 0.0) == 500);
    CHECK(backoff_delay_ms(policy, 3, 0, 1.0) == 2000);
    CHECK(backoff_delay_ms(policy, 20, 0, 1.0) == 30'000);
}

TEST_CASE("property: rate limiter never exceeds r per 60 s window") {
    for (int rate : {1, 3, 7, 20}) {
        auto clock = std::make_shared<VirtualClock>();
        RateLimiter limiter(rate, clock);
        std::vector<std::int64_t> dispatched;
        std::mt19937_64 rng(rate);
        for (int i = 0; i < 5 * rate + 3; ++i) {
            clock->advance(static_cast<std::int64_t>(rng() % 9000));
            limiter.acquire();
            dispatched.push_back(clock->now_ms());
        }
        for (std::size_t i = 0; i < dispatched.size(); ++i) {
            auto in_window = std::count_if(dispatched.begin(), dispatched.end(), [&](std::int64_t t) {
                return t >= dispatched[i] && t < dispatched[i] + 60'000;
            });
            CHECK(in_window <= rate);
        }
    }
}

TEST_CASE("cache_key: determinism and field sensitivity") {
    auto spec = mock_fixed("b", "x");
    auto base = ChatRequest("m", {{Role::system, "s"}, {Role::user, "q"}}, 0.0, 100, 7);
    CHECK(cache_key(spec, base) == cache_key(spec, base));
    CHECK(cache_key(spec, base).size() == 64);
    CHECK(cache_key(spec, base) != cache_key(spec, ChatRequest("m", base.messages(), 0.7, 100, 7)));
    auto swapped = ChatRequest("m", {{Role::assistant, "s"}, {Role::user, "q"}}, 0.0, 100, 7);
    CHECK(cache_key(spec, base) != cache_key(spec, swapped));
}

TEST_CASE("property: cache_key has no collisions under single-field perturbations") {
    std::mt19937_64 rng(42);
    auto random_text = [&] {
        std::string s;
        for (int i = 0, n = static_cast<int>(rng() % 12); i < n; ++i) s.push_back("ab \n{}\"\\1"[rng() % 10]);
        return s;
    };
    std::set<std::string> digests;
    std::size_t produced = 0;
    for (int pair = 0; pair < 1200; ++pair) {
        std::vector<Message> messages;
        for (int i = 0, n = 1 + static_cast<int>(rng() % 3); i < n; ++i)
            messages.push_back({static_cast<Role>(rng() % 3), random_text()});
        messages.back().role = Role::user;
        BackendSpec spec = mock_fixed("backend-" + std::to_string(pair), "x");
        ChatRequest base("model-" + std::to_string(pair), messages, static_cast<double>(rng() % 20) / 10.0,
                         1 + static_cast<int>(rng() % 4000), pair % 2 ? std::optional<std::int64_t>(pair) : std::nullopt);
        std::vector<std::pair<BackendSpec, ChatRequest>> variants;
        variants.emplace_back(spec, base);
        auto other_spec = spec;
        other_spec.backend_id += "'";
        variants.emplace_back(other_spec, base);
        variants.emplace_back(spec, ChatRequest(base.model_id() + "x", messages, base.temperature(), base.max_tokens(), base.seed()));
        auto m2 = messages;
        m2.front().text += "!";
        variants.emplace_back(spec, ChatRequest(base.model_id(), m2, base.temperature(), base.max_tokens(), base.seed()));
        if (messages.size() > 1) {
            auto m3 = messages;
            m3.front().role = m3.front().role == Role::system ? Role::assistant : Role::system;
            variants.emplace_back(spec, ChatRequest(base.model_id(), m3, base.temperature(), base.max_tokens(), base.seed()));
        }
        auto m4 = messages;
        m4.push_back({Role::user, ""});
        variants.emplace_back(spec, ChatRequest(base.model_id(), m4, base.temperature(), base.max_tokens(), base.seed()));
        variants.emplace_back(spec, ChatRequest(base.model_id(), messages, base.temperature() + 0.05, base.max_tokens(), base.seed()));
        variants.emplace_back(spec, ChatRequest(base.model_id(), messages, base.temperature(), base.max_tokens() % 4000 + 1, base.seed()));
        variants.emplace_back(spec, ChatRequest(base.model_id(), messages, base.temperature(), base.max_tokens(),
                                                base.seed() ? std::nullopt : std::optional<std::int64_t>(0)));
        for (const auto& [s, r] : variants) {
            digests.insert(cache_key(s, r));
            ++produced;
        }
    }
    CHECK(produced > 10'000);
    CHECK(digests.size() == produced);
}

TEST_CASE("cached_complete: hit, miss and corruption") {
    TempDir dir;
    auto rt = test_runtime();
    auto backend = make_backend(mock_fixed("c", "the answer is \\boxed{9}"), rt);

    auto first = cached_complete(*backend, simple_request(), dir.path);
    CHECK_FALSE(first.cached);
    CHECK(rt->recorder->count() == 1);

    auto second = cached_complete(*backend, simple_request(), dir.path);
    CHECK(second.cached);
    CHECK(second.text == first.text);
    CHECK(rt->recorder->count() == 1);

    auto perturbed = cached_complete(*backend, simple_request("What is 2+2?", 0.3), dir.path);
    CHECK_FALSE(perturbed.cached);
    CHECK(rt->recorder->count() == 2);

    // Truncate the stored entry: the corrupt path logs and refetches.
    auto entry = dir.path / (cache_key(backend->spec(), simple_request()) + ".json");
    REQUIRE(fs::exists(entry));
    std::string content = debate::util::read_file(entry);
    {
        std::ofstream out(entry, std::ios::trunc);
        out << content.substr(0, content.size() / 2);
    }
    std::vector<std::string> warnings;
    auto previous = debate::util::set_log_sink([&](std::string_view, std::string_view m) { warnings.emplace_back(m); });
    auto refetched = cached_complete(*backend, simple_request(), dir.path);
    debate::util::set_log_sink(previous);
    CHECK_FALSE(refetched.cached);
    CHECK(refetched.text == first.text);
    CHECK(rt->recorder->count() == 3);
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("CacheCorrupt") != std::string::npos);

    // The rewritten entry is valid again.
    CHECK(cached_complete(*backend, simple_request(), dir.path).cached);
    CHECK(rt->recorder->count() == 3);
}

TEST_CASE("wire: OpenAI-compatible encoding") {
    auto spec = remote_spec();
    spec.endpoint_url = "https://api.example.com/v1/";
    ChatRequest request("gpt-x", {{Role::system, "be brief"}, {Role::user, "hi"}}, 0.5, 64, 3);
    auto http = encode_openai_request(spec, request, "key");
    CHECK(http.url == "https://api.example.com/v1/chat/completions");
    auto body = nlohmann::json::parse(http.body);
    CHECK(body["model"] == "gpt-x");
    CHECK(body["messages"][0]["role"] == "system");
    CHECK(body["messages"][1]["content"] == "hi");
    CHECK(body["temperature"] == 0.5);
    CHECK(body["max_tokens"] == 64);
    CHECK(body["seed"] == 3);

    CHECK(decode_openai_response(kOpenAiOk).text == "A: \\boxed{4}");
    CHECK_THROWS_AS(decode_openai_response("not json"), debate::MalformedProviderResponse);
    CHECK_THROWS_AS(decode_openai_response(R"({"choices":[{"message":{"content":null}}]})"),
                    debate::MalformedProviderResponse);
    auto no_usage = decode_openai_response(R"({"choices":[{"message":{"content":"x"}}]})");
    CHECK(no_usage.usage == Usage{});
}

TEST_CASE("wire: Gemini-style encoding") {
    auto spec = remote_spec(BackendKind::gemini);
    spec.endpoint_url = "https://generativelanguage.example/v1beta";
    ChatRequest request("gemini-pro", {{Role::system, "sys"}, {Role::user, "q1"}, {Role::assistant, "a1"}, {Role::user, "q2"}},
                        1.0, 128);
    auto http = encode_gemini_request(spec, request, "key");
    CHECK(http.url == "https://generativelanguage.example/v1beta/models/gemini-pro:generateContent");
    auto body = nlohmann::json::parse(http.body);
    CHECK(body["systemInstruction"]["parts"][0]["text"] == "sys");
    REQUIRE(body["contents"].size() == 3);
    CHECK(body["contents"][1]["role"] == "model");
    CHECK(body["generationConfig"]["maxOutputTokens"] == 128);
    CHECK_FALSE(body["generationConfig"].contains("seed"));

    auto c = decode_gemini_response(
        R"({"candidates":[{"content":{"parts":[{"text":"part one "},{"text":"\\boxed{2}"}]}}],
            "usageMetadata":{"promptTokenCount":3,"candidatesTokenCount":4}})");
    CHECK(c.text == "part one \\boxed{2}");
    CHECK(c.usage == Usage{3, 4});
    CHECK_THROWS_AS(decode_gemini_response(R"({"candidates":[]})"), debate::MalformedProviderResponse);
}
