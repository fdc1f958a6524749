#include "debate/harness.hpp"
#include "debate/serialization.hpp"
#include "debate/util.hpp"

#include "support/oracles.hpp"
#include "support/panels.hpp"
#include "support/scenarios.hpp"

#include "doctest.h"

#include <filesystem>
#include <map>
#include <random>

using namespace debate;
using namespace debate::harness;
using namespace debate::testing;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("debate_harness_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

/// Relative path -> contents for every file under dir.
std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) out[fs::relative(e.path(), dir).generic_string()] = util::read_file(e.path());
    return out;
}

std::size_t debater_calls(const backends::CallRecorder& rec) { return rec.count() - rec.count("mock-summarizer"); }

} // namespace

TEST_CASE("oracle scenario: curve equals the hand-computed table and the recount") {
    auto dir = fresh_dir("oracle");
    auto rt = offline_runtime();
    auto a = run_problems(oracle_config(dir, "oracle"), oracle_problems(), rt);
    CHECK(a.status == RunStatus::complete);
    REQUIRE(a.transcripts.size() == 50);
    REQUIRE(a.curve.rounds == 4);
    const char* views[] = {"agent0", "agent1", "agent2", "mode", "summary"};
    for (int r = 0; r <= 4; ++r)
        for (int v = 0; v < 5; ++v) {
            CAPTURE(r);
            CAPTURE(views[v]);
            CHECK(a.curve.at(r, views[v]).correct == static_cast<std::size_t>(kOracleCurve[r][v]));
            CHECK(a.curve.at(r, views[v]).total == 50u);
        }
    CHECK(curve_to_csv(a.curve) == oracle_csv());
    for (const auto& [key, count] : recount_curve(a.transcripts)) CHECK(a.curve.at(key.first, key.second).correct == count);
    CHECK(debater_calls(*rt->recorder) == 50u * 3u * 5u);
    CHECK(rt->recorder->count("mock-summarizer") == 50u * 4u);
    for (std::size_t k = 0; k < a.transcripts.size(); ++k) CHECK(a.transcripts[k].question_id == a.question_ids[k]);
}

TEST_CASE("per_round_accuracy: direct counts and empty input") {
    auto t = run_debate(make_problem("x", "Q", "4"),
                        scripted_panel({{boxed("4")}, {boxed("9")}, {boxed("4")}}, 0), offline_runtime());
    std::vector<protocol::DebateTranscript> one = {t};
    auto c = per_round_accuracy(one);
    CHECK(c.at(0, "agent0").correct == 1);
    CHECK(c.at(0, "agent1").correct == 0);
    CHECK(c.at(0, "agent2").correct == 1);
    CHECK(c.at(0, "mode").correct == 1);
    CHECK(c.at(0, "summary").correct == 0);

    auto empty = per_round_accuracy({});
    CHECK(empty.total() == 0);
    CHECK(empty.points.empty());
    CHECK(curve_to_csv(empty) == std::string(kCurveCsvHeader));
}

TEST_CASE("per_round_accuracy: OpenMP kernel equals serial reference and recount on random sets") {
    std::mt19937_64 rng(99);
    const char* pool[] = {"1", "2", "3", "1/2", "0.5", "x", "I don't know"};
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<protocol::DebateTranscript> ts;
        int agents = 2 + static_cast<int>(rng() % 3);
        int rounds = static_cast<int>(rng() % 3);
        for (int q = 0; q < 10; ++q) {
            std::vector<std::vector<std::string>> scripts(agents);
            for (auto& s : scripts)
                for (int r = 0; r <= rounds; ++r) {
                    std::string ans = pool[rng() % 7];
                    s.push_back(ans == "I don't know" ? ans : boxed(ans));
                }
            auto panel = scripted_panel(scripts, rounds, protocol::FinalPolicy::mode, pool[rng() % 3]);
            ts.push_back(run_debate(make_problem("r" + std::to_string(q), "Q", pool[rng() % 4]), panel,
                                    offline_runtime(), {std::nullopt, false}));
        }
        auto par = per_round_accuracy(ts);
        CHECK(par == per_round_accuracy_serial(ts));
        for (const auto& [key, count] : recount_curve(ts)) CHECK(par.at(key.first, key.second).correct == count);
    }
}

TEST_CASE("per_round_accuracy: gold map and inconsistent rounds") {
    auto rt = offline_runtime();
    auto a = run_debate(make_problem("a", "Q", "4"), constant_panel(2, 1, "4"), rt);
    auto b = run_debate(make_problem("b", "Q", "4"), constant_panel(2, 2, "4"), rt);
    std::vector<protocol::DebateTranscript> mixed = {a, b};
    CHECK_THROWS_AS(per_round_accuracy(mixed), InconsistentRounds);
    CHECK_THROWS_AS(per_round_accuracy_serial(mixed), InconsistentRounds);

    std::vector<protocol::DebateTranscript> just_a = {a};
    GoldMap gold = {{"a", grading::normalize("5")}};
    CHECK(per_round_accuracy(just_a, &gold).at(0, "mode").correct == 0);
    GoldMap none;
    CHECK_THROWS_AS(per_round_accuracy(just_a, &none), GoldLookupFailure);
}

TEST_CASE("unanimous panel scores 1.0 everywhere; R = 0 makes no summarizer calls") {
    auto dir = fresh_dir("unanimous");
    std::vector<Problem> problems;
    for (int q = 0; q < 6; ++q) problems.push_back(make_problem("u" + std::to_string(q), "Q", "12"));
    ExperimentConfig c;
    c.run_id = "u";
    c.output_dir = dir;
    c.panel = constant_panel(3, 3, "12", protocol::FinalPolicy::summary);
    auto a = run_problems(c, problems, offline_runtime());
    for (const auto& p : a.curve.points) CHECK(p.accuracy() == 1.0);

    auto rt = offline_runtime();
    c.run_id = "baseline";
    c.panel = constant_panel(3, 0, "12");
    auto b = run_problems(c, problems, rt);
    CHECK(rt->recorder->count("mock-summarizer") == 0);
    CHECK(b.curve.rounds == 0);
    CHECK(b.curve.at(0, "summary").correct == 0);
    for (const auto& t : b.transcripts) CHECK(t.rounds.size() == 1);
}

TEST_CASE("cost summary: call accounting and recount over persisted files") {
    auto dir = fresh_dir("cost");
    std::vector<Problem> problems;
    for (int q = 0; q < 10; ++q) problems.push_back(make_problem("c" + std::to_string(q), "Q", "4"));
    ExperimentConfig c;
    c.run_id = "cost";
    c.output_dir = dir;
    c.panel = constant_panel(3, 2, "4");
    auto a = run_problems(c, problems, offline_runtime());
    std::size_t debater = 0;
    for (const auto& [id, cost] : a.cost.per_backend)
        if (id != "mock-summarizer") debater += cost.calls;
    CHECK(debater == 90u);
    CHECK(a.cost.per_backend.at("mock-summarizer").calls == 20u);
    CHECK(a.cost.total.calls == 110u);

    std::int64_t prompt = 0, completion = 0;
    for (const auto& e : fs::directory_iterator(c.run_dir() / "transcripts")) {
        auto j = serialization::Json::parse(util::read_file(e.path()));
        for (const auto& r : j["rounds"]) {
            for (const auto& t : r["turns"]) {
                prompt += t["usage"]["prompt_tokens"].get<std::int64_t>();
                completion += t["usage"]["completion_tokens"].get<std::int64_t>();
            }
            prompt += r["summary_usage"]["prompt_tokens"].get<std::int64_t>();
            completion += r["summary_usage"]["completion_tokens"].get<std::int64_t>();
        }
    }
    CHECK(a.cost.total.prompt_tokens == prompt);
    CHECK(a.cost.total.completion_tokens == completion);
    CHECK(prompt > 0);

    RunArtifacts empty;
    CHECK(cost_summary(empty) == CostReport{});
}

TEST_CASE("determinism: repeated runs and parallelism 1 vs 8 give identical files") {
    auto base = fresh_dir("determinism");
    run_problems(oracle_config(base / "p1", "run", 1), oracle_problems(), offline_runtime());
    run_problems(oracle_config(base / "p8", "run", 8), oracle_problems(), offline_runtime());
    run_problems(oracle_config(base / "again", "run", 8), oracle_problems(), offline_runtime());
    auto s1 = snapshot(base / "p1");
    CHECK(s1.size() == 54);
    CHECK(s1 == snapshot(base / "p8"));
    CHECK(s1 == snapshot(base / "again"));
}

TEST_CASE("resume: interrupted run finishes with exactly the remaining debates") {
    auto base = fresh_dir("resume");
    run_problems(oracle_config(base / "full", "run"), oracle_problems(), offline_runtime());

    auto cfg = oracle_config(base / "cut", "run", 1);
    int completed = 0;
    RunHooks hooks;
    hooks.cancelled = [&] { return completed >= 10; };
    hooks.on_question_done = [&](const std::string&, bool) { ++completed; };
    auto first = run_problems(cfg, oracle_problems(), offline_runtime(), hooks);
    CHECK(first.status == RunStatus::partial);
    CHECK(first.transcripts.size() == 10);
    CHECK(first.pending.size() == 40);
    CHECK(load_artifacts(cfg.run_dir()).pending.size() == 40);

    CHECK_THROWS_AS(run_problems(cfg, oracle_problems(), offline_runtime()), InvalidArgument);

    auto rt = offline_runtime();
    cfg.max_parallel_questions = 4;
    auto second = run_problems(cfg, oracle_problems(), rt, {}, true);
    CHECK(second.status == RunStatus::complete);
    CHECK(debater_calls(*rt->recorder) == 40u * 3u * 5u);
    CHECK(snapshot(base / "cut") == snapshot(base / "full"));

    auto rt2 = offline_runtime();
    auto third = run_problems(cfg, oracle_problems(), rt2, {}, true);
    CHECK(rt2->recorder->count() == 0);
    CHECK(third == second);
    CHECK(snapshot(base / "cut") == snapshot(base / "full"));

    auto changed = cfg;
    changed.panel.rounds = 3;
    CHECK_THROWS_AS(run_problems(changed, oracle_problems(), offline_runtime(), {}, true), ConfigMismatch);
}

TEST_CASE("partial run: failures recorded, partial transcript written, then resumed") {
    auto dir = fresh_dir("partial");
    std::vector<Problem> problems;
    for (int q = 0; q < 4; ++q) problems.push_back(make_problem("p" + std::to_string(q), "Q", "4"));
    ExperimentConfig c;
    c.run_id = "partial";
    c.output_dir = dir;
    c.panel = constant_panel(2, 1, "4");
    c.panel.debaters[1].backend.faults = {401};
    auto a = run_problems(c, problems, offline_runtime());
    CHECK(a.status == RunStatus::partial);
    CHECK(a.failures.size() == 4);
    CHECK(a.transcripts.empty());
    CHECK(a.curve.total() == 0);
    auto t = serialization::transcript_from_json(
        serialization::Json::parse(util::read_file(c.run_dir() / "transcripts" / "p0.json")));
    CHECK(t.status == protocol::TranscriptStatus::incomplete);
    auto loaded = load_artifacts(c.run_dir());
    CHECK(loaded.failures == a.failures);
    CHECK(loaded.status == RunStatus::partial);
}

TEST_CASE("persistence: saved artifacts reload to an equal value") {
    auto dir = fresh_dir("persist");
    auto cfg = oracle_config(dir, "persist");
    cfg.max_parallel_questions = kDefaultMaxParallelQuestions;
    auto a = run_problems(cfg, oracle_problems(), offline_runtime());
    auto b = load_artifacts(cfg.run_dir());
    CHECK(b == a);

    auto copy = dir / "copy";
    save_artifacts(b, copy / "persist");
    auto s1 = snapshot(cfg.run_dir());
    auto s2 = snapshot(copy / "persist");
    CHECK(s1 == s2);

    CHECK_THROWS_AS(load_artifacts(dir / "nothing"), MissingIndex);
    util::write_file_atomic(cfg.run_dir() / "transcripts" / "q03.json", "{ not json");
    CHECK_THROWS_AS(load_artifacts(cfg.run_dir()), CorruptTranscript);
}

TEST_CASE("config validation and fingerprint scope") {
    ExperimentConfig c = oracle_config("/tmp", "ok");
    CHECK_NOTHROW(c.validate());
    auto fp = c.fingerprint();
    c.max_parallel_questions = 1;
    c.output_dir = "/elsewhere";
    c.cache_dir = "/cache";
    c.dataset.path = "/data/moved";
    CHECK(c.fingerprint() == fp);
    c.sample = SampleSpec{5, 1};
    CHECK(c.fingerprint() != fp);
    c.run_id = "../escape";
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    CHECK_FALSE(is_safe_run_id(""));
    CHECK_FALSE(is_safe_run_id(".."));
    CHECK(is_safe_run_id("gsm8k-diverse_r4.v2"));
}

TEST_CASE("sampled run uses the sampled order") {
    auto dir = fresh_dir("sampled");
    auto cfg = oracle_config(dir, "s");
    cfg.sample = SampleSpec{7, 3};
    auto a = run_problems(cfg, oracle_problems(), offline_runtime());
    auto expected = datasets::sample(oracle_problems(), 7, 3);
    REQUIRE(a.question_ids.size() == 7);
    for (std::size_t k = 0; k < 7; ++k) CHECK(a.question_ids[k] == expected[k].question_id);
}

TEST_CASE("table rendering") {
    auto dir = fresh_dir("table");
    auto a = run_problems(oracle_config(dir, "t"), oracle_problems(), offline_runtime());
    auto table = curve_to_table(a.curve);
    CHECK(table.find("round") == 0);
    CHECK(table.find("0.300 (15/50)") != std::string::npos);
    CHECK(curve_to_table(a.curve, {"mode"}).find("agent0") == std::string::npos);
}
