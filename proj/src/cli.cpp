#include "debate/cli.hpp"

#include "debate/datasets.hpp"
#include "debate/errors.hpp"
#include "debate/serialization.hpp"
#include "debate/util.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#ifndef DEBATE_DATA_DIR
#define DEBATE_DATA_DIR "data"
#endif

namespace debate::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// --- strict config parsing -----------------------------------------------

namespace {

class Node {
public:
    Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {}

    const std::string& path() const { return path_; }
    const json& raw() const { return j_; }

    void expect_object(std::initializer_list<std::string_view> allowed) const {
        if (!j_.is_object()) throw ConfigKeyError(path_or_root(), "expected an object");
        for (const auto& [key, _] : j_.items())
            if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
                throw ConfigKeyError(child_path(key), "unknown key");
    }

    bool has(const std::string& key) const { return j_.contains(key) && !j_[key].is_null(); }

    Node child(const std::string& key) const {
        if (!has(key)) throw ConfigKeyError(child_path(key), "required key is missing");
        return Node(j_[key], child_path(key));
    }

    std::vector<Node> array(const std::string& key) const {
        Node c = child(key);
        if (!c.j_.is_array()) throw ConfigKeyError(c.path_, "expected an array");
        std::vector<Node> out;
        for (std::size_t i = 0; i < c.j_.size(); ++i) out.emplace_back(c.j_[i], c.path_ + "[" + std::to_string(i) + "]");
        return out;
    }

    std::string str(const std::string& key) const {
        Node c = child(key);
        if (!c.j_.is_string()) throw ConfigKeyError(c.path_, "expected a string");
        return c.j_.get<std::string>();
    }
    std::string str(const std::string& key, std::string fallback) const { return has(key) ? str(key) : fallback; }

    std::int64_t integer(const std::string& key) const {
        Node c = child(key);
        if (!c.j_.is_number_integer()) throw ConfigKeyError(c.path_, "expected an integer");
        return c.j_.get<std::int64_t>();
    }
    std::int64_t integer(const std::string& key, std::int64_t fallback) const {
        return has(key) ? integer(key) : fallback;
    }

    std::uint64_t unsigned_integer(const std::string& key) const {
        Node c = child(key);
        if (!c.j_.is_number_unsigned()) throw ConfigKeyError(c.path_, "expected a non-negative integer");
        return c.j_.get<std::uint64_t>();
    }

    double number(const std::string& key, double fallback) const {
        if (!has(key)) return fallback;
        Node c = child(key);
        if (!c.j_.is_number()) throw ConfigKeyError(c.path_, "expected a number");
        return c.j_.get<double>();
    }

    std::vector<std::string> strings(const std::string& key) const {
        std::vector<std::string> out;
        if (!has(key)) return out;
        for (const auto& n : array(key)) {
            if (!n.j_.is_string()) throw ConfigKeyError(n.path_, "expected a string");
            out.push_back(n.j_.get<std::string>());
        }
        return out;
    }

    std::vector<std::int64_t> integers(const std::string& key) const {
        std::vector<std::int64_t> out;
        if (!has(key)) return out;
        for (const auto& n : array(key)) {
            if (!n.j_.is_number_integer()) throw ConfigKeyError(n.path_, "expected an integer");
            out.push_back(n.j_.get<std::int64_t>());
        }
        return out;
    }

    template <typename Enum, typename Parse>
    Enum enumeration(const std::string& key, Enum fallback, Parse parse) const {
        if (!has(key)) return fallback;
        auto name = str(key);
        auto v = parse(name);
        if (!v) throw ConfigKeyError(child_path(key), "unknown value '" + name + "'");
        return *v;
    }

private:
    std::string path_or_root() const { return path_.empty() ? "<root>" : path_; }
    std::string child_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const json& j_;
    std::string path_;
};

fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : (base / path).lexically_normal();
}

backends::BackendSpec parse_backend(const Node& n) {
    n.expect_object({"id", "kind", "endpoint_url", "credential_env_var", "rate_limit", "retry", "script", "text",
                     "faults"});
    backends::BackendSpec spec;
    spec.backend_id = n.str("id");
    spec.kind = n.enumeration("kind", backends::BackendKind::mock_fixed, backends::backend_kind_from_string);
    if (!n.has("kind")) throw ConfigKeyError(n.path() + ".kind", "required key is missing");
    spec.rate_limit = static_cast<int>(
        n.integer("rate_limit", spec.is_remote() ? backends::kDefaultRemoteRateLimit : backends::kDefaultMockRateLimit));
    if (spec.is_remote()) {
        for (const char* key : {"script", "text", "faults"})
            if (n.has(key)) throw ConfigKeyError(n.path() + "." + key, "only valid for mock backends");
        spec.endpoint_url = n.str("endpoint_url");
        spec.credential_env_var = n.str("credential_env_var");
    } else {
        for (const char* key : {"endpoint_url", "credential_env_var"})
            if (n.has(key)) throw ConfigKeyError(n.path() + "." + key, "only valid for remote backends");
        spec.script = n.strings("script");
        if (n.has("text")) {
            if (n.has("script")) throw ConfigKeyError(n.path() + ".text", "give either 'text' or 'script'");
            spec.script = {n.str("text")};
        }
        for (auto f : n.integers("faults")) spec.faults.push_back(static_cast<int>(f));
    }
    if (n.has("retry")) {
        Node r = n.child("retry");
        r.expect_object({"max_attempts", "base_backoff_ms", "max_backoff_ms"});
        spec.retry.max_attempts = static_cast<int>(r.integer("max_attempts", spec.retry.max_attempts));
        spec.retry.base_backoff_ms = r.integer("base_backoff_ms", spec.retry.base_backoff_ms);
        spec.retry.max_backoff_ms = r.integer("max_backoff_ms", spec.retry.max_backoff_ms);
    }
    try {
        spec.validate();
    } catch (const Error& e) {
        throw ConfigKeyError(n.path(), e.what());
    }
    return spec;
}

protocol::AgentSpec parse_agent(const Node& n, const std::map<std::string, backends::BackendSpec>& backends,
                                int index, std::string default_name, double default_temperature) {
    n.expect_object({"backend", "model_id", "display_name", "temperature", "max_tokens", "seed"});
    protocol::AgentSpec a;
    a.agent_index = index;
    auto id = n.str("backend");
    auto it = backends.find(id);
    if (it == backends.end()) throw ConfigKeyError(n.path() + ".backend", "unknown backend '" + id + "'");
    a.backend = it->second;
    a.model_id = n.str("model_id", id);
    a.display_name = n.str("display_name", std::move(default_name));
    a.temperature = n.number("temperature", default_temperature);
    if (a.temperature < 0 || a.temperature > backends::kMaxTemperature)
        throw ConfigKeyError(n.path() + ".temperature", "must be within [0, 2]");
    a.max_tokens = static_cast<int>(n.integer("max_tokens", protocol::kDefaultMaxTokens));
    if (a.max_tokens < 1 || a.max_tokens > backends::kMaxTokensLimit)
        throw ConfigKeyError(n.path() + ".max_tokens", "must be within [1, 32768]");
    if (n.has("seed")) a.seed = n.integer("seed");
    return a;
}

} // namespace

harness::ExperimentConfig parse_config(const std::string& text, const fs::path& base_dir) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    Node root(doc, "");
    root.expect_object({"run_id", "output_dir", "cache_dir", "max_parallel_questions", "dataset", "sample", "limit",
                        "protocol", "backends", "debaters", "summarizer"});

    harness::ExperimentConfig c;
    c.run_id = root.str("run_id");
    c.output_dir = resolve(base_dir, root.str("output_dir", "runs"));
    if (root.has("cache_dir")) c.cache_dir = resolve(base_dir, root.str("cache_dir"));
    c.max_parallel_questions =
        static_cast<int>(root.integer("max_parallel_questions", harness::kDefaultMaxParallelQuestions));
    if (c.max_parallel_questions < 1) throw ConfigKeyError("max_parallel_questions", "must be >= 1");

    Node d = root.child("dataset");
    d.expect_object({"name", "path", "split", "subjects", "levels"});
    if (!d.has("name")) throw ConfigKeyError("dataset.name", "required key is missing");
    c.dataset.name = d.enumeration("name", DatasetName::gsm8k, dataset_name_from_string);
    c.dataset.path = resolve(base_dir, d.str("path"));
    c.dataset.split = d.enumeration("split", datasets::Split::test, datasets::split_from_string);
    for (auto& s : d.strings("subjects")) c.dataset.subjects.insert(s);
    for (auto l : d.integers("levels")) c.dataset.levels.insert(static_cast<int>(l));

    if (root.has("sample")) {
        Node s = root.child("sample");
        s.expect_object({"n", "seed"});
        c.sample = harness::SampleSpec{s.unsigned_integer("n"), s.has("seed") ? s.unsigned_integer("seed") : 0};
    }
    if (root.has("limit")) c.limit = root.unsigned_integer("limit");

    std::string prompts_dir;
    if (root.has("protocol")) {
        Node p = root.child("protocol");
        p.expect_object({"rounds", "cot_mode", "final_policy", "agent_memory", "prompts_dir"});
        c.panel.rounds = static_cast<int>(p.integer("rounds", protocol::kDefaultRounds));
        if (c.panel.rounds < 0) throw ConfigKeyError("protocol.rounds", "must be >= 0");
        c.panel.cot_mode = p.enumeration("cot_mode", protocol::CotMode::none, protocol::cot_mode_from_string);
        c.panel.final_policy =
            p.enumeration("final_policy", protocol::FinalPolicy::mode, protocol::final_policy_from_string);
        c.panel.memory =
            p.enumeration("agent_memory", protocol::AgentMemory::accumulate, protocol::agent_memory_from_string);
        if (p.has("prompts_dir")) {
            try {
                c.panel.prompts = protocol::PromptTemplates::load(resolve(base_dir, p.str("prompts_dir")));
            } catch (const Error& e) {
                throw ConfigKeyError("protocol.prompts_dir", e.what());
            }
        }
    }

    std::map<std::string, backends::BackendSpec> backends;
    for (const auto& b : root.array("backends")) {
        auto spec = parse_backend(b);
        if (!backends.emplace(spec.backend_id, spec).second)
            throw ConfigKeyError(b.path() + ".id", "duplicate backend id '" + spec.backend_id + "'");
    }
    auto debaters = root.array("debaters");
    for (std::size_t i = 0; i < debaters.size(); ++i) {
        std::string name = std::string("Agent ") + static_cast<char>('A' + static_cast<int>(i % 26));
        c.panel.debaters.push_back(
            parse_agent(debaters[i], backends, static_cast<int>(i), name, protocol::kDefaultDebaterTemperature));
    }
    c.panel.summarizer =
        parse_agent(root.child("summarizer"), backends, 0, "Summarizer", protocol::kDefaultSummarizerTemperature);

    try {
        c.validate();
    } catch (const Error& e) {
        throw ConfigError(std::string("invalid configuration: ") + e.what());
    }
    return c;
}

harness::ExperimentConfig load_config(const fs::path& file) {
    return parse_config(util::read_file(file), fs::absolute(file).parent_path());
}

std::vector<std::string> missing_credentials(const protocol::PanelConfig& panel,
                                             const std::function<std::optional<std::string>(const std::string&)>& getenv) {
    std::set<std::string> out;
    auto check = [&](const protocol::AgentSpec& a) {
        if (!a.backend.is_remote()) return;
        auto v = getenv(a.backend.credential_env_var);
        if (!v || v->empty()) out.insert(a.backend.credential_env_var);
    };
    for (const auto& d : panel.debaters) check(d);
    check(panel.summarizer);
    return {out.begin(), out.end()};
}

// --- rendering -----------------------------------------------------------

namespace {

std::string show(const std::optional<grading::CanonicalAnswer>& a) { return a ? a->canonical : "(none)"; }

std::string indent(const std::string& text, const std::string& pad) {
    std::string out = pad;
    for (char c : text) {
        out += c;
        if (c == '\n') out += pad;
    }
    return out;
}

} // namespace

std::string render_inspect(const protocol::DebateTranscript& t, std::optional<int> round, bool full) {
    std::ostringstream os;
    os << "Question " << t.question_id << " (" << protocol::to_string(t.status) << ")\n";
    os << t.question_text << "\n";
    os << "Gold: " << t.gold.canonical << "\n";
    std::size_t width = 8;
    for (const auto& r : t.rounds)
        for (const auto& turn : r.turns) width = std::max(width, turn.display_name.size() + 1);
    for (const auto& r : t.rounds) {
        if (round && r.round_index != *round) continue;
        os << "\nRound " << r.round_index << (r.round_index == 0 ? " (baseline)" : "") << "\n";
        std::vector<std::optional<grading::CanonicalAnswer>> answers;
        for (const auto& turn : r.turns) {
            auto a = grading::extract_answer(turn.response);
            answers.push_back(a);
            os << "  " << std::left << std::setw(static_cast<int>(width)) << turn.display_name << show(a) << "\n";
            if (full) os << indent(turn.response, "      | ") << "\n";
        }
        os << "  " << std::left << std::setw(static_cast<int>(width)) << "mode" << show(grading::mode(answers)) << "\n";
        if (!r.summary.empty()) {
            os << "  " << std::left << std::setw(static_cast<int>(width)) << "summary"
               << show(grading::extract_answer(r.summary)) << "\n";
            if (full) os << indent(r.summary, "      | ") << "\n";
        }
    }
    if (!round) {
        if (t.status == protocol::TranscriptStatus::complete)
            os << "\nFinal answer (" << protocol::to_string(t.final.policy) << ", round " << t.final.source_round
               << "): " << show(t.final.answer) << "\n";
        else
            os << "\nIncomplete: " << t.failure << "\n";
    }
    return os.str();
}

// --- commands ------------------------------------------------------------

namespace {

struct RunOptions {
    std::string config;
    std::optional<int> rounds;
    std::optional<std::size_t> limit;
    std::optional<std::uint64_t> seed;
    std::string dataset;
    std::string out;
    bool resume = false;
    bool check = false;
};

void print_config_summary(const harness::ExperimentConfig& c, std::ostream& out,
                          const std::function<std::optional<std::string>(const std::string&)>& getenv) {
    out << "run_id: " << c.run_id << "\n";
    out << "fingerprint: " << c.fingerprint() << "\n";
    out << "dataset: " << to_string(c.dataset.name) << " " << c.dataset.path.string() << " ("
        << datasets::to_string(c.dataset.split) << ")\n";
    if (c.sample) out << "sample: n=" << c.sample->n << " seed=" << c.sample->seed << "\n";
    if (c.limit) out << "limit: " << *c.limit << "\n";
    out << "rounds: " << c.panel.rounds << ", cot: " << protocol::to_string(c.panel.cot_mode)
        << ", final policy: " << protocol::to_string(c.panel.final_policy)
        << ", memory: " << protocol::to_string(c.panel.memory) << "\n";
    auto agent_line = [&](const char* role, const protocol::AgentSpec& a) {
        out << "  " << role << " " << a.display_name << ": " << a.backend.backend_id << " ("
            << backends::to_string(a.backend.kind) << ") model=" << a.model_id << " temperature=" << a.temperature;
        if (a.backend.is_remote()) {
            auto v = getenv(a.backend.credential_env_var);
            out << " credential=$" << a.backend.credential_env_var << (v && !v->empty() ? " [set]" : " [unset]");
        }
        out << "\n";
    };
    for (const auto& d : c.panel.debaters) agent_line("debater", d);
    agent_line("summarizer", c.panel.summarizer);
    out << "output: " << c.run_dir().string() << "\n";
}

int cmd_run(const RunOptions& o, std::ostream& out, std::ostream& err, const Environment& env) {
    auto c = load_config(o.config);
    if (o.rounds) c.panel.rounds = *o.rounds;
    if (o.limit) c.limit = *o.limit;
    if (o.seed) {
        if (!c.sample) throw ConfigError("--seed needs a 'sample' section in the config");
        c.sample->seed = *o.seed;
    }
    if (!o.dataset.empty()) {
        auto eq = o.dataset.find('=');
        if (eq != std::string::npos) {
            auto name = dataset_name_from_string(o.dataset.substr(0, eq));
            if (!name) throw ConfigError("--dataset: unknown dataset '" + o.dataset.substr(0, eq) + "'");
            c.dataset.name = *name;
            c.dataset.path = fs::absolute(o.dataset.substr(eq + 1));
        } else {
            c.dataset.path = fs::absolute(o.dataset);
        }
    }
    if (!o.out.empty()) c.output_dir = fs::absolute(o.out);
    c.validate();

    auto runtime = env.make_runtime ? env.make_runtime() : std::make_shared<backends::Runtime>();
    auto missing = missing_credentials(c.panel, runtime->getenv);
    if (o.check) {
        print_config_summary(c, out, runtime->getenv);
        return missing.empty() ? kExitOk : kExitError;
    }
    if (!missing.empty()) {
        std::string names;
        for (const auto& m : missing) names += (names.empty() ? "" : ", ") + m;
        throw MissingCredential(names);
    }

    harness::RunHooks hooks;
    if (env.interrupted) hooks.cancelled = [flag = env.interrupted] { return flag->load(); };
    std::size_t finished = 0;
    hooks.on_question_done = [&](const std::string& id, bool ok) {
        ++finished;
        err << "[" << finished << "] " << id << (ok ? " done" : " FAILED") << "\n";
    };
    auto a = o.resume ? harness::resume(c, runtime, hooks) : harness::run_experiment(c, runtime, hooks);

    out << harness::curve_to_table(a.curve);
    out << "status: " << harness::to_string(a.status) << " (" << a.transcripts.size() << " complete, "
        << a.failures.size() << " failed, " << a.pending.size() << " pending)\n";
    for (const auto& f : a.failures) out << "failed " << f.question_id << ": " << f.cause << "\n";
    out << "artifacts: " << c.run_dir().string() << "\n";
    return a.status == harness::RunStatus::complete ? kExitOk : kExitPartial;
}

harness::AccuracyCurve stored_curve(const fs::path& run_dir, const harness::RunArtifacts& a) {
    if (fs::exists(run_dir / "curve.json")) return harness::curve_from_json_text(util::read_file(run_dir / "curve.json"));
    return a.curve;
}

int cmd_report(const std::string& run_dir, const std::string& format, const std::vector<std::string>& views,
               const std::string& output, std::ostream& out) {
    auto a = harness::load_artifacts(run_dir);
    auto curve = stored_curve(run_dir, a);
    for (const auto& v : views)
        if (std::find(curve.views.begin(), curve.views.end(), v) == curve.views.end())
            throw InvalidArgument("unknown view '" + v + "'");
    if (!views.empty()) {
        std::erase_if(curve.points, [&](const harness::CurvePoint& p) {
            return std::find(views.begin(), views.end(), p.view) == views.end();
        });
    }
    std::string text = format == "csv" ? harness::curve_to_csv(curve) : harness::curve_to_table(curve, views);
    if (output.empty())
        out << text;
    else
        util::write_file_atomic(output, text);
    return kExitOk;
}

int cmd_grade(const std::string& run_dir, const std::string& config_path, const std::string& out_dir,
              std::ostream& out, std::ostream& err) {
    auto a = harness::load_artifacts(run_dir);
    harness::GoldMap gold;
    if (!config_path.empty()) {
        auto c = load_config(config_path);
        for (const auto& p : datasets::load(c.dataset)) gold.emplace(p.question_id, p.gold_answer);
        std::vector<std::string> missing;
        for (const auto& t : a.transcripts)
            if (!gold.count(t.question_id)) missing.push_back(t.question_id);
        if (!missing.empty()) {
            for (const auto& id : missing) err << "gold lookup failure: " << id << "\n";
            return kExitError;
        }
    } else {
        for (const auto& t : a.transcripts) {
            try {
                gold.emplace(t.question_id, grading::normalize(t.gold.raw));
            } catch (const EmptyAnswer&) {
                gold.emplace(t.question_id, t.gold);
            }
        }
    }
    auto curve = harness::per_round_accuracy(a.transcripts, &gold);
    fs::path dest = out_dir.empty() ? fs::path(run_dir) : fs::path(out_dir);
    fs::create_directories(dest);
    util::write_file_atomic(dest / "curve.json", harness::curve_to_json_text(curve));
    util::write_file_atomic(dest / "curve.csv", harness::curve_to_csv(curve));
    out << harness::curve_to_table(curve);
    out << "graded " << a.transcripts.size() << " transcripts; curve written to " << (dest / "curve.json").string()
        << "\n";
    return kExitOk;
}

int cmd_inspect(const std::string& run_dir, const std::string& question_id, std::optional<int> round, bool full,
                std::ostream& out) {
    fs::path file = fs::path(run_dir) / "transcripts" / harness::transcript_file_name(question_id);
    if (!fs::exists(file)) throw UnknownQuestion(question_id);
    protocol::DebateTranscript t;
    try {
        t = serialization::transcript_from_json(serialization::Json::parse(util::read_file(file)));
    } catch (const nlohmann::json::exception& e) {
        throw harness::CorruptTranscript(file, e.what());
    } catch (const Error& e) {
        throw harness::CorruptTranscript(file, e.what());
    }
    if (t.question_id != question_id) throw UnknownQuestion(question_id);
    if (round && (*round < 0 || *round >= static_cast<int>(t.rounds.size())))
        throw InvalidArgument("round " + std::to_string(*round) + " is out of range");
    out << render_inspect(t, round, full);
    return kExitOk;
}

int cmd_verify(const std::string& manifest, const std::string& gsm8k, const std::string& asdiv,
               const std::string& math, std::ostream& out) {
    auto entries = datasets::load_manifest(manifest);
    auto opt = [](const std::string& s) -> std::optional<fs::path> {
        if (s.empty()) return std::nullopt;
        return fs::path(s);
    };
    auto checks = datasets::verify_manifest(entries, opt(gsm8k), opt(asdiv), opt(math));
    std::size_t verified = 0, failed = 0;
    for (const auto& c : checks) {
        bool configured = (c.entry.dataset == DatasetName::gsm8k && !gsm8k.empty()) ||
                          (c.entry.dataset == DatasetName::asdiv && !asdiv.empty()) ||
                          (c.entry.dataset == DatasetName::math && !math.empty());
        std::string tag = !configured ? "skip" : c.ok ? "ok" : "FAIL";
        if (configured) (c.ok ? verified : failed)++;
        out << std::left << std::setw(5) << tag << " " << std::setw(6) << to_string(c.entry.dataset) << " "
            << std::setw(12) << c.entry.relative_path;
        if (c.observed_count) out << " count=" << *c.observed_count;
        out << "  " << c.message << "\n";
    }
    if (verified == 0 && failed == 0) {
        out << "nothing verified: pass --gsm8k, --asdiv and/or --math\n";
        return kExitError;
    }
    return failed == 0 ? kExitOk : kExitError;
}

std::string error_kind(const std::exception& e) {
    if (dynamic_cast<const ConfigMismatch*>(&e)) return "ConfigMismatch: ";
    if (dynamic_cast<const harness::MissingIndex*>(&e)) return "MissingIndex: ";
    if (dynamic_cast<const harness::CorruptTranscript*>(&e)) return "CorruptTranscript: ";
    if (dynamic_cast<const UnknownQuestion*>(&e)) return "UnknownQuestion: ";
    if (dynamic_cast<const MissingCredential*>(&e)) return "MissingCredential: ";
    if (dynamic_cast<const ConfigError*>(&e)) return "config: ";
    if (dynamic_cast<const DatasetError*>(&e)) return "dataset: ";
    return "";
}

} // namespace

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err, const Environment& env) {
    CLI::App app{"Multi-agent debate runner and evaluation harness"};
    app.require_subcommand(1);

    RunOptions run;
    auto* run_cmd = app.add_subcommand("run", "Run (or resume) an experiment from a config file");
    run_cmd->add_option("config", run.config, "Run configuration (JSON)")->required();
    run_cmd->add_option("--rounds", run.rounds, "Override the number of debate rounds");
    run_cmd->add_option("--limit", run.limit, "Keep only the first N sampled problems");
    run_cmd->add_option("--seed", run.seed, "Override the sample seed");
    run_cmd->add_option("--dataset", run.dataset, "Dataset path, or name=path");
    run_cmd->add_option("--out", run.out, "Output directory (overrides output_dir)");
    run_cmd->add_flag("--resume", run.resume, "Continue an interrupted run with the same configuration");
    run_cmd->add_flag("--check", run.check, "Validate and print the configuration without running");

    std::string run_dir, format = "table", output, grade_config, grade_out, question_id, manifest;
    std::vector<std::string> views;
    std::optional<int> round;
    bool full = false;
    auto* report_cmd = app.add_subcommand("report", "Print the per-round accuracy curve of a run");
    report_cmd->add_option("run_dir", run_dir, "Run directory")->required();
    report_cmd->add_option("--format", format, "table or csv")->check(CLI::IsMember({"table", "csv"}));
    report_cmd->add_option("--view", views, "Restrict to these views (agentN, mode, summary)");
    report_cmd->add_option("--output", output, "Write to a file instead of stdout");

    auto* grade_cmd = app.add_subcommand("grade", "Re-grade stored transcripts without model calls");
    grade_cmd->add_option("run_dir", run_dir, "Run directory")->required();
    grade_cmd->add_option("--config", grade_config, "Config whose dataset supplies gold answers");
    grade_cmd->add_option("--out", grade_out, "Directory for the new curve (default: the run directory)");

    auto* inspect_cmd = app.add_subcommand("inspect", "Show one debate round by round");
    inspect_cmd->add_option("run_dir", run_dir, "Run directory")->required();
    inspect_cmd->add_option("question_id", question_id, "Question id")->required();
    inspect_cmd->add_option("--round", round, "Only this round");
    inspect_cmd->add_flag("--full", full, "Print full responses and summaries");

    std::string gsm8k, asdiv, math;
    manifest = (fs::path(DEBATE_DATA_DIR) / "datasets.manifest.json").string();
    auto* verify_cmd = app.add_subcommand("verify-data", "Check dataset files against the manifest");
    verify_cmd->add_option("--manifest", manifest, "Manifest file");
    verify_cmd->add_option("--gsm8k", gsm8k, "Directory with train.jsonl and test.jsonl");
    verify_cmd->add_option("--asdiv", asdiv, "Directory with ASDiv.xml");
    verify_cmd->add_option("--math", math, "MATH root with train/ and test/");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitError;
    }

    try {
        if (*run_cmd) return cmd_run(run, out, err, env);
        if (*report_cmd) return cmd_report(run_dir, format, views, output, out);
        if (*grade_cmd) return cmd_grade(run_dir, grade_config, grade_out, out, err);
        if (*inspect_cmd) return cmd_inspect(run_dir, question_id, round, full, out);
        if (*verify_cmd) return cmd_verify(manifest, gsm8k, asdiv, math, out);
    } catch (const std::exception& e) {
        err << "error: " << error_kind(e) << e.what() << "\n";
        return kExitError;
    }
    return kExitError;
}

} // namespace debate::cli
