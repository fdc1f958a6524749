#include "debate/harness.hpp"

#include "debate/errors.hpp"
#include "debate/serialization.hpp"
#include "debate/util.hpp"

#include <omp.h>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <mutex>
#include <set>

namespace debate::harness {

namespace fs = std::filesystem;
using protocol::DebateTranscript;
using serialization::Json;

// --- config --------------------------------------------------------------

bool is_safe_run_id(std::string_view id) {
    if (id.empty() || id == "." || id == "..") return false;
    return std::all_of(id.begin(), id.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '.' || c == '_' ||
               c == '-';
    });
}

void ExperimentConfig::validate() const {
    if (!is_safe_run_id(run_id)) throw InvalidArgument("run_id '" + run_id + "' is not filesystem-safe");
    if (max_parallel_questions < 1) throw InvalidArgument("max_parallel_questions must be >= 1");
    panel.validate();
}

namespace {

Json dataset_selection_json(const datasets::DatasetSpec& d) {
    Json j;
    j["name"] = to_string(d.name);
    j["split"] = datasets::to_string(d.split);
    j["subjects"] = d.subjects;
    j["levels"] = d.levels;
    return j;
}

Json sample_json(const std::optional<SampleSpec>& s) {
    if (!s) return nullptr;
    return {{"n", s->n}, {"seed", s->seed}};
}

} // namespace

std::string ExperimentConfig::fingerprint() const {
    Json j = {{"version", "debate-experiment-v1"},
              {"panel", panel.fingerprint()},
              {"dataset", dataset_selection_json(dataset)},
              {"sample", sample_json(sample)}};
    if (limit) j["limit"] = *limit;
    return util::sha256_hex(j.dump());
}

std::string config_to_json_text(const ExperimentConfig& c) {
    Json dataset = dataset_selection_json(c.dataset);
    dataset["path"] = c.dataset.path.generic_string();
    Json j;
    j["schema_version"] = kArtifactSchemaVersion;
    j["run_id"] = c.run_id;
    j["fingerprint"] = c.fingerprint();
    j["dataset"] = dataset;
    j["sample"] = sample_json(c.sample);
    j["limit"] = c.limit ? Json(*c.limit) : Json(nullptr);
    j["panel"] = serialization::to_json(c.panel);
    return serialization::dump(j);
}

ExperimentConfig config_from_json_text(const std::string& text) {
    try {
        Json j = Json::parse(text);
        ExperimentConfig c;
        c.run_id = j.at("run_id").get<std::string>();
        const Json& d = j.at("dataset");
        auto name = dataset_name_from_string(d.at("name").get<std::string>());
        auto split = datasets::split_from_string(d.at("split").get<std::string>());
        if (!name || !split) throw ConfigError("config snapshot has an unknown dataset or split");
        c.dataset.name = *name;
        c.dataset.split = *split;
        c.dataset.path = d.value("path", std::string());
        c.dataset.subjects = d.at("subjects").get<std::set<std::string>>();
        c.dataset.levels = d.at("levels").get<std::set<int>>();
        if (!j.at("sample").is_null())
            c.sample = SampleSpec{j["sample"].at("n").get<std::size_t>(), j["sample"].at("seed").get<std::uint64_t>()};
        if (j.contains("limit") && !j["limit"].is_null()) c.limit = j["limit"].get<std::size_t>();
        c.panel = serialization::panel_from_json(j.at("panel"));
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config snapshot: ") + e.what());
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(std::string("config snapshot: ") + e.what());
    }
}

// --- scoring -------------------------------------------------------------

std::vector<std::string> views_for(int num_agents) {
    std::vector<std::string> v;
    for (int i = 0; i < num_agents; ++i) v.push_back("agent" + std::to_string(i));
    v.push_back("mode");
    v.push_back("summary");
    return v;
}

const CurvePoint& AccuracyCurve::at(int round, std::string_view view) const {
    for (const auto& p : points)
        if (p.round_index == round && p.view == view) return p;
    throw InvalidArgument("no curve point for round " + std::to_string(round) + " view " + std::string(view));
}

namespace {

struct Shape {
    int rounds = -1;
    int agents = 0;
};

Shape check_shape(std::span<const DebateTranscript> transcripts) {
    Shape s;
    if (transcripts.empty()) return s;
    s.rounds = static_cast<int>(transcripts[0].rounds.size()) - 1;
    if (s.rounds < 0) throw InconsistentRounds("transcript '" + transcripts[0].question_id + "' has no rounds");
    s.agents = static_cast<int>(transcripts[0].rounds[0].turns.size());
    for (const auto& t : transcripts) {
        if (static_cast<int>(t.rounds.size()) != s.rounds + 1)
            throw InconsistentRounds("transcript '" + t.question_id + "' has " + std::to_string(t.rounds.size()) +
                                     " rounds, expected " + std::to_string(s.rounds + 1));
        for (std::size_t r = 0; r < t.rounds.size(); ++r) {
            const auto& turns = t.rounds[r].turns;
            if (t.rounds[r].round_index != static_cast<int>(r) || static_cast<int>(turns.size()) != s.agents)
                throw InconsistentRounds("transcript '" + t.question_id + "' round " + std::to_string(r) +
                                         " does not match the panel shape");
            for (int i = 0; i < s.agents; ++i)
                if (turns[i].agent_index != i)
                    throw InconsistentRounds("transcript '" + t.question_id + "' has out-of-order turns");
        }
    }
    return s;
}

std::vector<const grading::CanonicalAnswer*> resolve_gold(std::span<const DebateTranscript> transcripts,
                                                          const GoldMap* gold) {
    std::vector<const grading::CanonicalAnswer*> out;
    std::vector<std::string> missing;
    for (const auto& t : transcripts) {
        if (!gold) {
            out.push_back(&t.gold);
            continue;
        }
        auto it = gold->find(t.question_id);
        if (it == gold->end()) {
            missing.push_back(t.question_id);
            out.push_back(nullptr);
        } else {
            out.push_back(&it->second);
        }
    }
    if (!missing.empty()) {
        std::string msg = "no gold answer for:";
        for (const auto& id : missing) msg += " " + id;
        throw GoldLookupFailure(msg);
    }
    return out;
}

/// Adds one transcript's verdicts into counts[(round * views) + view], views
/// in the order of views_for.
void score_transcript(const DebateTranscript& t, const grading::CanonicalAnswer& gold, const Shape& s,
                      std::vector<std::size_t>& counts) {
    const std::size_t views = static_cast<std::size_t>(s.agents) + 2;
    std::vector<std::optional<grading::CanonicalAnswer>> answers(s.agents);
    for (int r = 0; r <= s.rounds; ++r) {
        const auto& rec = t.rounds[r];
        std::size_t base = static_cast<std::size_t>(r) * views;
        for (int i = 0; i < s.agents; ++i) {
            answers[i] = grading::extract_answer(rec.turns[i].response);
            if (grading::grade(answers[i], gold).correct) ++counts[base + i];
        }
        if (grading::grade(grading::mode(answers), gold).correct) ++counts[base + s.agents];
        std::optional<grading::CanonicalAnswer> summary;
        if (!rec.summary.empty()) summary = grading::extract_answer(rec.summary);
        if (grading::grade(summary, gold).correct) ++counts[base + s.agents + 1];
    }
}

AccuracyCurve assemble(const Shape& s, std::size_t total, const std::vector<std::size_t>& counts) {
    AccuracyCurve curve;
    curve.rounds = s.rounds;
    if (s.rounds < 0) return curve;
    curve.views = views_for(s.agents);
    for (int r = 0; r <= s.rounds; ++r)
        for (std::size_t v = 0; v < curve.views.size(); ++v)
            curve.points.push_back({r, curve.views[v], counts[r * curve.views.size() + v], total});
    std::stable_sort(curve.points.begin(), curve.points.end(), [](const CurvePoint& a, const CurvePoint& b) {
        return a.round_index != b.round_index ? a.round_index < b.round_index : a.view < b.view;
    });
    return curve;
}

} // namespace

AccuracyCurve per_round_accuracy_serial(std::span<const DebateTranscript> transcripts, const GoldMap* gold) {
    Shape s = check_shape(transcripts);
    auto golds = resolve_gold(transcripts, gold);
    std::vector<std::size_t> counts(static_cast<std::size_t>(s.rounds + 1) * (s.agents + 2));
    for (std::size_t k = 0; k < transcripts.size(); ++k) score_transcript(transcripts[k], *golds[k], s, counts);
    return assemble(s, transcripts.size(), counts);
}

AccuracyCurve per_round_accuracy(std::span<const DebateTranscript> transcripts, const GoldMap* gold) {
    Shape s = check_shape(transcripts);
    auto golds = resolve_gold(transcripts, gold);
    const std::size_t cells = static_cast<std::size_t>(s.rounds + 1) * (s.agents + 2);
    std::vector<std::size_t> counts(cells);
    const long n = static_cast<long>(transcripts.size());
#pragma omp parallel
    {
        std::vector<std::size_t> local(cells);
#pragma omp for schedule(static)
        for (long k = 0; k < n; ++k) score_transcript(transcripts[k], *golds[k], s, local);
#pragma omp critical(debate_curve_merge)
        for (std::size_t c = 0; c < cells; ++c) counts[c] += local[c];
    }
    return assemble(s, transcripts.size(), counts);
}

std::string curve_to_csv(const AccuracyCurve& curve) {
    std::string out(kCurveCsvHeader);
    char buf[64];
    for (const auto& p : curve.points) {
        std::snprintf(buf, sizeof buf, "%.6f", p.accuracy());
        out += std::to_string(p.round_index) + "," + p.view + "," + std::to_string(p.correct) + "," +
               std::to_string(p.total) + "," + buf + "\n";
    }
    return out;
}

std::string curve_to_table(const AccuracyCurve& curve, const std::vector<std::string>& views) {
    if (curve.rounds < 0) return "(no completed transcripts)\n";
    const auto& cols = views.empty() ? curve.views : views;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> header = {"round"};
    header.insert(header.end(), cols.begin(), cols.end());
    rows.push_back(header);
    char buf[64];
    for (int r = 0; r <= curve.rounds; ++r) {
        std::vector<std::string> row = {std::to_string(r)};
        for (const auto& v : cols) {
            const auto& p = curve.at(r, v);
            std::snprintf(buf, sizeof buf, "%.3f (%zu/%zu)", p.accuracy(), p.correct, p.total);
            row.push_back(buf);
        }
        rows.push_back(row);
    }
    std::vector<std::size_t> width(header.size());
    for (const auto& row : rows)
        for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
    std::string out;
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c) out += "  ";
            out += row[c];
            if (c + 1 < row.size()) out.append(width[c] - row[c].size(), ' ');
        }
        out += "\n";
    }
    return out;
}

// --- cost ----------------------------------------------------------------

CostReport cost_summary(const RunArtifacts& artifacts) {
    CostReport report;
    const auto& panel = artifacts.config.panel;
    auto add = [&](const std::string& id, const backends::Usage& u, std::int64_t latency) {
        for (BackendCost* c : {&report.per_backend[id], &report.total}) {
            c->calls += 1;
            c->prompt_tokens += u.prompt_tokens;
            c->completion_tokens += u.completion_tokens;
            c->wall_time_ms += latency;
        }
    };
    for (const auto& t : artifacts.transcripts) {
        for (const auto& rec : t.rounds) {
            for (const auto& turn : rec.turns) {
                std::string id = turn.agent_index >= 0 && turn.agent_index < static_cast<int>(panel.debaters.size())
                                     ? panel.debaters[turn.agent_index].backend.backend_id
                                     : "unknown";
                add(id, turn.usage, turn.latency_ms);
            }
            if (!rec.summary.empty()) add(panel.summarizer.backend.backend_id, rec.summary_usage, rec.summary_latency_ms);
        }
    }
    report.run_wall_time_ms = artifacts.wall_time_ms;
    return report;
}

namespace {

Json cost_json(const BackendCost& c) {
    return {{"calls", c.calls},
            {"prompt_tokens", c.prompt_tokens},
            {"completion_tokens", c.completion_tokens},
            {"wall_time_ms", c.wall_time_ms}};
}

} // namespace

AccuracyCurve curve_from_json_text(const std::string& text) {
    try {
        Json j = Json::parse(text);
        AccuracyCurve c;
        c.rounds = j.at("rounds").get<int>();
        c.views = j.at("views").get<std::vector<std::string>>();
        for (const auto& p : j.at("points"))
            c.points.push_back({p.at("round_index").get<int>(), p.at("view").get<std::string>(),
                                p.at("correct").get<std::size_t>(), p.at("total").get<std::size_t>()});
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("curve.json: ") + e.what());
    }
}

std::string cost_to_json_text(const CostReport& cost) {
    Json per = Json::object();
    for (const auto& [id, c] : cost.per_backend) per[id] = cost_json(c);
    Json j = {{"schema_version", kArtifactSchemaVersion},
              {"per_backend", per},
              {"total", cost_json(cost.total)},
              {"run_wall_time_ms", cost.run_wall_time_ms}};
    return serialization::dump(j);
}

std::string curve_to_json_text(const AccuracyCurve& curve) {
    Json points = Json::array();
    for (const auto& p : curve.points)
        points.push_back({{"round_index", p.round_index},
                          {"view", p.view},
                          {"correct", p.correct},
                          {"total", p.total},
                          {"accuracy", p.accuracy()}});
    Json j = {{"schema_version", kArtifactSchemaVersion},
              {"rounds", curve.rounds},
              {"views", curve.views},
              {"points", points}};
    return serialization::dump(j);
}

// --- persistence ---------------------------------------------------------

std::string_view to_string(RunStatus s) { return s == RunStatus::complete ? "complete" : "partial"; }

std::string transcript_file_name(const std::string& question_id) {
    std::string out;
    for (char c : question_id) {
        bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '.' ||
                  c == '_' || c == '-';
        out += ok ? c : '_';
    }
    return out + ".json";
}

namespace {

fs::path transcript_path(const fs::path& run_dir, const std::string& question_id) {
    return run_dir / "transcripts" / transcript_file_name(question_id);
}

void write_transcript(const fs::path& run_dir, const DebateTranscript& t) {
    util::write_file_atomic(transcript_path(run_dir, t.question_id),
                            serialization::dump(serialization::to_json(t)));
}

DebateTranscript read_transcript(const fs::path& file) {
    std::string text = util::read_file(file);
    try {
        return serialization::transcript_from_json(Json::parse(text));
    } catch (const nlohmann::json::exception& e) {
        throw CorruptTranscript(file, e.what());
    } catch (const Error& e) {
        throw CorruptTranscript(file, e.what());
    }
}

std::string index_text(const RunArtifacts& a) {
    std::set<std::string> done, failed;
    for (const auto& t : a.transcripts) done.insert(t.question_id);
    for (const auto& f : a.failures) failed.insert(f.question_id);
    Json questions = Json::array();
    for (const auto& id : a.question_ids) {
        std::string status = done.count(id) ? "complete" : failed.count(id) ? "failed" : "pending";
        questions.push_back({{"question_id", id}, {"file", "transcripts/" + transcript_file_name(id)}, {"status", status}});
    }
    Json failures = Json::array();
    for (const auto& f : a.failures) failures.push_back({{"question_id", f.question_id}, {"cause", f.cause}});
    Json j;
    j["schema_version"] = kArtifactSchemaVersion;
    j["run_id"] = a.config.run_id;
    j["config_fingerprint"] = a.config.fingerprint();
    j["status"] = to_string(a.status);
    j["started_at"] = a.started_at;
    j["finished_at"] = a.finished_at;
    j["wall_time_ms"] = a.wall_time_ms;
    j["config"] = "config.json";
    j["curve"] = "curve.json";
    j["cost"] = "cost.json";
    j["questions"] = questions;
    j["failures"] = failures;
    return serialization::dump(j);
}

} // namespace

void save_artifacts(const RunArtifacts& a, const fs::path& run_dir) {
    fs::create_directories(run_dir / "transcripts");
    util::write_file_atomic(run_dir / "config.json", config_to_json_text(a.config));
    for (const auto& t : a.transcripts) write_transcript(run_dir, t);
    util::write_file_atomic(run_dir / "curve.json", curve_to_json_text(a.curve));
    util::write_file_atomic(run_dir / "cost.json", cost_to_json_text(a.cost));
    util::write_file_atomic(run_dir / "index.json", index_text(a));
}

RunArtifacts load_artifacts(const fs::path& run_dir) {
    if (!fs::exists(run_dir / "index.json")) throw MissingIndex(run_dir);
    RunArtifacts a;
    a.config = config_from_json_text(util::read_file(run_dir / "config.json"));
    a.config.output_dir = run_dir.parent_path();
    Json index;
    try {
        index = Json::parse(util::read_file(run_dir / "index.json"));
        a.started_at = index.at("started_at").get<std::string>();
        a.finished_at = index.at("finished_at").get<std::string>();
        a.wall_time_ms = index.at("wall_time_ms").get<std::int64_t>();
        a.status = index.at("status").get<std::string>() == "complete" ? RunStatus::complete : RunStatus::partial;
        for (const auto& f : index.at("failures"))
            a.failures.push_back({f.at("question_id").get<std::string>(), f.at("cause").get<std::string>()});
        for (const auto& q : index.at("questions")) {
            auto id = q.at("question_id").get<std::string>();
            auto status = q.at("status").get<std::string>();
            a.question_ids.push_back(id);
            if (status == "complete") {
                fs::path file = run_dir / q.at("file").get<std::string>();
                if (!fs::exists(file)) throw CorruptTranscript(file, "listed in the index but missing");
                a.transcripts.push_back(read_transcript(file));
                if (a.transcripts.back().question_id != id) throw CorruptTranscript(file, "question_id mismatch");
            } else if (status == "pending") {
                a.pending.push_back(id);
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("index.json in " + run_dir.string() + ": " + e.what());
    }
    a.curve = per_round_accuracy(a.transcripts);
    a.cost = cost_summary(a);
    return a;
}

// --- runner --------------------------------------------------------------

RunArtifacts run_problems(const ExperimentConfig& config, const std::vector<Problem>& all_problems,
                          std::shared_ptr<backends::Runtime> runtime, const RunHooks& hooks, bool resume) {
    config.validate();
    datasets::check_unique_ids(all_problems);
    std::vector<Problem> problems =
        config.sample ? datasets::sample(all_problems, config.sample->n, config.sample->seed) : all_problems;
    if (config.limit && *config.limit < problems.size()) problems.resize(*config.limit);

    const fs::path run_dir = config.run_dir();
    const std::string fingerprint = config.fingerprint();
    const std::string panel_fingerprint = config.panel.fingerprint();
    {
        std::set<std::string> files;
        for (const auto& p : problems)
            if (!files.insert(transcript_file_name(p.question_id)).second)
                throw InvalidArgument("question ids collide on file name " + transcript_file_name(p.question_id));
    }

    if (fs::exists(run_dir / "config.json")) {
        if (!resume)
            throw InvalidArgument("run directory " + run_dir.string() + " already exists; resume it or pick another run_id");
        auto stored = config_from_json_text(util::read_file(run_dir / "config.json"));
        if (stored.fingerprint() != fingerprint)
            throw ConfigMismatch("configuration fingerprint differs from the run in " + run_dir.string());
    } else if (resume) {
        throw ConfigMismatch("nothing to resume: " + run_dir.string() + " has no config.json");
    }
    fs::create_directories(run_dir / "transcripts");
    util::write_file_atomic(run_dir / "config.json", config_to_json_text(config));

    RunArtifacts a;
    a.config = config;
    for (const auto& p : problems) a.question_ids.push_back(p.question_id);
    a.started_at = runtime->clock->timestamp();
    const std::int64_t start_ms = runtime->clock->now_ms();

    const std::size_t n = problems.size();
    std::vector<std::optional<DebateTranscript>> done(n);
    std::vector<std::string> failure(n);
    std::vector<char> attempted(n, 0);

    if (resume) {
        for (std::size_t k = 0; k < n; ++k) {
            fs::path file = transcript_path(run_dir, problems[k].question_id);
            if (!fs::exists(file)) continue;
            try {
                auto t = read_transcript(file);
                if (t.status == protocol::TranscriptStatus::complete && t.config_fingerprint == panel_fingerprint &&
                    t.question_id == problems[k].question_id)
                    done[k] = std::move(t);
            } catch (const CorruptTranscript& e) {
                util::log_warning(std::string(e.what()) + "; rerunning");
            }
        }
    }

    std::vector<std::size_t> todo;
    for (std::size_t k = 0; k < n; ++k)
        if (!done[k]) todo.push_back(k);

    protocol::DebateOptions options;
    options.cache_dir = config.cache_dir;
    std::mutex writer;
    std::atomic<bool> stop{false};
    const long count = static_cast<long>(todo.size());

#pragma omp parallel for schedule(dynamic) num_threads(config.max_parallel_questions)
    for (long i = 0; i < count; ++i) {
        const std::size_t k = todo[i];
        if (stop.load()) continue;
        if (hooks.cancelled) {
            std::lock_guard lock(writer);
            if (hooks.cancelled()) stop = true;
        }
        if (stop.load()) continue;
        attempted[k] = 1;

        std::optional<DebateTranscript> result;
        std::optional<DebateTranscript> partial;
        std::string cause;
        try {
            result = protocol::run_debate(problems[k], config.panel, runtime, options);
        } catch (const protocol::DebateAborted& e) {
            cause = e.what();
            partial = e.partial();
        } catch (const std::exception& e) {
            cause = e.what();
        }

        std::lock_guard lock(writer);
        try {
            if (result) write_transcript(run_dir, *result);
            if (partial) write_transcript(run_dir, *partial);
        } catch (const std::exception& e) {
            if (result) cause = std::string("could not write transcript: ") + e.what();
            result.reset();
        }
        if (result)
            done[k] = std::move(result);
        else
            failure[k] = cause.empty() ? "unknown failure" : cause;
        if (hooks.on_question_done) hooks.on_question_done(problems[k].question_id, done[k].has_value());
    }

    for (std::size_t k = 0; k < n; ++k) {
        if (done[k])
            a.transcripts.push_back(std::move(*done[k]));
        else if (attempted[k])
            a.failures.push_back({problems[k].question_id, failure[k]});
        else
            a.pending.push_back(problems[k].question_id);
    }
    a.status = a.failures.empty() && a.pending.empty() ? RunStatus::complete : RunStatus::partial;
    a.curve = per_round_accuracy(a.transcripts);
    a.finished_at = runtime->clock->timestamp();
    a.wall_time_ms = runtime->clock->now_ms() - start_ms;
    a.cost = cost_summary(a);

    util::write_file_atomic(run_dir / "curve.json", curve_to_json_text(a.curve));
    util::write_file_atomic(run_dir / "cost.json", cost_to_json_text(a.cost));
    util::write_file_atomic(run_dir / "index.json", index_text(a));
    return a;
}

RunArtifacts run_experiment(const ExperimentConfig& config, std::shared_ptr<backends::Runtime> runtime,
                            const RunHooks& hooks) {
    config.validate();
    return run_problems(config, datasets::load(config.dataset), std::move(runtime), hooks, false);
}

RunArtifacts resume(const ExperimentConfig& config, std::shared_ptr<backends::Runtime> runtime,
                    const RunHooks& hooks) {
    config.validate();
    return run_problems(config, datasets::load(config.dataset), std::move(runtime), hooks, true);
}

} // namespace debate::harness
