#pragma once

// Experiment runner and scoring.
//
// A run lives in output_dir/run_id/:
//   config.json            experiment snapshot (panel, dataset, sample) + fingerprint
//   transcripts/<qid>.json one per question, written atomically as it finishes
//   curve.json, cost.json  written when the run stops
//   index.json             question files, status, failures, timestamps
//
// Execution knobs (max_parallel_questions, cache_dir, output_dir) are not part
// of the snapshot, so runs that differ only in those produce identical files.

#include "debate/backends.hpp"
#include "debate/datasets.hpp"
#include "debate/protocol.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace debate::harness {

inline constexpr int kDefaultMaxParallelQuestions = 4;
inline constexpr int kArtifactSchemaVersion = 1;

struct SampleSpec {
    std::size_t n = 0;
    std::uint64_t seed = 0;
    friend bool operator==(const SampleSpec&, const SampleSpec&) = default;
};

struct ExperimentConfig {
    std::string run_id;
    protocol::PanelConfig panel;
    datasets::DatasetSpec dataset;
    std::optional<SampleSpec> sample; ///< unset = every loaded problem
    std::optional<std::size_t> limit; ///< keep only the first N after sampling
    int max_parallel_questions = kDefaultMaxParallelQuestions;
    std::optional<std::filesystem::path> cache_dir;
    std::filesystem::path output_dir = "runs";

    /// Throws InvalidArgument, TemplateError.
    void validate() const;
    /// Covers the panel, dataset selection (not its location), sample and limit.
    std::string fingerprint() const;
    std::filesystem::path run_dir() const { return output_dir / run_id; }

    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Non-empty and made of [A-Za-z0-9._-], not "." or "..".
bool is_safe_run_id(std::string_view id);

// --- scoring -------------------------------------------------------------

struct CurvePoint {
    int round_index = 0;
    std::string view;
    std::size_t correct = 0;
    std::size_t total = 0;
    double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total); }
    friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

/// Points ordered by round, then view name.
struct AccuracyCurve {
    int rounds = -1; ///< R; -1 for an empty curve
    std::vector<std::string> views;
    std::vector<CurvePoint> points;

    std::size_t total() const { return points.empty() ? 0 : points.front().total; }
    /// Throws InvalidArgument for an unknown (round, view).
    const CurvePoint& at(int round, std::string_view view) const;

    friend bool operator==(const AccuracyCurve&, const AccuracyCurve&) = default;
};

/// "agent0".."agent{n-1}", "mode", "summary".
std::vector<std::string> views_for(int num_agents);

using GoldMap = std::map<std::string, grading::CanonicalAnswer>;

/// Answers are re-extracted from the raw response and summary texts, so a
/// changed grading rule re-scores old transcripts. Gold comes from `gold`
/// when given (GoldLookupFailure for a missing id), else from each
/// transcript. Throws InconsistentRounds. OpenMP-parallel over transcripts.
AccuracyCurve per_round_accuracy(std::span<const protocol::DebateTranscript> transcripts,
                                 const GoldMap* gold = nullptr);
/// Single-threaded reference with the same contract.
AccuracyCurve per_round_accuracy_serial(std::span<const protocol::DebateTranscript> transcripts,
                                        const GoldMap* gold = nullptr);

inline constexpr std::string_view kCurveCsvHeader = "# debate-curve-csv v1\nround_index,view,correct,total,accuracy\n";

std::string curve_to_csv(const AccuracyCurve& curve);
/// Rounds down the side, views across.
std::string curve_to_table(const AccuracyCurve& curve, const std::vector<std::string>& views = {});

// --- cost ----------------------------------------------------------------

struct BackendCost {
    std::size_t calls = 0;
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
    std::int64_t wall_time_ms = 0; ///< summed call latency
    friend bool operator==(const BackendCost&, const BackendCost&) = default;
};

struct CostReport {
    std::map<std::string, BackendCost> per_backend;
    BackendCost total;
    std::int64_t run_wall_time_ms = 0;
    friend bool operator==(const CostReport&, const CostReport&) = default;
};

// --- runs ----------------------------------------------------------------

enum class RunStatus { complete, partial };
std::string_view to_string(RunStatus s);

struct QuestionFailure {
    std::string question_id;
    std::string cause;
    friend bool operator==(const QuestionFailure&, const QuestionFailure&) = default;
};

struct RunArtifacts {
    ExperimentConfig config;
    /// Every sampled question, in problem order.
    std::vector<std::string> question_ids;
    /// Completed transcripts, in problem order.
    std::vector<protocol::DebateTranscript> transcripts;
    AccuracyCurve curve;
    CostReport cost;
    RunStatus status = RunStatus::complete;
    std::vector<QuestionFailure> failures;
    /// Problems that were neither completed nor failed (cancelled run).
    std::vector<std::string> pending;
    std::string started_at;
    std::string finished_at;
    std::int64_t wall_time_ms = 0;

    friend bool operator==(const RunArtifacts&, const RunArtifacts&) = default;
};

/// Usage from every turn and summary, attributed by the panel's backend ids.
CostReport cost_summary(const RunArtifacts& artifacts);

struct RunHooks {
    /// Polled before each question starts; true stops scheduling new work.
    std::function<bool()> cancelled;
    /// Called (serialized) after each question's transcript is written.
    std::function<void(const std::string& question_id, bool ok)> on_question_done;
};

/// Loads and samples the configured dataset, then runs it.
RunArtifacts run_experiment(const ExperimentConfig& config, std::shared_ptr<backends::Runtime> runtime,
                            const RunHooks& hooks = {});
/// Runs an explicit problem list (sample and limit are still applied).
/// With resume = false an existing run directory is an error; with
/// resume = true completed transcripts are reused and ConfigMismatch is
/// thrown when the stored fingerprint differs.
RunArtifacts run_problems(const ExperimentConfig& config, const std::vector<Problem>& problems,
                          std::shared_ptr<backends::Runtime> runtime, const RunHooks& hooks = {},
                          bool resume = false);

RunArtifacts resume(const ExperimentConfig& config, std::shared_ptr<backends::Runtime> runtime,
                    const RunHooks& hooks = {});

// --- persistence ---------------------------------------------------------

class MissingIndex : public Error {
public:
    explicit MissingIndex(const std::filesystem::path& dir)
        : Error("no index.json in " + dir.string()) {}
};

class CorruptTranscript : public Error {
public:
    CorruptTranscript(const std::filesystem::path& file, const std::string& why)
        : Error("corrupt transcript " + file.string() + ": " + why), file_(file) {}
    const std::filesystem::path& file() const noexcept { return file_; }

private:
    std::filesystem::path file_;
};

std::string transcript_file_name(const std::string& question_id);

/// Writes config.json, transcripts, curve.json, cost.json and index.json.
void save_artifacts(const RunArtifacts& artifacts, const std::filesystem::path& run_dir);
/// Throws MissingIndex, CorruptTranscript, ConfigError.
RunArtifacts load_artifacts(const std::filesystem::path& run_dir);

std::string config_to_json_text(const ExperimentConfig& config);
/// Reads a config.json snapshot. Throws ConfigError.
ExperimentConfig config_from_json_text(const std::string& text);

std::string curve_to_json_text(const AccuracyCurve& curve);
/// Throws ConfigError.
AccuracyCurve curve_from_json_text(const std::string& text);
std::string cost_to_json_text(const CostReport& cost);

} // namespace debate::harness
