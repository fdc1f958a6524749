#pragma once

// The debate state machine.
//
// Round 0: every debater answers the question independently.
// Rounds 1..R: every debater receives the summarizer's condensation of the
// previous round and answers again. The summarizer runs after every round
// whose summary is consumed, plus after round R under the summary policy.
// The final answer is the mode of the round-R answers, or the answer boxed
// in the round-R summary.

#include "debate/backends.hpp"
#include "debate/errors.hpp"
#include "debate/grading.hpp"
#include "debate/problem.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace debate::protocol {

enum class CotMode { none, zero_shot };
enum class FinalPolicy { mode, summary };
/// accumulate: a debater sees its own earlier turns as a growing conversation.
/// stateless: each prompt is sent alone.
enum class AgentMemory { accumulate, stateless };

std::string_view to_string(CotMode v);
std::string_view to_string(FinalPolicy v);
std::string_view to_string(AgentMemory v);
std::optional<CotMode> cot_mode_from_string(std::string_view s);
std::optional<FinalPolicy> final_policy_from_string(std::string_view s);
std::optional<AgentMemory> agent_memory_from_string(std::string_view s);

inline constexpr double kDefaultDebaterTemperature = 1.0;
inline constexpr double kDefaultSummarizerTemperature = 0.0;
inline constexpr int kDefaultMaxTokens = 2048;
inline constexpr int kDefaultRounds = 4;

struct AgentSpec {
    int agent_index = 0;
    backends::BackendSpec backend;
    std::string display_name;
    std::string model_id;
    double temperature = kDefaultDebaterTemperature;
    int max_tokens = kDefaultMaxTokens;
    std::optional<std::int64_t> seed;

    friend bool operator==(const AgentSpec&, const AgentSpec&) = default;
};

/// Prompt texts. `initial` takes {question}; `debate` takes {question} and
/// {summary}; `summarize` takes {responses}. Rendered debater prompts always
/// end with boxed_instruction.
struct PromptTemplates {
    std::string initial;
    std::string debate;
    std::string summarize;
    std::string cot_suffix;
    std::string boxed_instruction;

    static PromptTemplates defaults();
    /// Reads initial.txt, debate.txt, summarize.txt, cot_suffix.txt and
    /// boxed_instruction.txt. One trailing newline per file is dropped.
    /// Throws IoError or TemplateError.
    static PromptTemplates load(const std::filesystem::path& dir);
    void save(const std::filesystem::path& dir) const;

    /// Throws TemplateError.
    void validate() const;
    std::string fingerprint() const;

    friend bool operator==(const PromptTemplates&, const PromptTemplates&) = default;
};

/// Substitutes {name} slots. Unknown or unfilled slots throw TemplateError.
std::string render_template(std::string_view tmpl, std::span<const std::pair<std::string_view, std::string_view>> values);

std::string render_initial_prompt(const PromptTemplates& templates, std::string_view question, CotMode cot);
/// Throws EmptySummary, TemplateError.
std::string render_debate_prompt(const PromptTemplates& templates, std::string_view question, std::string_view summary,
                                 CotMode cot);

struct PanelConfig {
    std::vector<AgentSpec> debaters;
    AgentSpec summarizer;
    int rounds = kDefaultRounds;
    CotMode cot_mode = CotMode::none;
    FinalPolicy final_policy = FinalPolicy::mode;
    AgentMemory memory = AgentMemory::accumulate;
    PromptTemplates prompts = PromptTemplates::defaults();

    /// At least two debaters indexed 0..n-1, R >= 0, valid backends and
    /// templates. Throws InvalidArgument or TemplateError.
    void validate() const;
    /// SHA-256 over every field, including the prompt-set fingerprint.
    std::string fingerprint() const;

    friend bool operator==(const PanelConfig&, const PanelConfig&) = default;
};

struct AgentTurn {
    int agent_index = 0;
    std::string display_name;
    std::string prompt;
    std::string response;
    std::optional<grading::CanonicalAnswer> extracted;
    backends::Usage usage;
    std::int64_t latency_ms = 0;

    friend bool operator==(const AgentTurn&, const AgentTurn&) = default;
};

struct RoundRecord {
    int round_index = 0;
    std::vector<AgentTurn> turns;
    /// Empty only for round R under the mode policy.
    std::string summary;
    backends::Usage summary_usage;
    std::int64_t summary_latency_ms = 0;

    friend bool operator==(const RoundRecord&, const RoundRecord&) = default;
};

struct FinalAnswer {
    FinalPolicy policy = FinalPolicy::mode;
    std::optional<grading::CanonicalAnswer> answer;
    int source_round = 0;

    friend bool operator==(const FinalAnswer&, const FinalAnswer&) = default;
};

enum class TranscriptStatus { complete, incomplete };
std::string_view to_string(TranscriptStatus v);
std::optional<TranscriptStatus> transcript_status_from_string(std::string_view s);

struct DebateTranscript {
    std::string question_id;
    std::string question_text;
    grading::CanonicalAnswer gold;
    std::string config_fingerprint;
    std::vector<RoundRecord> rounds;
    FinalAnswer final;
    TranscriptStatus status = TranscriptStatus::complete;
    std::string failure; ///< cause, when incomplete

    friend bool operator==(const DebateTranscript&, const DebateTranscript&) = default;
};

/// A backend failed irrecoverably. Carries the transcript up to the failure,
/// marked incomplete. agent is -1 when the summarizer failed.
class DebateAborted : public Error {
public:
    DebateAborted(int round, int agent, std::string cause, DebateTranscript partial);
    int round() const noexcept { return round_; }
    int agent() const noexcept { return agent_; }
    const std::string& cause() const noexcept { return cause_; }
    const DebateTranscript& partial() const noexcept { return partial_; }

private:
    int round_;
    int agent_;
    std::string cause_;
    DebateTranscript partial_;
};

struct DebateOptions {
    /// Response cache for remote backends; unset disables caching.
    std::optional<std::filesystem::path> cache_dir;
    /// Fan debater calls out within a round.
    bool parallel_turns = true;
};

/// Calls the summarizer once with every turn's response, labeled by display name.
backends::ChatResponse summarize_round(backends::Backend& summarizer, const AgentSpec& spec,
                                       const PromptTemplates& templates, std::span<const AgentTurn> turns,
                                       const std::optional<std::filesystem::path>& cache_dir = std::nullopt);
backends::ChatResponse summarize_round(const AgentSpec& summarizer, const PromptTemplates& templates,
                                       std::span<const AgentTurn> turns, std::shared_ptr<backends::Runtime> runtime);

std::string render_summarize_prompt(const PromptTemplates& templates, std::span<const AgentTurn> turns);

/// Throws DebateAborted.
DebateTranscript run_debate(const Problem& problem, const PanelConfig& panel,
                            std::shared_ptr<backends::Runtime> runtime, const DebateOptions& options = {});

std::optional<grading::CanonicalAnswer> final_answer(const DebateTranscript& transcript, FinalPolicy policy);

/// Number of summarizer calls a complete run makes.
inline int expected_summarizer_calls(int rounds, FinalPolicy policy) {
    return rounds + (policy == FinalPolicy::summary ? 1 : 0);
}

} // namespace debate::protocol
