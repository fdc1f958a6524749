#include "debate/protocol.hpp"

#include "debate/serialization.hpp"
#include "debate/util.hpp"

#include <algorithm>
#include <future>
#include <regex>

namespace debate::protocol {

using backends::ChatRequest;
using backends::ChatResponse;
using backends::Message;
using backends::Role;

std::string_view to_string(CotMode v) { return v == CotMode::none ? "none" : "zero_shot"; }
std::string_view to_string(FinalPolicy v) { return v == FinalPolicy::mode ? "mode" : "summary"; }
std::string_view to_string(AgentMemory v) { return v == AgentMemory::accumulate ? "accumulate" : "stateless"; }
std::string_view to_string(TranscriptStatus v) { return v == TranscriptStatus::complete ? "complete" : "incomplete"; }

std::optional<CotMode> cot_mode_from_string(std::string_view s) {
    if (s == "none") return CotMode::none;
    if (s == "zero_shot") return CotMode::zero_shot;
    return std::nullopt;
}

std::optional<FinalPolicy> final_policy_from_string(std::string_view s) {
    if (s == "mode") return FinalPolicy::mode;
    if (s == "summary") return FinalPolicy::summary;
    return std::nullopt;
}

std::optional<AgentMemory> agent_memory_from_string(std::string_view s) {
    if (s == "accumulate") return AgentMemory::accumulate;
    if (s == "stateless") return AgentMemory::stateless;
    return std::nullopt;
}

std::optional<TranscriptStatus> transcript_status_from_string(std::string_view s) {
    if (s == "complete") return TranscriptStatus::complete;
    if (s == "incomplete") return TranscriptStatus::incomplete;
    return std::nullopt;
}

// --- templates -----------------------------------------------------------

namespace {

const std::regex& slot_pattern() {
    static const std::regex re(R"(\{([a-z_]+)\})");
    return re;
}

std::vector<std::string> slots_of(std::string_view tmpl) {
    std::vector<std::string> out;
    std::string s(tmpl);
    for (std::sregex_iterator it(s.begin(), s.end(), slot_pattern()), end; it != end; ++it) out.push_back((*it)[1]);
    return out;
}

void check_slots(std::string_view name, std::string_view tmpl, std::initializer_list<std::string_view> allowed) {
    auto found = slots_of(tmpl);
    for (const auto& slot : found)
        if (std::find(allowed.begin(), allowed.end(), slot) == allowed.end())
            throw TemplateError("template '" + std::string(name) + "' has unknown slot {" + slot + "}");
    for (auto want : allowed)
        if (std::find(found.begin(), found.end(), want) == found.end())
            throw TemplateError("template '" + std::string(name) + "' lacks slot {" + std::string(want) + "}");
}

bool blank(std::string_view s) { return s.find_first_not_of(" \t\r\n") == std::string_view::npos; }

constexpr std::array<std::string_view, 5> kTemplateFiles = {"initial.txt", "debate.txt", "summarize.txt",
                                                            "cot_suffix.txt", "boxed_instruction.txt"};

std::array<std::string*, 5> fields(PromptTemplates& p) {
    return {&p.initial, &p.debate, &p.summarize, &p.cot_suffix, &p.boxed_instruction};
}

} // namespace

PromptTemplates PromptTemplates::defaults() {
    PromptTemplates p;
    p.initial = "Can you solve the following math problem?\n\n{question}";
    p.debate = "Here is the math problem again:\n\n{question}\n\n"
               "Below is a summary of the solutions that all agents, including you, gave in the previous round:\n\n"
               "{summary}\n\n"
               "Use this summary as additional information. Check each argument carefully, point out any mistakes, "
               "and give your updated solution. You may keep your previous answer if you still believe it is correct.";
    p.summarize = "Several agents answered the same math problem. Their responses follow.\n\n{responses}\n\n"
                  "Summarize the key arguments, reasoning steps and conclusions in these responses. Say where the "
                  "agents agree and where they disagree, and which reasoning is most convincing. Finish with the "
                  "best-supported final answer written as \\boxed{...}.";
    p.cot_suffix = "Let's think step by step.";
    p.boxed_instruction = "Put your final answer at the end of your response in the form \\boxed{answer}.";
    return p;
}

PromptTemplates PromptTemplates::load(const std::filesystem::path& dir) {
    PromptTemplates p;
    auto targets = fields(p);
    for (std::size_t i = 0; i < kTemplateFiles.size(); ++i) {
        std::string text = util::read_file(dir / kTemplateFiles[i]);
        if (!text.empty() && text.back() == '\n') text.pop_back();
        if (!text.empty() && text.back() == '\r') text.pop_back();
        *targets[i] = std::move(text);
    }
    p.validate();
    return p;
}

void PromptTemplates::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    PromptTemplates copy = *this;
    auto sources = fields(copy);
    for (std::size_t i = 0; i < kTemplateFiles.size(); ++i)
        util::write_file_atomic(dir / kTemplateFiles[i], *sources[i] + "\n");
}

void PromptTemplates::validate() const {
    check_slots("initial", initial, {"question"});
    check_slots("debate", debate, {"question", "summary"});
    check_slots("summarize", summarize, {"responses"});
    check_slots("cot_suffix", cot_suffix, {});
    if (blank(boxed_instruction)) throw TemplateError("boxed_instruction is empty");
}

std::string PromptTemplates::fingerprint() const {
    nlohmann::json j = {"debate-prompts-v1", initial, debate, summarize, cot_suffix, boxed_instruction};
    return util::sha256_hex(j.dump());
}

std::string render_template(std::string_view tmpl,
                            std::span<const std::pair<std::string_view, std::string_view>> values) {
    std::string s(tmpl);
    std::string out;
    std::size_t last = 0;
    for (std::sregex_iterator it(s.begin(), s.end(), slot_pattern()), end; it != end; ++it) {
        const auto& m = *it;
        std::string name = m[1];
        auto v = std::find_if(values.begin(), values.end(), [&](const auto& kv) { return kv.first == name; });
        if (v == values.end()) throw TemplateError("no value for template slot {" + name + "}");
        out.append(s, last, static_cast<std::size_t>(m.position()) - last);
        out.append(v->second);
        last = static_cast<std::size_t>(m.position() + m.length());
    }
    out.append(s, last);
    return out;
}

namespace {

std::string finish_prompt(const PromptTemplates& t, std::string body, CotMode cot) {
    body += "\n\n";
    if (cot == CotMode::zero_shot) body += t.cot_suffix + "\n\n";
    body += t.boxed_instruction;
    return body;
}

} // namespace

std::string render_initial_prompt(const PromptTemplates& templates, std::string_view question, CotMode cot) {
    std::pair<std::string_view, std::string_view> values[] = {{"question", question}};
    return finish_prompt(templates, render_template(templates.initial, values), cot);
}

std::string render_debate_prompt(const PromptTemplates& templates, std::string_view question,
                                 std::string_view summary, CotMode cot) {
    if (blank(summary)) throw EmptySummary();
    std::pair<std::string_view, std::string_view> values[] = {{"question", question}, {"summary", summary}};
    return finish_prompt(templates, render_template(templates.debate, values), cot);
}

std::string render_summarize_prompt(const PromptTemplates& templates, std::span<const AgentTurn> turns) {
    std::string responses;
    for (const auto& turn : turns) {
        if (!responses.empty()) responses += "\n\n";
        responses += "### " + turn.display_name + "\n" + turn.response;
    }
    std::pair<std::string_view, std::string_view> values[] = {{"responses", responses}};
    return render_template(templates.summarize, values);
}

// --- panel ---------------------------------------------------------------

void PanelConfig::validate() const {
    if (debaters.size() < 2) throw InvalidArgument("a panel needs at least two debaters");
    if (rounds < 0) throw InvalidArgument("rounds must be >= 0");
    std::vector<backends::BackendSpec> specs;
    auto check_agent = [&](const AgentSpec& a, const std::string& what) {
        a.backend.validate();
        if (a.model_id.empty()) throw InvalidArgument(what + ": model_id is empty");
        if (a.display_name.empty()) throw InvalidArgument(what + ": display_name is empty");
        if (a.temperature < 0 || a.temperature > backends::kMaxTemperature)
            throw InvalidArgument(what + ": temperature out of range");
        if (a.max_tokens < 1 || a.max_tokens > backends::kMaxTokensLimit)
            throw InvalidArgument(what + ": max_tokens out of range");
        auto same = std::find_if(specs.begin(), specs.end(),
                                 [&](const auto& s) { return s.backend_id == a.backend.backend_id; });
        if (same == specs.end())
            specs.push_back(a.backend);
        else if (!(*same == a.backend))
            throw InvalidArgument("backend id '" + a.backend.backend_id + "' is bound to two different specs");
    };
    for (std::size_t i = 0; i < debaters.size(); ++i) {
        if (debaters[i].agent_index != static_cast<int>(i))
            throw InvalidArgument("debater " + std::to_string(i) + " has agent_index " +
                                  std::to_string(debaters[i].agent_index));
        check_agent(debaters[i], "debater " + std::to_string(i));
    }
    check_agent(summarizer, "summarizer");
    prompts.validate();
}

std::string PanelConfig::fingerprint() const {
    serialization::Json j = {{"version", "debate-panel-v1"}, {"panel", serialization::to_json(*this)}};
    return util::sha256_hex(j.dump());
}

// --- engine --------------------------------------------------------------

DebateAborted::DebateAborted(int round, int agent, std::string cause, DebateTranscript partial)
    : Error("debate aborted at round " + std::to_string(round) +
            (agent < 0 ? std::string(" (summarizer)") : " (agent " + std::to_string(agent) + ")") + ": " + cause),
      round_(round), agent_(agent), cause_(std::move(cause)), partial_(std::move(partial)) {}

namespace {

ChatResponse call(backends::Backend& backend, const ChatRequest& request,
                  const std::optional<std::filesystem::path>& cache_dir) {
    if (cache_dir && backend.spec().is_remote()) return backends::cached_complete(backend, request, *cache_dir);
    return backend.complete(request);
}

ChatRequest request_for(const AgentSpec& agent, std::vector<Message> messages) {
    return ChatRequest(agent.model_id, std::move(messages), agent.temperature, agent.max_tokens, agent.seed);
}

} // namespace

ChatResponse summarize_round(backends::Backend& summarizer, const AgentSpec& spec, const PromptTemplates& templates,
                             std::span<const AgentTurn> turns, const std::optional<std::filesystem::path>& cache_dir) {
    std::string prompt = render_summarize_prompt(templates, turns);
    return call(summarizer, request_for(spec, {{Role::user, prompt}}), cache_dir);
}

ChatResponse summarize_round(const AgentSpec& summarizer, const PromptTemplates& templates,
                             std::span<const AgentTurn> turns, std::shared_ptr<backends::Runtime> runtime) {
    auto backend = backends::make_backend(summarizer.backend, std::move(runtime));
    return summarize_round(*backend, summarizer, templates, turns);
}

std::optional<grading::CanonicalAnswer> final_answer(const DebateTranscript& transcript, FinalPolicy policy) {
    if (transcript.rounds.empty()) return std::nullopt;
    const RoundRecord& last = transcript.rounds.back();
    if (policy == FinalPolicy::summary) return grading::extract_answer(last.summary);
    std::vector<std::optional<grading::CanonicalAnswer>> answers;
    for (const auto& turn : last.turns) answers.push_back(turn.extracted);
    return grading::mode(answers);
}

DebateTranscript run_debate(const Problem& problem, const PanelConfig& panel,
                            std::shared_ptr<backends::Runtime> runtime, const DebateOptions& options) {
    panel.validate();

    DebateTranscript t;
    t.question_id = problem.question_id;
    t.question_text = problem.question_text;
    t.gold = problem.gold_answer;
    t.config_fingerprint = panel.fingerprint();
    t.final.policy = panel.final_policy;

    const std::size_t n = panel.debaters.size();
    std::vector<std::unique_ptr<backends::Backend>> debaters;
    for (const auto& d : panel.debaters) debaters.push_back(backends::make_backend(d.backend, runtime));
    auto summarizer = backends::make_backend(panel.summarizer.backend, runtime);
    std::vector<std::vector<Message>> histories(n);

    auto abort = [&](int round, int agent, std::string cause) -> DebateAborted {
        t.status = TranscriptStatus::incomplete;
        t.failure = cause;
        return DebateAborted(round, agent, std::move(cause), t);
    };

    for (int r = 0; r <= panel.rounds; ++r) {
        std::vector<std::string> prompts(n);
        for (std::size_t i = 0; i < n; ++i) {
            prompts[i] = r == 0 ? render_initial_prompt(panel.prompts, problem.question_text, panel.cot_mode)
                                : render_debate_prompt(panel.prompts, problem.question_text,
                                                       t.rounds.back().summary, panel.cot_mode);
        }

        auto turn_of = [&](std::size_t i) -> ChatResponse {
            std::vector<Message> messages;
            if (panel.memory == AgentMemory::accumulate) messages = histories[i];
            messages.push_back({Role::user, prompts[i]});
            return call(*debaters[i], request_for(panel.debaters[i], std::move(messages)), options.cache_dir);
        };

        std::vector<std::optional<ChatResponse>> responses(n);
        std::vector<std::string> errors(n);
        auto run_one = [&](std::size_t i) {
            try {
                responses[i] = turn_of(i);
            } catch (const Error& e) {
                errors[i] = e.what();
            }
        };
        if (options.parallel_turns && n > 1) {
            std::vector<std::future<void>> futures;
            for (std::size_t i = 0; i < n; ++i) futures.push_back(std::async(std::launch::async, run_one, i));
            for (auto& f : futures) f.get();
        } else {
            for (std::size_t i = 0; i < n; ++i) run_one(i);
        }

        RoundRecord record;
        record.round_index = r;
        for (std::size_t i = 0; i < n; ++i) {
            if (!responses[i]) continue;
            AgentTurn turn;
            turn.agent_index = static_cast<int>(i);
            turn.display_name = panel.debaters[i].display_name;
            turn.prompt = prompts[i];
            turn.response = responses[i]->text;
            turn.extracted = grading::extract_answer(turn.response);
            turn.usage = responses[i]->usage;
            turn.latency_ms = responses[i]->latency_ms;
            record.turns.push_back(std::move(turn));
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (!errors[i].empty()) {
                t.rounds.push_back(std::move(record));
                throw abort(r, static_cast<int>(i), errors[i]);
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            histories[i].push_back({Role::user, prompts[i]});
            histories[i].push_back({Role::assistant, responses[i]->text});
        }

        bool summarize = r < panel.rounds || panel.final_policy == FinalPolicy::summary;
        if (summarize) {
            try {
                auto s = summarize_round(*summarizer, panel.summarizer, panel.prompts, record.turns, options.cache_dir);
                if (blank(s.text)) throw EmptySummary();
                record.summary = std::move(s.text);
                record.summary_usage = s.usage;
                record.summary_latency_ms = s.latency_ms;
            } catch (const Error& e) {
                t.rounds.push_back(std::move(record));
                throw abort(r, -1, e.what());
            }
        }
        t.rounds.push_back(std::move(record));
    }

    t.final.answer = final_answer(t, panel.final_policy);
    t.final.source_round = panel.rounds;
    t.status = TranscriptStatus::complete;
    return t;
}

} // namespace debate::protocol
