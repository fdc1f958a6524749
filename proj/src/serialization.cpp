#include "debate/serialization.hpp"

#include "debate/errors.hpp"

namespace debate::serialization {

using grading::CanonicalAnswer;
using grading::Rational;

namespace {

template <typename T>
T required(const Json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) throw Error(std::string("missing field '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw Error(std::string("field '") + key + "' has the wrong type");
    }
}

template <typename Enum, typename Parse>
Enum required_enum(const Json& j, const char* key, Parse parse) {
    auto name = required<std::string>(j, key);
    auto value = parse(name);
    if (!value) throw Error(std::string("field '") + key + "' has unknown value '" + name + "'");
    return *value;
}

} // namespace

// --- answers -------------------------------------------------------------

Json to_json(const CanonicalAnswer& answer) {
    Json j;
    j["raw"] = answer.raw;
    j["canonical"] = answer.canonical;
    if (answer.numeric) {
        j["numeric"] = {{"num", answer.numeric->num()}, {"den", answer.numeric->den()}};
    } else {
        j["numeric"] = nullptr;
    }
    return j;
}

Json to_json(const std::optional<CanonicalAnswer>& answer) { return answer ? to_json(*answer) : Json(nullptr); }

CanonicalAnswer canonical_answer_from_json(const Json& j) {
    CanonicalAnswer answer;
    answer.raw = required<std::string>(j, "raw");
    answer.canonical = required<std::string>(j, "canonical");
    if (j.contains("numeric") && !j["numeric"].is_null()) {
        auto num = required<std::int64_t>(j["numeric"], "num");
        auto den = required<std::int64_t>(j["numeric"], "den");
        auto value = Rational::checked(num, den);
        if (!value) throw Error("invalid rational in answer");
        answer.numeric = value;
    }
    return answer;
}

std::optional<CanonicalAnswer> optional_answer_from_json(const Json& j) {
    if (j.is_null()) return std::nullopt;
    return canonical_answer_from_json(j);
}

Json to_json(const backends::Usage& usage) {
    return {{"prompt_tokens", usage.prompt_tokens}, {"completion_tokens", usage.completion_tokens}};
}

backends::Usage usage_from_json(const Json& j) {
    return {required<std::int64_t>(j, "prompt_tokens"), required<std::int64_t>(j, "completion_tokens")};
}

// --- configuration -------------------------------------------------------

Json to_json(const backends::BackendSpec& spec) {
    Json j;
    j["backend_id"] = spec.backend_id;
    j["kind"] = backends::to_string(spec.kind);
    if (spec.is_remote()) {
        j["endpoint_url"] = spec.endpoint_url;
        j["credential_env_var"] = spec.credential_env_var;
    }
    j["rate_limit"] = spec.rate_limit;
    j["retry"] = {{"max_attempts", spec.retry.max_attempts},
                  {"base_backoff_ms", spec.retry.base_backoff_ms},
                  {"max_backoff_ms", spec.retry.max_backoff_ms}};
    if (!spec.is_remote()) {
        j["script"] = spec.script;
        j["faults"] = spec.faults;
    }
    return j;
}

backends::BackendSpec backend_spec_from_json(const Json& j) {
    backends::BackendSpec spec;
    spec.backend_id = required<std::string>(j, "backend_id");
    spec.kind = required_enum<backends::BackendKind>(j, "kind", backends::backend_kind_from_string);
    if (j.contains("endpoint_url")) spec.endpoint_url = required<std::string>(j, "endpoint_url");
    if (j.contains("credential_env_var")) spec.credential_env_var = required<std::string>(j, "credential_env_var");
    spec.rate_limit = required<int>(j, "rate_limit");
    const Json& retry = j.at("retry");
    spec.retry = {required<int>(retry, "max_attempts"), required<std::int64_t>(retry, "base_backoff_ms"),
                  required<std::int64_t>(retry, "max_backoff_ms")};
    if (j.contains("script")) spec.script = required<std::vector<std::string>>(j, "script");
    if (j.contains("faults")) spec.faults = required<std::vector<int>>(j, "faults");
    return spec;
}

Json to_json(const protocol::AgentSpec& agent) {
    Json j;
    j["agent_index"] = agent.agent_index;
    j["display_name"] = agent.display_name;
    j["model_id"] = agent.model_id;
    j["temperature"] = agent.temperature;
    j["max_tokens"] = agent.max_tokens;
    j["seed"] = agent.seed ? Json(*agent.seed) : Json(nullptr);
    j["backend"] = to_json(agent.backend);
    return j;
}

protocol::AgentSpec agent_spec_from_json(const Json& j) {
    protocol::AgentSpec agent;
    agent.agent_index = required<int>(j, "agent_index");
    agent.display_name = required<std::string>(j, "display_name");
    agent.model_id = required<std::string>(j, "model_id");
    agent.temperature = required<double>(j, "temperature");
    agent.max_tokens = required<int>(j, "max_tokens");
    if (j.contains("seed") && !j["seed"].is_null()) agent.seed = required<std::int64_t>(j, "seed");
    agent.backend = backend_spec_from_json(j.at("backend"));
    return agent;
}

Json to_json(const protocol::PromptTemplates& prompts) {
    return {{"initial", prompts.initial},
            {"debate", prompts.debate},
            {"summarize", prompts.summarize},
            {"cot_suffix", prompts.cot_suffix},
            {"boxed_instruction", prompts.boxed_instruction},
            {"fingerprint", prompts.fingerprint()}};
}

protocol::PromptTemplates prompt_templates_from_json(const Json& j) {
    protocol::PromptTemplates p;
    p.initial = required<std::string>(j, "initial");
    p.debate = required<std::string>(j, "debate");
    p.summarize = required<std::string>(j, "summarize");
    p.cot_suffix = required<std::string>(j, "cot_suffix");
    p.boxed_instruction = required<std::string>(j, "boxed_instruction");
    return p;
}

Json to_json(const protocol::PanelConfig& panel) {
    Json debaters = Json::array();
    for (const auto& d : panel.debaters) debaters.push_back(to_json(d));
    Json j;
    j["debaters"] = debaters;
    j["summarizer"] = to_json(panel.summarizer);
    j["rounds"] = panel.rounds;
    j["cot_mode"] = protocol::to_string(panel.cot_mode);
    j["final_policy"] = protocol::to_string(panel.final_policy);
    j["agent_memory"] = protocol::to_string(panel.memory);
    j["prompts"] = to_json(panel.prompts);
    return j;
}

protocol::PanelConfig panel_from_json(const Json& j) {
    protocol::PanelConfig panel;
    for (const auto& d : j.at("debaters")) panel.debaters.push_back(agent_spec_from_json(d));
    panel.summarizer = agent_spec_from_json(j.at("summarizer"));
    panel.rounds = required<int>(j, "rounds");
    panel.cot_mode = required_enum<protocol::CotMode>(j, "cot_mode", protocol::cot_mode_from_string);
    panel.final_policy = required_enum<protocol::FinalPolicy>(j, "final_policy", protocol::final_policy_from_string);
    panel.memory = required_enum<protocol::AgentMemory>(j, "agent_memory", protocol::agent_memory_from_string);
    panel.prompts = prompt_templates_from_json(j.at("prompts"));
    return panel;
}

// --- transcripts ---------------------------------------------------------

Json to_json(const protocol::DebateTranscript& t) {
    Json rounds = Json::array();
    for (const auto& r : t.rounds) {
        Json turns = Json::array();
        for (const auto& turn : r.turns) {
            Json tj;
            tj["agent_index"] = turn.agent_index;
            tj["display_name"] = turn.display_name;
            tj["prompt"] = turn.prompt;
            tj["response"] = turn.response;
            tj["extracted"] = to_json(turn.extracted);
            tj["usage"] = to_json(turn.usage);
            tj["latency_ms"] = turn.latency_ms;
            turns.push_back(std::move(tj));
        }
        Json rj;
        rj["round_index"] = r.round_index;
        rj["turns"] = std::move(turns);
        rj["summary"] = r.summary;
        rj["summary_usage"] = to_json(r.summary_usage);
        rj["summary_latency_ms"] = r.summary_latency_ms;
        rounds.push_back(std::move(rj));
    }
    Json j;
    j["question_id"] = t.question_id;
    j["question_text"] = t.question_text;
    j["gold"] = to_json(t.gold);
    j["config_fingerprint"] = t.config_fingerprint;
    j["rounds"] = std::move(rounds);
    j["final"] = {{"policy", protocol::to_string(t.final.policy)},
                  {"answer", to_json(t.final.answer)},
                  {"source_round", t.final.source_round}};
    j["status"] = protocol::to_string(t.status);
    if (!t.failure.empty()) j["failure"] = t.failure;
    return j;
}

protocol::DebateTranscript transcript_from_json(const Json& j) {
    protocol::DebateTranscript t;
    t.question_id = required<std::string>(j, "question_id");
    t.question_text = required<std::string>(j, "question_text");
    t.gold = canonical_answer_from_json(j.at("gold"));
    t.config_fingerprint = required<std::string>(j, "config_fingerprint");
    if (!j.contains("rounds") || !j["rounds"].is_array()) throw Error("missing field 'rounds'");
    for (const auto& rj : j["rounds"]) {
        protocol::RoundRecord r;
        r.round_index = required<int>(rj, "round_index");
        if (!rj.contains("turns") || !rj["turns"].is_array()) throw Error("missing field 'turns'");
        for (const auto& tj : rj["turns"]) {
            protocol::AgentTurn turn;
            turn.agent_index = required<int>(tj, "agent_index");
            turn.display_name = required<std::string>(tj, "display_name");
            turn.prompt = required<std::string>(tj, "prompt");
            turn.response = required<std::string>(tj, "response");
            turn.extracted = optional_answer_from_json(tj.at("extracted"));
            turn.usage = usage_from_json(tj.at("usage"));
            turn.latency_ms = required<std::int64_t>(tj, "latency_ms");
            r.turns.push_back(std::move(turn));
        }
        r.summary = required<std::string>(rj, "summary");
        if (rj.contains("summary_usage")) r.summary_usage = usage_from_json(rj["summary_usage"]);
        if (rj.contains("summary_latency_ms")) r.summary_latency_ms = required<std::int64_t>(rj, "summary_latency_ms");
        t.rounds.push_back(std::move(r));
    }
    const Json& f = j.at("final");
    t.final.policy = required_enum<protocol::FinalPolicy>(f, "policy", protocol::final_policy_from_string);
    t.final.answer = optional_answer_from_json(f.at("answer"));
    t.final.source_round = required<int>(f, "source_round");
    t.status = required_enum<protocol::TranscriptStatus>(j, "status", protocol::transcript_status_from_string);
    if (j.contains("failure")) t.failure = required<std::string>(j, "failure");
    return t;
}

Json to_json(const Problem& p) {
    Json meta = Json::object();
    for (const auto& [k, v] : p.metadata) meta[k] = v;
    return {{"question_id", p.question_id},
            {"question_text", p.question_text},
            {"gold_answer", to_json(p.gold_answer)},
            {"dataset", to_string(p.dataset)},
            {"metadata", meta}};
}

Problem problem_from_json(const Json& j) {
    Problem p;
    p.question_id = required<std::string>(j, "question_id");
    p.question_text = required<std::string>(j, "question_text");
    p.gold_answer = canonical_answer_from_json(j.at("gold_answer"));
    p.dataset = required_enum<DatasetName>(j, "dataset", dataset_name_from_string);
    if (j.contains("metadata"))
        for (const auto& [k, v] : j["metadata"].items()) p.metadata[k] = v.get<std::string>();
    return p;
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

} // namespace debate::serialization
