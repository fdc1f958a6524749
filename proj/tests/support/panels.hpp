#pragma once

// Deterministic panels built from mock backends, shared by the protocol,
// harness and acceptance suites.

#include "debate/backends.hpp"
#include "debate/grading.hpp"
#include "debate/problem.hpp"
#include "debate/protocol.hpp"

#include <memory>
#include <string>
#include <vector>

namespace debate::testing {

inline std::shared_ptr<backends::Runtime> offline_runtime() {
    auto rt = std::make_shared<backends::Runtime>();
    rt->clock = std::make_shared<backends::VirtualClock>();
    rt->recorder = std::make_shared<backends::CallRecorder>();
    rt->getenv = [](const std::string&) -> std::optional<std::string> { return std::nullopt; };
    return rt;
}

inline std::string agent_name(int i) { return std::string("Agent ") + static_cast<char>('A' + i); }

inline protocol::AgentSpec agent(int index, backends::BackendSpec backend, double temperature = 1.0) {
    protocol::AgentSpec a;
    a.agent_index = index;
    a.backend = std::move(backend);
    a.display_name = index < 0 ? "Summarizer" : agent_name(index);
    a.model_id = "mock-model";
    a.temperature = temperature;
    a.max_tokens = 256;
    return a;
}

/// Debater i plays scripts[i]; the summarizer emits "Summary of round r ... \boxed{summary_answer}".
inline protocol::PanelConfig scripted_panel(const std::vector<std::vector<std::string>>& scripts, int rounds,
                                            protocol::FinalPolicy policy = protocol::FinalPolicy::mode,
                                            const std::string& summary_answer = "0") {
    protocol::PanelConfig panel;
    for (std::size_t i = 0; i < scripts.size(); ++i) {
        int idx = static_cast<int>(i);
        panel.debaters.push_back(agent(idx, backends::mock_scripted("mock-debater-" + std::to_string(i), scripts[i])));
    }
    std::vector<std::string> summaries;
    for (int r = 0; r <= rounds; ++r)
        summaries.push_back("Summary of round " + std::to_string(r) + " [marker-S" + std::to_string(r) +
                            "]. Best answer: \\boxed{" + summary_answer + "}");
    panel.summarizer = agent(-1, backends::mock_scripted("mock-summarizer", summaries), 0.0);
    panel.summarizer.agent_index = 0;
    panel.rounds = rounds;
    panel.final_policy = policy;
    return panel;
}

/// Every debater answers `answer` in every round.
inline protocol::PanelConfig constant_panel(int debaters, int rounds, const std::string& answer,
                                            protocol::FinalPolicy policy = protocol::FinalPolicy::mode) {
    std::vector<std::vector<std::string>> scripts;
    for (int i = 0; i < debaters; ++i)
        scripts.push_back({"Agent " + std::to_string(i) + " [marker-A" + std::to_string(i) +
                           "] reasons carefully. The answer is \\boxed{" + answer + "}."});
    return scripted_panel(scripts, rounds, policy, answer);
}

inline Problem make_problem(std::string id, std::string question, std::string gold) {
    Problem p;
    p.question_id = std::move(id);
    p.question_text = std::move(question);
    p.gold_answer = grading::normalize(gold);
    p.dataset = DatasetName::gsm8k;
    return p;
}

inline std::string boxed(const std::string& answer) { return "I think it through. \\boxed{" + answer + "}"; }

} // namespace debate::testing
