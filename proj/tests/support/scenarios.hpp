#pragma once

// The 50-question scripted scenario with a hand-computed accuracy curve.
//
// Gold answers: q0-q19 -> 5, q20-q29 -> 3, q30-q34 -> 4, q35-q49 -> 7.
// Every debater plays the same script for every question, so an agent is
// correct at round r exactly on the questions whose gold equals its round-r
// answer.
//
//   round   A        B   C (flips at 3)   summarizer
//   0       5        7   7                3
//   1       (none)   4   7                7
//   2       5        5   7                5
//   3       5        5   5                5
//   4       5        5   5                - (mode policy: no final summary)
//
// Mode per round: r0 {5,7,7} -> 7; r1 {-,4,7} tie -> lowest index -> 4;
// r2..r4 -> 5.

#include "support/panels.hpp"

#include "debate/harness.hpp"

#include <string>
#include <vector>

namespace debate::testing {

inline std::string oracle_gold(int q) {
    if (q < 20) return "5";
    if (q < 30) return "3";
    if (q < 35) return "4";
    return "7";
}

inline std::vector<Problem> oracle_problems() {
    std::vector<Problem> out;
    for (int q = 0; q < 50; ++q) {
        char id[16];
        std::snprintf(id, sizeof id, "q%02d", q);
        out.push_back(make_problem(id, "Scripted question number " + std::to_string(q) + ".", oracle_gold(q)));
    }
    return out;
}

inline protocol::PanelConfig oracle_panel() {
    std::vector<std::vector<std::string>> scripts = {
        {boxed("5"), "I am not sure.", boxed("5"), boxed("5"), boxed("5")},
        {boxed("7"), boxed("4"), boxed("5"), boxed("5"), boxed("5")},
        {boxed("7"), boxed("7"), boxed("7"), boxed("5"), boxed("5")},
    };
    auto panel = scripted_panel(scripts, 4);
    panel.summarizer.backend = backends::mock_scripted(
        "mock-summarizer", {"Round 0 summary. \\boxed{3}", "Round 1 summary. \\boxed{7}", "Round 2 summary. \\boxed{5}",
                            "Round 3 summary. \\boxed{5}", "Round 4 summary. \\boxed{5}"});
    return panel;
}

/// Rows: round 0..4; columns: agent0, agent1, agent2, mode, summary.
inline const int kOracleCurve[5][5] = {
    {20, 15, 15, 15, 10},
    {0, 5, 15, 5, 15},
    {20, 20, 15, 20, 20},
    {20, 20, 20, 20, 20},
    {20, 20, 20, 20, 0},
};

inline std::string oracle_csv() {
    const char* views[] = {"agent0", "agent1", "agent2", "mode", "summary"};
    std::string out(harness::kCurveCsvHeader);
    char buf[64];
    for (int r = 0; r < 5; ++r)
        for (int v = 0; v < 5; ++v) {
            std::snprintf(buf, sizeof buf, "%d,%s,%d,50,%.6f\n", r, views[v], kOracleCurve[r][v],
                          kOracleCurve[r][v] / 50.0);
            out += buf;
        }
    return out;
}

inline harness::ExperimentConfig oracle_config(const std::filesystem::path& output_dir, std::string run_id,
                                               int parallel = 4) {
    harness::ExperimentConfig c;
    c.run_id = std::move(run_id);
    c.panel = oracle_panel();
    c.output_dir = output_dir;
    c.max_parallel_questions = parallel;
    return c;
}

} // namespace debate::testing
