#pragma once

// JSON forms of the persisted types. Key order is fixed, so equal values
// always serialize to identical bytes.

#include "debate/backends.hpp"
#include "debate/grading.hpp"
#include "debate/problem.hpp"
#include "debate/protocol.hpp"

#include "json.hpp"

namespace debate::serialization {

using Json = nlohmann::ordered_json;

Json to_json(const grading::CanonicalAnswer& answer);
Json to_json(const std::optional<grading::CanonicalAnswer>& answer);
grading::CanonicalAnswer canonical_answer_from_json(const Json& j);
std::optional<grading::CanonicalAnswer> optional_answer_from_json(const Json& j);

Json to_json(const backends::Usage& usage);
backends::Usage usage_from_json(const Json& j);

/// Includes mock scripts and faults; never includes credential values.
Json to_json(const backends::BackendSpec& spec);
backends::BackendSpec backend_spec_from_json(const Json& j);

Json to_json(const protocol::AgentSpec& agent);
protocol::AgentSpec agent_spec_from_json(const Json& j);

Json to_json(const protocol::PromptTemplates& prompts);
protocol::PromptTemplates prompt_templates_from_json(const Json& j);

Json to_json(const protocol::PanelConfig& panel);
protocol::PanelConfig panel_from_json(const Json& j);

/// The per-question transcript file schema.
Json to_json(const protocol::DebateTranscript& transcript);
/// Throws Error on schema violations.
protocol::DebateTranscript transcript_from_json(const Json& j);

Json to_json(const Problem& problem);
Problem problem_from_json(const Json& j);

/// Two-space indented dump with a trailing newline.
std::string dump(const Json& j);

} // namespace debate::serialization
