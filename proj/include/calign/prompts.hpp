#pragma once
// Prompt templates and request builders.
//
// A template file holds an optional system section and a user section,
// separated by a line containing only "===". Placeholders use {{name}}
// syntax; rendering with a missing variable is a ConfigError. Tests build
// the exact same PromptCall objects the pipeline sends, which is what makes
// fingerprint-scripted replay possible.

#include <map>
#include <string>
#include <vector>

#include "calign/backend.hpp"
#include "calign/core.hpp"

namespace calign {

// Replaces every {{name}} with vars.at(name); unknown names throw ConfigError.
std::string render_template(const std::string& tmpl, const std::map<std::string, std::string>& vars);

// A fully-rendered request: what complete() will be called with.
struct PromptCall {
    std::vector<ChatMessage> messages;
    GenerationParams params;
};

// Splits a template into (system, user) on the "===" delimiter line and
// renders both parts. Without a delimiter the whole text is the user message.
std::vector<ChatMessage> render_chat(const std::string& tmpl, const std::map<std::string, std::string>& vars);

struct PromptTemplates {
    std::string propose;   // persona thought proposal
    std::string value;     // candidate-step valuation
    std::string critique;  // stage-two step critique and scoring
    std::string prm;       // process-reward scoring of policy responses
    std::string judge;     // verdict elicitation
    std::string respond;   // policy response sampling

    static PromptTemplates defaults();
};

// "1. first\n2. second" or "(none)" when empty.
std::string render_numbered(const std::vector<std::string>& lines);

PromptCall build_propose_call(const PromptTemplates& t, const Scenario& scenario,
                              const std::vector<std::string>& path_so_far, const std::string& persona_name,
                              const std::string& persona_charter, int k, double temperature);

PromptCall build_value_call(const PromptTemplates& t, const Scenario& scenario,
                            const std::vector<std::string>& path_so_far, const std::string& thought);

// prefix holds steps 1..j; the last one is the step under evaluation.
PromptCall build_critique_call(const PromptTemplates& t, const Scenario& scenario,
                               const std::vector<ReasoningStep>& prefix);

PromptCall build_prm_call(const PromptTemplates& t, const Preference& preference, const Query& query,
                          const std::vector<ReasoningStep>& prefix);

PromptCall build_judge_call(const PromptTemplates& t, const Preference& preference, const Query& query,
                            const std::string& response);

PromptCall build_respond_call(const PromptTemplates& t, const Scenario& scenario, double temperature, int n);

}  // namespace calign
