#pragma once
// Command-line orchestration: one TOML config file, named backends per
// role, and the five pipeline commands. Every command validates its inputs
// before touching the filesystem, and mock (scripted) runs under a fixed
// seed are byte-identical.

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "calign/annotate.hpp"
#include "calign/backend.hpp"
#include "calign/cdpa.hpp"
#include "calign/core.hpp"
#include "calign/metrics.hpp"
#include "calign/prompts.hpp"

namespace calign {

struct PipelineConfig {
    std::uint64_t seed = 0;
    int jobs = 1;
    bool strict = false;
    AlignConfig align;

    std::string scenarios_path;
    std::string work_dir = "work";
    std::string out_dir = "out";

    // Named backends: generator, evaluator, reward_model, judge. A role not
    // present falls back to "default". The override_script, when set (mock
    // mode), routes every role to one shared scripted backend.
    std::map<std::string, BackendSpec> backends;
    std::string override_script;

    // Per-role template file overrides (propose, value, critique, prm,
    // judge, respond); roles not listed use the built-in defaults.
    std::map<std::string, std::string> prompt_files;

    ToyTrainOptions toy;
};

// Parses the TOML config and checks that every referenced file exists.
// Throws ConfigError on any problem; nothing is written.
PipelineConfig load_pipeline_config(const std::string& path);

PromptTemplates load_templates(const PipelineConfig& config);

// Resolves a role to a live backend. Scripted backends are shared per
// script path so FIFO/cycle state is consistent within a run.
class BackendRegistry {
public:
    explicit BackendRegistry(const PipelineConfig& config) : config_(config) {}
    std::shared_ptr<Backend> for_role(const std::string& role);

private:
    const PipelineConfig& config_;
    std::map<std::string, std::shared_ptr<Backend>> by_script_;
};

// Output file names (under work_dir / out_dir).
inline constexpr const char* kTreesFileName = "trees.jsonl";
inline constexpr const char* kScoredGroupsFileName = "scored_groups.jsonl";
inline constexpr const char* kVerdictsFileName = "verdicts.jsonl";
inline constexpr const char* kMetricsFileName = "metrics.json";
inline constexpr const char* kToyMetricsFileName = "toy_metrics.csv";
inline constexpr const char* kToyPolicyFileName = "toy_policy.json";
inline constexpr const char* kRftChatFileName = "rft_chat.jsonl";

struct BuildTreesSummary {
    size_t scenarios = 0;
    size_t nodes = 0;
    size_t paths = 0;
    size_t failures = 0;
};
BuildTreesSummary cmd_build_trees(const PipelineConfig& config);

DatasetCounts cmd_annotate(const PipelineConfig& config);

struct ScoreSummary {
    size_t groups = 0;
    size_t responses = 0;
    size_t errors = 0;
};
ScoreSummary cmd_score(const PipelineConfig& config, const std::string& responses_path);

struct TrainToySummary {
    double init_target_probability = 0.0;
    double final_target_probability = 0.0;
    int steps = 0;
};
TrainToySummary cmd_train_toy(const PipelineConfig& config);

struct EvaluateSummary {
    MetricsReport report;
    size_t judged = 0;
    size_t excluded = 0;  // judge outputs that failed to parse
};
EvaluateSummary cmd_evaluate(const PipelineConfig& config, const std::string& responses_path);

struct ExportSummary {
    size_t records = 0;
};
ExportSummary cmd_export_rft(const PipelineConfig& config);

// "Step 1: ...\nStep 2: ..." rendering used by the RFT export and by tests.
std::string render_chain_with_headers(const ReasoningChain& chain);

// Deterministic word -> toy-vocabulary token mapping (FNV-1a mod vocab).
int toy_token_for_word(const std::string& word, int vocab_size);

}  // namespace calign
