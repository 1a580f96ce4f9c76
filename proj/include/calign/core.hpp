#pragma once
// Shared domain types for the critique-alignment pipeline.
//
// Everything here is an immutable value object once constructed; instances
// can be copied and shared across threads freely. The canonical on-disk
// form for all of these is JSONL (one object per line, UTF-8, LF).

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "calign/errors.hpp"

namespace calign {

using json = nlohmann::json;

enum class PreferenceForm { Explicit, DeepImplicit };

std::string to_string(PreferenceForm form);
PreferenceForm preference_form_from_string(const std::string& s);

// A natural-language preference statement, explicit or deep-implicit.
struct Preference {
    std::string id;
    std::string text;
    PreferenceForm form = PreferenceForm::Explicit;
    std::string domain;  // free-form topic tag
};

struct Query {
    std::string id;
    std::string text;
};

// The unit of data construction: one (preference, query) pair.
struct Scenario {
    Preference preference;
    Query query;
};

// Stable grouping key for a scenario (preference id + query id).
std::string scenario_key(const Scenario& s);

// One reasoning step inside a chain. Indices are 1-based.
struct ReasoningStep {
    int index = 1;
    std::string text;
    std::optional<std::string> persona;  // proposing persona, if known
};

// An ordered root-to-leaf reasoning path. `length` is stored explicitly so
// that inconsistent on-disk data is representable and reportable.
struct ReasoningChain {
    std::string id;
    std::vector<ReasoningStep> steps;
    int length = 0;
};

ReasoningChain make_chain(std::string id, std::vector<std::string> step_texts);

// Critique text plus its scalar quality score in [0,1] for one step.
struct StepAnnotation {
    std::string critique;
    double score = 0.0;
};

// One dataset entry: scenario, chain, per-step annotations, and the chain's
// total score (sum of annotation scores).
struct DatasetRecord {
    Scenario scenario;
    ReasoningChain chain;
    std::vector<StepAnnotation> annotations;
    double total_score = 0.0;
};

// Tunables shared by the tree builder, annotator, and CDPA engine.
struct AlignConfig {
    int group_size = 5;              // G
    double sample_temperature = 1.0;
    double clip_epsilon = 0.2;       // PPO clip band
    double kl_beta = 0.04;           // KL penalty weight
    double norm_epsilon = 1e-4;      // advantage denominator epsilon
    double grpo_delta = 1e-4;        // GRPO baseline denominator delta
    double prune_threshold = 0.6;    // tree value cutoff, kept iff value >= threshold
    int branching = 2;               // proposals per persona per node
    int max_depth = 4;
    int rft_top_k = 1;               // chains kept per scenario for D_RFT
};

// Returns one message per violated AlignConfig invariant; empty means valid.
std::vector<std::string> validate_align_config(const AlignConfig& cfg);

// Returns every invariant violation found in the record; empty means ok.
// Violations are data, not failures: nothing throws here.
std::vector<std::string> validate_record(const DatasetRecord& record);

// Total score may drift from the stored sum by at most this much.
inline constexpr double kTotalScoreTolerance = 1e-12;

// --- JSON serialization (nlohmann-style ADL hooks) ---

void to_json(json& j, const Preference& p);
void from_json(const json& j, Preference& p);
void to_json(json& j, const Query& q);
void from_json(const json& j, Query& q);
void to_json(json& j, const Scenario& s);
void from_json(const json& j, Scenario& s);
void to_json(json& j, const ReasoningStep& s);
void from_json(const json& j, ReasoningStep& s);
void to_json(json& j, const ReasoningChain& c);
void from_json(const json& j, ReasoningChain& c);
void to_json(json& j, const StepAnnotation& a);
void from_json(const json& j, StepAnnotation& a);
void to_json(json& j, const DatasetRecord& r);
void from_json(const json& j, DatasetRecord& r);
void to_json(json& j, const AlignConfig& c);
void from_json(const json& j, AlignConfig& c);

// --- JSONL file I/O ---

std::vector<json> read_jsonl(const std::string& path);
void write_jsonl(const std::string& path, const std::vector<json>& lines);
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace calign
