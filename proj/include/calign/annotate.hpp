#pragma once
// Stage-two annotation: step-wise critique and scoring of extracted chains,
// selection of the highest-total-score chains per scenario, and dataset
// assembly into the two JSONL outputs.

#include <string>
#include <vector>

#include "calign/backend.hpp"
#include "calign/core.hpp"
#include "calign/prompts.hpp"

namespace calign {

// Critiques and scores the last step of the prefix, conditioned on the
// preceding steps. The prefix must hold steps 1..j with step j last.
StepAnnotation annotate_step(Backend& backend, const Scenario& scenario,
                             const std::vector<ReasoningStep>& prefix, const PromptTemplates& templates);

// Annotates every step of the chain in ascending order with prefix
// conditioning; total_score is the sum of the step scores. The first
// failing step aborts the chain with its index in the message. When audit
// is non-null it receives the prefix length used for each call, in order.
DatasetRecord annotate_chain(Backend& backend, const Scenario& scenario, const ReasoningChain& chain,
                             const PromptTemplates& templates, std::vector<int>* audit = nullptr);

// Per scenario, the k records with the highest total_score; ties broken by
// lexicographically smaller chain id. Output preserves input order.
std::vector<DatasetRecord> select_rft(const std::vector<DatasetRecord>& records, int top_k_per_scenario);

struct DatasetCounts {
    size_t rea = 0;  // records written to the full (reward-model) split
    size_t rft = 0;  // records written to the policy-initialization split
};

inline constexpr const char* kReaFileName = "deeppref.rea.jsonl";
inline constexpr const char* kRftFileName = "deeppref.rft.jsonl";

// Writes the full record set and the selected subset under out_dir. The RFT
// split stores only (preference, query, chain) with annotations stripped.
// Idempotent: identical inputs produce byte-identical files.
DatasetCounts assemble_dataset(const std::vector<DatasetRecord>& records, const std::string& out_dir,
                               int top_k_per_scenario);

}  // namespace calign
