#pragma once
// Generative process-reward facade: critique-then-score generation for
// response steps, the score-extraction grammar, the decomposed SFT loss,
// and dense reward aggregation.
//
// Score grammar: a critique carries exactly one score line, of the form
//     Score: <d>
// where <d> is a decimal in [0,1] with at most 4 fractional digits, and the
// score line must be the last non-empty line of the text. The grammar is
// deliberately rigid so that parsing failures are loud.

#include <memory>
#include <string>
#include <vector>

#include "calign/backend.hpp"
#include "calign/core.hpp"
#include "calign/prompts.hpp"

namespace calign {

// Strict score extraction. Throws ParseError (missing / duplicate /
// misplaced score line, with line numbers; more than 4 fractional digits)
// or RangeError (value outside [0,1]).
double extract_score(const std::string& critique);

// Lenient variant for valuation paths that clamp instead of reject: the
// line-shape rules still apply, but the value may be any decimal.
double extract_score_raw(const std::string& critique);

// Renders a score as its canonical final line, e.g. "Score: 0.83".
// The value must be finite and in [0,1].
std::string format_score(double score);

// Removes the final score line, returning the critique text proper.
std::string strip_score_line(const std::string& critique);

// Per-token log-probabilities for one record's critique-score pairs,
// segmented by step. Houses the two factors of the decomposed SFT loss.
struct SegmentedLogProbs {
    struct Step {
        std::vector<double> critique_logprobs;
        std::vector<double> score_logprobs;
    };
    std::vector<Step> steps;
};

// Negative mean (over the batch) of the summed critique and score
// log-likelihoods. Always >= 0; positive log-probabilities are a DomainError.
double sft_loss(const std::vector<SegmentedLogProbs>& batch);

// Sum of step scores: the chain's dense reward.
double dense_reward(const std::vector<StepAnnotation>& annotations);

// Splits a response into reasoning steps: on "Step k:" headers when any are
// present, otherwise on blank-line-delimited paragraphs. Never returns empty
// steps; whitespace-only input is a SegmentationError.
std::vector<ReasoningStep> split_response_into_steps(const std::string& response);

// One critique-then-score generation round-trip: runs the call, extracts the
// score strictly, and returns (critique without score line, score).
StepAnnotation critique_and_score(Backend& backend, const PromptCall& call);

// Scores every step of a policy response with prefix conditioning
// (preference, query, steps 1..j), in ascending j.
std::vector<StepAnnotation> score_response(Backend& backend, const Preference& preference, const Query& query,
                                           const std::vector<ReasoningStep>& response_steps,
                                           const PromptTemplates& templates);

}  // namespace calign
