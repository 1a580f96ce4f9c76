#pragma once
// Numerical core of critique-driven policy alignment: step-to-token reward
// broadcast, per-position group-normalized advantages, the outcome- and
// process-supervision baselines, the clipped surrogate with KL penalty, and
// a small differentiable softmax policy for end-to-end gradient checks.
//
// All functions here are pure over value inputs and freely parallel.

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "calign/backend.hpp"
#include "calign/core.hpp"
#include "calign/prompts.hpp"

namespace calign {

// Ragged per-response, per-token values.
using TokenMatrix = std::vector<std::vector<double>>;
using AdvantageMatrix = TokenMatrix;

// A response as token ids plus a partition of those tokens into reasoning
// steps (half-open [start, end) ranges covering the whole sequence).
struct TokenizedResponse {
    std::vector<int> tokens;
    std::vector<std::pair<int, int>> step_boundaries;
    std::string text;  // original text, when the response came from a backend

    int length() const { return static_cast<int>(tokens.size()); }
};

// Throws ShapeError unless step_boundaries exactly partitions the tokens.
void check_partition(const TokenizedResponse& response);

// The CDPA working set: G responses with their step and token rewards.
struct ResponseGroup {
    Scenario scenario;
    std::vector<TokenizedResponse> responses;
    std::vector<std::vector<double>> step_rewards;  // per response, per step
    TokenMatrix token_rewards;                      // per response, per token
};

void to_json(json& j, const TokenizedResponse& r);
void from_json(const json& j, TokenizedResponse& r);
void to_json(json& j, const ResponseGroup& g);
void from_json(const json& j, ResponseGroup& g);

// Log-probs of the sampled tokens under the current, behavior, and
// reference policies. All entries <= 0; shapes match the group.
struct PolicyLogProbs {
    TokenMatrix current;    // pi_theta
    TokenMatrix behavior;   // pi_old
    TokenMatrix reference;  // pi_ref
};

// Every token in step j receives that step's reward.
std::vector<double> broadcast_step_rewards(const TokenizedResponse& response,
                                           const std::vector<double>& step_rewards);

// How to normalize positions that not all responses reach.
//   Subset: statistics over the responses that reach the position; fewer
//           than two reaching responses means advantage 0 there.
//   Global: one mean/std pooled over every token in the group.
enum class RaggedPolicy { Subset, Global };

// Per-position group normalization of token rewards: (r - mu)/(sigma + eps)
// with population standard deviation.
AdvantageMatrix cdpa_advantage(const ResponseGroup& group, double norm_epsilon,
                               RaggedPolicy ragged = RaggedPolicy::Subset);

// Outcome supervision: normalized final reward, one scalar per response
// (broadcast to its tokens by the caller).
std::vector<double> grpo_os_advantage(const std::vector<double>& final_rewards, double delta);

// Process supervision: normalize all step rewards jointly over the group,
// then each token's advantage is the suffix sum of its own response's
// normalized step rewards from its step onward.
TokenMatrix grpo_ps_advantage(const ResponseGroup& group, double delta);
// The per-step suffix values underlying grpo_ps_advantage.
std::vector<std::vector<double>> grpo_ps_step_values(const std::vector<std::vector<double>>& step_rewards,
                                                     double delta);

// rho_t = exp(log pi_theta - log pi_old); must come out finite and > 0.
TokenMatrix importance_ratio(const PolicyLogProbs& logprobs);

double clipped_surrogate(double rho, double advantage, double clip_epsilon);
TokenMatrix clipped_surrogate(const TokenMatrix& rho, const AdvantageMatrix& advantages, double clip_epsilon);

// KL(p || q) for one pair of distributions over the same support.
double kl_divergence(const std::vector<double>& p, const std::vector<double>& q);

// Mean per-token exact KL over full distributions (toy mode).
double kl_penalty(const std::vector<std::vector<double>>& current,
                  const std::vector<std::vector<double>>& reference);

// First-order sample estimate used when only log-probs exist: the mean of
// (log pi_theta - log pi_ref) over sampled tokens. An estimate, not a KL.
double kl_estimate_from_logprobs(const TokenMatrix& current, const TokenMatrix& reference);

// (1/G) sum_i sum_t clipped_surrogate - beta * KL, with the sample-based KL
// estimate (full distributions are not available from logprobs alone).
double j_cdpa(const ResponseGroup& group, const PolicyLogProbs& logprobs, const AdvantageMatrix& advantages,
              const AlignConfig& config);

// --- Toy policy: a tabular softmax language model over a small vocabulary ---

struct ToyPolicy {
    int vocab_size = 8;
    int context_order = 1;       // 0 = unigram, 1 = bigram with a start row
    std::vector<double> params;  // row-major logits, rows() x vocab_size

    int rows() const { return context_order == 0 ? 1 : vocab_size + 1; }
    // Context row for position pos in a token sequence; the extra last row
    // is the start-of-sequence context for order 1.
    int context_row(const std::vector<int>& tokens, size_t pos) const;
    std::vector<double> distribution(int row) const;  // softmax of one row
    double log_prob(int row, int token) const;

    static ToyPolicy uniform(int vocab, int order);
};

void to_json(json& j, const ToyPolicy& p);
void from_json(const json& j, ToyPolicy& p);

// Log-probs of each sampled token in the sequence under the policy.
std::vector<double> toy_logprobs(const ToyPolicy& policy, const std::vector<int>& tokens);
TokenMatrix toy_group_logprobs(const ToyPolicy& policy, const ResponseGroup& group);

// Mean probability of one token across all context rows.
double mean_target_probability(const ToyPolicy& policy, int target_token);

// Laplace-smoothed maximum-likelihood fit to token sequences.
ToyPolicy fit_toy_policy_mle(const std::vector<std::vector<int>>& sequences, int vocab_size,
                             int context_order);

// Samples one response: length uniform on [1, max_len], tokens from the
// policy, steps chunked to at most tokens_per_step tokens.
TokenizedResponse sample_toy_response(const ToyPolicy& policy, std::mt19937_64& rng, int max_len,
                                      int tokens_per_step);

// Samples an unscored group of config.group_size responses from the policy.
ResponseGroup sample_group(const ToyPolicy& policy, const Scenario& scenario, const AlignConfig& config,
                           std::mt19937_64& rng, int max_len, int tokens_per_step);

// Samples an unscored group from a chat backend: G completions, split into
// steps, tokenized over whitespace words with a shared incremental vocab.
ResponseGroup sample_group(Backend& backend, const Scenario& scenario, const AlignConfig& config,
                           const PromptTemplates& templates);

// Deterministic word->id mapping built in first-seen order.
struct WordVocab {
    std::vector<std::string> words;
    int id_for(const std::string& word);
};

// The CDPA objective for the toy policy, with ratios against recorded
// behavior log-probs and an exact KL penalty against ref_policy, and its
// analytic gradient with respect to policy.params. Inside the clipped
// branch the surrogate contributes zero gradient; ties take the unclipped
// branch's derivative.
double toy_objective(const ToyPolicy& policy, const ResponseGroup& group, const TokenMatrix& old_logprobs,
                     const ToyPolicy& ref_policy, const AdvantageMatrix& advantages, const AlignConfig& cfg);
std::vector<double> toy_policy_grad(const ToyPolicy& policy, const ResponseGroup& group,
                                    const TokenMatrix& old_logprobs, const ToyPolicy& ref_policy,
                                    const AdvantageMatrix& advantages, const AlignConfig& cfg);

// Step rewards that favor one designated token: each step's reward is the
// fraction of its tokens equal to target_token.
struct SyntheticScorer {
    int target_token = 0;
    std::vector<double> step_rewards(const TokenizedResponse& response) const;
};

struct ToyTrainOptions {
    int steps = 200;
    double learning_rate = 0.2;
    int vocab_size = 8;
    int max_len = 6;
    int tokens_per_step = 2;
    int target_token = 3;
    std::uint64_t seed = 0;
};

struct ToyTrainMetricsRow {
    int step = 0;
    double objective = 0.0;
    double kl = 0.0;
    double mean_abs_adv = 0.0;
};

struct ToyTrainResult {
    ToyPolicy init_policy;
    ToyPolicy final_policy;
    std::vector<ToyTrainMetricsRow> metrics;
};

// RFT initialization (MLE fit to rft_sequences, uniform when empty), then
// `steps` rounds of sample -> score -> advantage -> one ascent step on the
// objective. pi_old refreshes every step; pi_ref stays at initialization.
// A non-finite objective aborts with the step index.
ToyTrainResult train_toy(const AlignConfig& cfg, const ToyTrainOptions& opts,
                         const std::vector<std::vector<int>>& rft_sequences);

// CSV rendering of the metrics table, header "step,objective,kl,mean_abs_adv".
std::string metrics_to_csv(const std::vector<ToyTrainMetricsRow>& rows);

}  // namespace calign
