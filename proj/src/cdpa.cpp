#include "calign/cdpa.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include <nlohmann/json.hpp>

#include "calign/reward.hpp"

namespace calign {

void check_partition(const TokenizedResponse& response) {
    const int c = response.length();
    if (c == 0) throw ShapeError("response has no tokens");
    if (response.step_boundaries.empty()) throw ShapeError("response has no step boundaries");
    int cursor = 0;
    for (const auto& [start, end] : response.step_boundaries) {
        if (start != cursor) {
            throw ShapeError("step boundary starts at " + std::to_string(start) + ", expected " +
                             std::to_string(cursor));
        }
        if (end <= start) throw ShapeError("empty step boundary at token " + std::to_string(start));
        cursor = end;
    }
    if (cursor != c) {
        throw ShapeError("step boundaries cover " + std::to_string(cursor) + " of " + std::to_string(c) +
                         " tokens");
    }
}

void to_json(json& j, const TokenizedResponse& r) {
    json bounds = json::array();
    for (const auto& [s, e] : r.step_boundaries) bounds.push_back(json::array({s, e}));
    j = json{{"tokens", r.tokens}, {"length", r.length()}, {"step_boundaries", bounds}};
    if (!r.text.empty()) j["text"] = r.text;
}

void from_json(const json& j, TokenizedResponse& r) {
    j.at("tokens").get_to(r.tokens);
    r.step_boundaries.clear();
    for (const auto& b : j.at("step_boundaries")) {
        r.step_boundaries.emplace_back(b.at(0).get<int>(), b.at(1).get<int>());
    }
    r.text = j.value("text", std::string{});
}

void to_json(json& j, const ResponseGroup& g) {
    j = json{{"scenario", g.scenario},
             {"responses", g.responses},
             {"step_rewards", g.step_rewards},
             {"token_rewards", g.token_rewards}};
}

void from_json(const json& j, ResponseGroup& g) {
    j.at("scenario").get_to(g.scenario);
    j.at("responses").get_to(g.responses);
    g.step_rewards = j.value("step_rewards", std::vector<std::vector<double>>{});
    g.token_rewards = j.value("token_rewards", TokenMatrix{});
}

std::vector<double> broadcast_step_rewards(const TokenizedResponse& response,
                                           const std::vector<double>& step_rewards) {
    check_partition(response);
    if (step_rewards.size() != response.step_boundaries.size()) {
        throw ShapeError("got " + std::to_string(step_rewards.size()) + " step rewards for " +
                         std::to_string(response.step_boundaries.size()) + " steps");
    }
    std::vector<double> out(static_cast<size_t>(response.length()), 0.0);
    for (size_t j = 0; j < step_rewards.size(); ++j) {
        const auto& [start, end] = response.step_boundaries[j];
        for (int t = start; t < end; ++t) out[static_cast<size_t>(t)] = step_rewards[j];
    }
    return out;
}

namespace {

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  // population
};

MeanStd mean_std(const std::vector<double>& xs) {
    MeanStd ms;
    if (xs.empty()) return ms;
    for (double x : xs) ms.mean += x;
    ms.mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - ms.mean) * (x - ms.mean);
    ms.std = std::sqrt(var / static_cast<double>(xs.size()));
    return ms;
}

void check_group_rewards(const ResponseGroup& group) {
    if (group.token_rewards.size() != group.responses.size()) {
        throw ShapeError("token_rewards rows != responses");
    }
    for (size_t i = 0; i < group.responses.size(); ++i) {
        if (static_cast<int>(group.token_rewards[i].size()) != group.responses[i].length()) {
            throw ShapeError("token_rewards length mismatch for response " + std::to_string(i));
        }
    }
}

}  // namespace

AdvantageMatrix cdpa_advantage(const ResponseGroup& group, double norm_epsilon, RaggedPolicy ragged) {
    if (!(norm_epsilon > 0.0)) throw DomainError("norm_epsilon must be > 0");
    check_group_rewards(group);
    AdvantageMatrix adv(group.responses.size());
    for (size_t i = 0; i < group.responses.size(); ++i) {
        adv[i].assign(group.token_rewards[i].size(), 0.0);
    }

    if (ragged == RaggedPolicy::Global) {
        std::vector<double> pooled;
        for (const auto& row : group.token_rewards) pooled.insert(pooled.end(), row.begin(), row.end());
        const MeanStd ms = mean_std(pooled);
        for (size_t i = 0; i < adv.size(); ++i) {
            for (size_t t = 0; t < adv[i].size(); ++t) {
                adv[i][t] = (group.token_rewards[i][t] - ms.mean) / (ms.std + norm_epsilon);
            }
        }
        return adv;
    }

    size_t max_len = 0;
    for (const auto& row : group.token_rewards) max_len = std::max(max_len, row.size());
    for (size_t p = 0; p < max_len; ++p) {
        std::vector<double> at_position;
        for (const auto& row : group.token_rewards) {
            if (p < row.size()) at_position.push_back(row[p]);
        }
        if (at_position.size() < 2) continue;  // advantage stays 0
        const MeanStd ms = mean_std(at_position);
        for (size_t i = 0; i < adv.size(); ++i) {
            if (p < adv[i].size()) {
                adv[i][p] = (group.token_rewards[i][p] - ms.mean) / (ms.std + norm_epsilon);
            }
        }
    }
    return adv;
}

std::vector<double> grpo_os_advantage(const std::vector<double>& final_rewards, double delta) {
    if (final_rewards.size() < 2) throw DomainError("grpo_os_advantage requires G >= 2");
    if (!(delta > 0.0)) throw DomainError("delta must be > 0");
    const MeanStd ms = mean_std(final_rewards);
    std::vector<double> out(final_rewards.size());
    for (size_t i = 0; i < final_rewards.size(); ++i) {
        out[i] = (final_rewards[i] - ms.mean) / (ms.std + delta);
    }
    return out;
}

std::vector<std::vector<double>> grpo_ps_step_values(const std::vector<std::vector<double>>& step_rewards,
                                                     double delta) {
    if (step_rewards.size() < 2) throw DomainError("grpo_ps requires G >= 2");
    if (!(delta > 0.0)) throw DomainError("delta must be > 0");
    std::vector<double> pooled;
    for (const auto& row : step_rewards) {
        if (row.empty()) throw DomainError("grpo_ps: response with no steps");
        pooled.insert(pooled.end(), row.begin(), row.end());
    }
    const MeanStd ms = mean_std(pooled);
    std::vector<std::vector<double>> values(step_rewards.size());
    for (size_t i = 0; i < step_rewards.size(); ++i) {
        const auto& row = step_rewards[i];
        std::vector<double> normalized(row.size());
        for (size_t jj = 0; jj < row.size(); ++jj) normalized[jj] = (row[jj] - ms.mean) / (ms.std + delta);
        // Suffix sums: value at step j is the sum of normalized rewards j..end.
        std::vector<double> suffix(row.size());
        double acc = 0.0;
        for (size_t jj = row.size(); jj-- > 0;) {
            acc += normalized[jj];
            suffix[jj] = acc;
        }
        values[i] = std::move(suffix);
    }
    return values;
}

TokenMatrix grpo_ps_advantage(const ResponseGroup& group, double delta) {
    if (group.step_rewards.size() != group.responses.size()) {
        throw ShapeError("step_rewards rows != responses");
    }
    const auto values = grpo_ps_step_values(group.step_rewards, delta);
    TokenMatrix adv(group.responses.size());
    for (size_t i = 0; i < group.responses.size(); ++i) {
        const auto& resp = group.responses[i];
        check_partition(resp);
        if (values[i].size() != resp.step_boundaries.size()) {
            throw ShapeError("step reward count mismatch for response " + std::to_string(i));
        }
        adv[i].assign(static_cast<size_t>(resp.length()), 0.0);
        for (size_t jj = 0; jj < resp.step_boundaries.size(); ++jj) {
            const auto& [start, end] = resp.step_boundaries[jj];
            for (int t = start; t < end; ++t) adv[i][static_cast<size_t>(t)] = values[i][jj];
        }
    }
    return adv;
}

TokenMatrix importance_ratio(const PolicyLogProbs& logprobs) {
    if (logprobs.current.size() != logprobs.behavior.size()) {
        throw ShapeError("current/behavior logprob shape mismatch");
    }
    TokenMatrix rho(logprobs.current.size());
    for (size_t i = 0; i < logprobs.current.size(); ++i) {
        if (logprobs.current[i].size() != logprobs.behavior[i].size()) {
            throw ShapeError("current/behavior logprob shape mismatch in response " + std::to_string(i));
        }
        rho[i].resize(logprobs.current[i].size());
        for (size_t t = 0; t < logprobs.current[i].size(); ++t) {
            const double cur = logprobs.current[i][t];
            const double old = logprobs.behavior[i][t];
            if (!(cur <= 0.0) || !(old <= 0.0)) {
                throw DomainError("log-probabilities must be <= 0");
            }
            const double r = std::exp(cur - old);
            if (!std::isfinite(r) || r <= 0.0) {
                throw NumericError("non-finite importance ratio at response " + std::to_string(i) +
                                   " token " + std::to_string(t));
            }
            rho[i][t] = r;
        }
    }
    return rho;
}

double clipped_surrogate(double rho, double advantage, double clip_epsilon) {
    if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) throw DomainError("clip_epsilon must be in (0,1)");
    const double clipped = std::clamp(rho, 1.0 - clip_epsilon, 1.0 + clip_epsilon);
    return std::min(rho * advantage, clipped * advantage);
}

TokenMatrix clipped_surrogate(const TokenMatrix& rho, const AdvantageMatrix& advantages, double clip_epsilon) {
    if (rho.size() != advantages.size()) throw ShapeError("rho/advantage shape mismatch");
    TokenMatrix out(rho.size());
    for (size_t i = 0; i < rho.size(); ++i) {
        if (rho[i].size() != advantages[i].size()) {
            throw ShapeError("rho/advantage shape mismatch in response " + std::to_string(i));
        }
        out[i].resize(rho[i].size());
        for (size_t t = 0; t < rho[i].size(); ++t) {
            out[i][t] = clipped_surrogate(rho[i][t], advantages[i][t], clip_epsilon);
        }
    }
    return out;
}

double kl_divergence(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size() || p.empty()) throw ShapeError("distribution size mismatch");
    double sum_p = 0.0, sum_q = 0.0;
    for (size_t v = 0; v < p.size(); ++v) {
        if (p[v] < 0.0 || q[v] < 0.0) throw DomainError("negative probability");
        sum_p += p[v];
        sum_q += q[v];
    }
    if (std::abs(sum_p - 1.0) > 1e-9 || std::abs(sum_q - 1.0) > 1e-9) {
        throw DomainError("distributions must be normalized");
    }
    double kl = 0.0;
    for (size_t v = 0; v < p.size(); ++v) {
        if (p[v] == 0.0) continue;
        if (q[v] == 0.0) throw DomainError("reference has zero mass where current is positive");
        kl += p[v] * (std::log(p[v]) - std::log(q[v]));
    }
    return kl;
}

double kl_penalty(const std::vector<std::vector<double>>& current,
                  const std::vector<std::vector<double>>& reference) {
    if (current.empty() || current.size() != reference.size()) {
        throw ShapeError("kl_penalty: need matching non-empty distribution lists");
    }
    double total = 0.0;
    for (size_t t = 0; t < current.size(); ++t) total += kl_divergence(current[t], reference[t]);
    return total / static_cast<double>(current.size());
}

double kl_estimate_from_logprobs(const TokenMatrix& current, const TokenMatrix& reference) {
    if (current.size() != reference.size()) throw ShapeError("logprob shape mismatch");
    double total = 0.0;
    size_t count = 0;
    for (size_t i = 0; i < current.size(); ++i) {
        if (current[i].size() != reference[i].size()) {
            throw ShapeError("logprob shape mismatch in response " + std::to_string(i));
        }
        for (size_t t = 0; t < current[i].size(); ++t) {
            total += current[i][t] - reference[i][t];
            ++count;
        }
    }
    if (count == 0) throw DomainError("kl_estimate_from_logprobs: no tokens");
    return total / static_cast<double>(count);
}

double j_cdpa(const ResponseGroup& group, const PolicyLogProbs& logprobs, const AdvantageMatrix& advantages,
              const AlignConfig& config) {
    check_group_rewards(group);
    if (advantages.size() != group.responses.size()) throw ShapeError("advantage rows != responses");
    for (size_t i = 0; i < advantages.size(); ++i) {
        if (static_cast<int>(advantages[i].size()) != group.responses[i].length()) {
            throw ShapeError("advantage length mismatch for response " + std::to_string(i));
        }
    }
    const TokenMatrix rho = importance_ratio(logprobs);
    const TokenMatrix sur = clipped_surrogate(rho, advantages, config.clip_epsilon);
    double total = 0.0;
    for (const auto& row : sur) {
        for (double s : row) total += s;
    }
    const double surrogate = total / static_cast<double>(group.responses.size());
    const double kl = kl_estimate_from_logprobs(logprobs.current, logprobs.reference);
    return surrogate - config.kl_beta * kl;
}

// --- Toy policy ---

int ToyPolicy::context_row(const std::vector<int>& tokens, size_t pos) const {
    if (context_order == 0) return 0;
    if (pos == 0) return vocab_size;  // start-of-sequence row
    return tokens.at(pos - 1);
}

std::vector<double> ToyPolicy::distribution(int row) const {
    const size_t base = static_cast<size_t>(row) * static_cast<size_t>(vocab_size);
    double max_logit = params.at(base);
    for (int v = 1; v < vocab_size; ++v) max_logit = std::max(max_logit, params[base + static_cast<size_t>(v)]);
    std::vector<double> dist(static_cast<size_t>(vocab_size));
    double z = 0.0;
    for (int v = 0; v < vocab_size; ++v) {
        dist[static_cast<size_t>(v)] = std::exp(params[base + static_cast<size_t>(v)] - max_logit);
        z += dist[static_cast<size_t>(v)];
    }
    for (auto& d : dist) d /= z;
    return dist;
}

double ToyPolicy::log_prob(int row, int token) const {
    const size_t base = static_cast<size_t>(row) * static_cast<size_t>(vocab_size);
    double max_logit = params.at(base);
    for (int v = 1; v < vocab_size; ++v) max_logit = std::max(max_logit, params[base + static_cast<size_t>(v)]);
    double z = 0.0;
    for (int v = 0; v < vocab_size; ++v) z += std::exp(params[base + static_cast<size_t>(v)] - max_logit);
    return params.at(base + static_cast<size_t>(token)) - max_logit - std::log(z);
}

ToyPolicy ToyPolicy::uniform(int vocab, int order) {
    if (vocab < 2) throw DomainError("toy vocab must be >= 2");
    if (order != 0 && order != 1) throw DomainError("context_order must be 0 or 1");
    ToyPolicy p;
    p.vocab_size = vocab;
    p.context_order = order;
    p.params.assign(static_cast<size_t>(p.rows()) * static_cast<size_t>(vocab), 0.0);
    return p;
}

void to_json(json& j, const ToyPolicy& p) {
    j = json{{"vocab_size", p.vocab_size}, {"context_order", p.context_order}, {"params", p.params}};
}

void from_json(const json& j, ToyPolicy& p) {
    j.at("vocab_size").get_to(p.vocab_size);
    j.at("context_order").get_to(p.context_order);
    j.at("params").get_to(p.params);
}

std::vector<double> toy_logprobs(const ToyPolicy& policy, const std::vector<int>& tokens) {
    std::vector<double> out(tokens.size());
    for (size_t t = 0; t < tokens.size(); ++t) {
        out[t] = policy.log_prob(policy.context_row(tokens, t), tokens[t]);
    }
    return out;
}

TokenMatrix toy_group_logprobs(const ToyPolicy& policy, const ResponseGroup& group) {
    TokenMatrix out(group.responses.size());
    for (size_t i = 0; i < group.responses.size(); ++i) {
        out[i] = toy_logprobs(policy, group.responses[i].tokens);
    }
    return out;
}

double mean_target_probability(const ToyPolicy& policy, int target_token) {
    double total = 0.0;
    for (int row = 0; row < policy.rows(); ++row) {
        total += policy.distribution(row)[static_cast<size_t>(target_token)];
    }
    return total / static_cast<double>(policy.rows());
}

ToyPolicy fit_toy_policy_mle(const std::vector<std::vector<int>>& sequences, int vocab_size,
                             int context_order) {
    ToyPolicy policy = ToyPolicy::uniform(vocab_size, context_order);
    std::vector<double> counts(policy.params.size(), 1.0);  // Laplace smoothing
    for (const auto& seq : sequences) {
        for (size_t t = 0; t < seq.size(); ++t) {
            const int tok = seq[t];
            if (tok < 0 || tok >= vocab_size) throw DomainError("token id out of vocabulary");
            const int row = policy.context_row(seq, t);
            counts[static_cast<size_t>(row) * static_cast<size_t>(vocab_size) + static_cast<size_t>(tok)] +=
                1.0;
        }
    }
    for (size_t k = 0; k < counts.size(); ++k) policy.params[k] = std::log(counts[k]);
    return policy;
}

namespace {

int sample_categorical(const std::vector<double>& dist, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    const double u = uniform(rng);
    double acc = 0.0;
    for (size_t v = 0; v < dist.size(); ++v) {
        acc += dist[v];
        if (u < acc) return static_cast<int>(v);
    }
    return static_cast<int>(dist.size()) - 1;
}

std::vector<std::pair<int, int>> chunk_boundaries(int length, int tokens_per_step) {
    std::vector<std::pair<int, int>> bounds;
    for (int start = 0; start < length; start += tokens_per_step) {
        bounds.emplace_back(start, std::min(length, start + tokens_per_step));
    }
    return bounds;
}

}  // namespace

TokenizedResponse sample_toy_response(const ToyPolicy& policy, std::mt19937_64& rng, int max_len,
                                      int tokens_per_step) {
    if (max_len < 1) throw DomainError("max_len must be >= 1");
    if (tokens_per_step < 1) throw DomainError("tokens_per_step must be >= 1");
    std::uniform_int_distribution<int> length_dist(1, max_len);
    const int length = length_dist(rng);
    TokenizedResponse resp;
    resp.tokens.reserve(static_cast<size_t>(length));
    for (int t = 0; t < length; ++t) {
        const int row = policy.context_row(resp.tokens, static_cast<size_t>(t));
        resp.tokens.push_back(sample_categorical(policy.distribution(row), rng));
    }
    resp.step_boundaries = chunk_boundaries(length, tokens_per_step);
    return resp;
}

ResponseGroup sample_group(const ToyPolicy& policy, const Scenario& scenario, const AlignConfig& config,
                           std::mt19937_64& rng, int max_len, int tokens_per_step) {
    if (config.group_size < 2) throw DomainError("sample_group requires group_size >= 2");
    ResponseGroup group;
    group.scenario = scenario;
    for (int i = 0; i < config.group_size; ++i) {
        group.responses.push_back(sample_toy_response(policy, rng, max_len, tokens_per_step));
    }
    return group;
}

int WordVocab::id_for(const std::string& word) {
    for (size_t i = 0; i < words.size(); ++i) {
        if (words[i] == word) return static_cast<int>(i);
    }
    words.push_back(word);
    return static_cast<int>(words.size()) - 1;
}

ResponseGroup sample_group(Backend& backend, const Scenario& scenario, const AlignConfig& config,
                           const PromptTemplates& templates) {
    if (config.group_size < 2) throw DomainError("sample_group requires group_size >= 2");
    const PromptCall call =
        build_respond_call(templates, scenario, config.sample_temperature, config.group_size);
    const std::vector<std::string> texts = backend.complete(call.messages, call.params);

    ResponseGroup group;
    group.scenario = scenario;
    WordVocab vocab;
    for (const auto& text : texts) {
        const auto steps = split_response_into_steps(text);
        TokenizedResponse resp;
        resp.text = text;
        for (const auto& step : steps) {
            const int start = resp.length();
            std::string word;
            auto flush = [&] {
                if (!word.empty()) {
                    resp.tokens.push_back(vocab.id_for(word));
                    word.clear();
                }
            };
            for (char c : step.text) {
                if (std::isspace(static_cast<unsigned char>(c))) {
                    flush();
                } else {
                    word += c;
                }
            }
            flush();
            if (resp.length() == start) throw SegmentationError("step with no tokens");
            resp.step_boundaries.emplace_back(start, resp.length());
        }
        group.responses.push_back(std::move(resp));
    }
    return group;
}

double toy_objective(const ToyPolicy& policy, const ResponseGroup& group, const TokenMatrix& old_logprobs,
                     const ToyPolicy& ref_policy, const AdvantageMatrix& advantages, const AlignConfig& cfg) {
    if (old_logprobs.size() != group.responses.size() || advantages.size() != group.responses.size()) {
        throw ShapeError("toy_objective: shape mismatch");
    }
    double surrogate = 0.0;
    double kl_sum = 0.0;
    size_t total_tokens = 0;
    for (size_t i = 0; i < group.responses.size(); ++i) {
        const auto& tokens = group.responses[i].tokens;
        if (old_logprobs[i].size() != tokens.size() || advantages[i].size() != tokens.size()) {
            throw ShapeError("toy_objective: shape mismatch in response " + std::to_string(i));
        }
        for (size_t t = 0; t < tokens.size(); ++t) {
            const int row = policy.context_row(tokens, t);
            const double lp = policy.log_prob(row, tokens[t]);
            const double rho = std::exp(lp - old_logprobs[i][t]);
            surrogate += clipped_surrogate(rho, advantages[i][t], cfg.clip_epsilon);
            kl_sum += kl_divergence(policy.distribution(row), ref_policy.distribution(row));
            ++total_tokens;
        }
    }
    if (total_tokens == 0) throw DomainError("toy_objective: no tokens");
    return surrogate / static_cast<double>(group.responses.size()) -
           cfg.kl_beta * (kl_sum / static_cast<double>(total_tokens));
}

std::vector<double> toy_policy_grad(const ToyPolicy& policy, const ResponseGroup& group,
                                    const TokenMatrix& old_logprobs, const ToyPolicy& ref_policy,
                                    const AdvantageMatrix& advantages, const AlignConfig& cfg) {
    std::vector<double> grad(policy.params.size(), 0.0);
    const double inv_g = 1.0 / static_cast<double>(group.responses.size());
    size_t total_tokens = 0;
    for (const auto& resp : group.responses) total_tokens += resp.tokens.size();
    if (total_tokens == 0) throw DomainError("toy_policy_grad: no tokens");
    const double inv_n = 1.0 / static_cast<double>(total_tokens);
    const int vocab = policy.vocab_size;

    for (size_t i = 0; i < group.responses.size(); ++i) {
        const auto& tokens = group.responses[i].tokens;
        for (size_t t = 0; t < tokens.size(); ++t) {
            const int row = policy.context_row(tokens, t);
            const size_t base = static_cast<size_t>(row) * static_cast<size_t>(vocab);
            const std::vector<double> dist = policy.distribution(row);
            const double lp = policy.log_prob(row, tokens[t]);
            const double rho = std::exp(lp - old_logprobs[i][t]);
            const double adv = advantages[i][t];
            const double unclipped = rho * adv;
            const double clipped =
                std::clamp(rho, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon) * adv;
            if (unclipped <= clipped) {
                // d/dz_v [rho * adv] = adv * rho * (1[v = y] - p_v)
                for (int v = 0; v < vocab; ++v) {
                    const double indicator = (v == tokens[t]) ? 1.0 : 0.0;
                    grad[base + static_cast<size_t>(v)] +=
                        inv_g * adv * rho * (indicator - dist[static_cast<size_t>(v)]);
                }
            }
            // Exact KL term: dKL/dz_v = p_v (log p_v - log q_v - KL).
            const std::vector<double> ref_dist = ref_policy.distribution(row);
            double kl = 0.0;
            for (int v = 0; v < vocab; ++v) {
                kl += dist[static_cast<size_t>(v)] *
                      (std::log(dist[static_cast<size_t>(v)]) - std::log(ref_dist[static_cast<size_t>(v)]));
            }
            for (int v = 0; v < vocab; ++v) {
                const double pv = dist[static_cast<size_t>(v)];
                grad[base + static_cast<size_t>(v)] -=
                    cfg.kl_beta * inv_n * pv *
                    (std::log(pv) - std::log(ref_dist[static_cast<size_t>(v)]) - kl);
            }
        }
    }
    return grad;
}

std::vector<double> SyntheticScorer::step_rewards(const TokenizedResponse& response) const {
    check_partition(response);
    std::vector<double> rewards;
    rewards.reserve(response.step_boundaries.size());
    for (const auto& [start, end] : response.step_boundaries) {
        int hits = 0;
        for (int t = start; t < end; ++t) {
            if (response.tokens[static_cast<size_t>(t)] == target_token) ++hits;
        }
        rewards.push_back(static_cast<double>(hits) / static_cast<double>(end - start));
    }
    return rewards;
}

ToyTrainResult train_toy(const AlignConfig& cfg, const ToyTrainOptions& opts,
                         const std::vector<std::vector<int>>& rft_sequences) {
    if (auto violations = validate_align_config(cfg); !violations.empty()) {
        throw ConfigError("invalid config: " + violations.front());
    }
    if (opts.target_token < 0 || opts.target_token >= opts.vocab_size) {
        throw ConfigError("target_token must be a valid vocabulary id");
    }
    ToyTrainResult result;
    result.init_policy = rft_sequences.empty() ? ToyPolicy::uniform(opts.vocab_size, 1)
                                               : fit_toy_policy_mle(rft_sequences, opts.vocab_size, 1);
    ToyPolicy policy = result.init_policy;
    const ToyPolicy ref = result.init_policy;
    const SyntheticScorer scorer{opts.target_token};
    std::mt19937_64 rng(opts.seed);

    Scenario scenario;
    scenario.preference = Preference{"toy", "synthetic preference", PreferenceForm::Explicit, "toy"};
    scenario.query = Query{"toy", "synthetic query"};

    for (int step = 0; step < opts.steps; ++step) {
        ResponseGroup group = sample_group(policy, scenario, cfg, rng, opts.max_len, opts.tokens_per_step);
        group.step_rewards.clear();
        group.token_rewards.clear();
        for (const auto& resp : group.responses) {
            const auto rewards = scorer.step_rewards(resp);
            group.token_rewards.push_back(broadcast_step_rewards(resp, rewards));
            group.step_rewards.push_back(rewards);
        }
        const AdvantageMatrix adv = cdpa_advantage(group, cfg.norm_epsilon);
        const TokenMatrix old_logprobs = toy_group_logprobs(policy, group);

        const double objective = toy_objective(policy, group, old_logprobs, ref, adv, cfg);
        if (!std::isfinite(objective)) {
            throw NumericError("non-finite objective at step " + std::to_string(step));
        }
        double kl_sum = 0.0;
        size_t n_tokens = 0;
        double abs_adv = 0.0;
        for (size_t i = 0; i < group.responses.size(); ++i) {
            for (size_t t = 0; t < group.responses[i].tokens.size(); ++t) {
                const int row = policy.context_row(group.responses[i].tokens, t);
                kl_sum += kl_divergence(policy.distribution(row), ref.distribution(row));
                abs_adv += std::abs(adv[i][t]);
                ++n_tokens;
            }
        }
        result.metrics.push_back(ToyTrainMetricsRow{step, objective, kl_sum / static_cast<double>(n_tokens),
                                                    abs_adv / static_cast<double>(n_tokens)});

        const std::vector<double> grad = toy_policy_grad(policy, group, old_logprobs, ref, adv, cfg);
        for (size_t k = 0; k < policy.params.size(); ++k) {
            policy.params[k] += opts.learning_rate * grad[k];
        }
    }
    result.final_policy = std::move(policy);
    return result;
}

std::string metrics_to_csv(const std::vector<ToyTrainMetricsRow>& rows) {
    std::string out = "step,objective,kl,mean_abs_adv\n";
    char buf[160];
    for (const auto& row : rows) {
        std::snprintf(buf, sizeof(buf), "%d,%.10g,%.10g,%.10g\n", row.step, row.objective, row.kl,
                      row.mean_abs_adv);
        out += buf;
    }
    return out;
}

}  // namespace calign
