#include "calign/annotate.hpp"

#include <algorithm>
#include <filesystem>
#include <map>

#include <nlohmann/json.hpp>

#include "calign/reward.hpp"

namespace calign {

StepAnnotation annotate_step(Backend& backend, const Scenario& scenario,
                             const std::vector<ReasoningStep>& prefix, const PromptTemplates& templates) {
    if (prefix.empty()) throw DomainError("annotate_step: empty prefix");
    return critique_and_score(backend, build_critique_call(templates, scenario, prefix));
}

DatasetRecord annotate_chain(Backend& backend, const Scenario& scenario, const ReasoningChain& chain,
                             const PromptTemplates& templates, std::vector<int>* audit) {
    if (chain.steps.empty()) throw DomainError("annotate_chain: chain has no steps");
    DatasetRecord record;
    record.scenario = scenario;
    record.chain = chain;
    record.annotations.reserve(chain.steps.size());
    double total = 0.0;
    for (size_t j = 1; j <= chain.steps.size(); ++j) {
        const std::vector<ReasoningStep> prefix(chain.steps.begin(), chain.steps.begin() + static_cast<long>(j));
        if (audit) audit->push_back(static_cast<int>(j));
        try {
            StepAnnotation ann = annotate_step(backend, scenario, prefix, templates);
            total += ann.score;
            record.annotations.push_back(std::move(ann));
        } catch (const ParseError& e) {
            throw ParseError("annotation failed at step " + std::to_string(j) + " of chain " + chain.id +
                                 ": " + e.what(),
                             e.raw);
        }
    }
    record.total_score = total;
    return record;
}

std::vector<DatasetRecord> select_rft(const std::vector<DatasetRecord>& records, int top_k_per_scenario) {
    if (top_k_per_scenario < 1) throw DomainError("select_rft: top_k_per_scenario must be >= 1");

    // Rank record indices within each scenario group.
    std::map<std::string, std::vector<size_t>> groups;
    for (size_t i = 0; i < records.size(); ++i) {
        groups[scenario_key(records[i].scenario)].push_back(i);
    }
    std::vector<bool> selected(records.size(), false);
    for (auto& [key, indices] : groups) {
        (void)key;
        std::sort(indices.begin(), indices.end(), [&](size_t a, size_t b) {
            if (records[a].total_score != records[b].total_score) {
                return records[a].total_score > records[b].total_score;
            }
            return records[a].chain.id < records[b].chain.id;
        });
        const size_t take = std::min(indices.size(), static_cast<size_t>(top_k_per_scenario));
        for (size_t r = 0; r < take; ++r) selected[indices[r]] = true;
    }
    std::vector<DatasetRecord> out;
    for (size_t i = 0; i < records.size(); ++i) {
        if (selected[i]) out.push_back(records[i]);
    }
    return out;
}

DatasetCounts assemble_dataset(const std::vector<DatasetRecord>& records, const std::string& out_dir,
                               int top_k_per_scenario) {
    for (const auto& record : records) {
        if (auto violations = validate_record(record); !violations.empty()) {
            throw DomainError("assemble_dataset: invalid record (chain " + record.chain.id +
                              "): " + violations.front());
        }
    }
    std::filesystem::create_directories(out_dir);

    std::vector<json> rea_lines;
    rea_lines.reserve(records.size());
    for (const auto& record : records) rea_lines.push_back(record);
    write_jsonl((std::filesystem::path(out_dir) / kReaFileName).string(), rea_lines);

    const std::vector<DatasetRecord> rft = select_rft(records, top_k_per_scenario);
    std::vector<json> rft_lines;
    rft_lines.reserve(rft.size());
    for (const auto& record : rft) {
        // The RFT split keeps only the scenario and its best chain.
        rft_lines.push_back(json{{"preference", record.scenario.preference},
                                 {"query", record.scenario.query},
                                 {"chain", record.chain}});
    }
    write_jsonl((std::filesystem::path(out_dir) / kRftFileName).string(), rft_lines);

    return DatasetCounts{records.size(), rft.size()};
}

}  // namespace calign
