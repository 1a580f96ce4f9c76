// critique-align: command-line front end for the critique-driven alignment
// pipeline. Exit codes: 0 success, 1 processing failure, 2 usage/config error.

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "calign/pipeline.hpp"

namespace {

struct GlobalOptions {
    std::string config_path;
    bool strict = false;
    int jobs = 0;          // 0 = take from config
    long long seed = -1;   // -1 = take from config
    std::string backend;   // "scripted:<file>" mock override
};

calign::PipelineConfig load_config(const GlobalOptions& opts) {
    calign::PipelineConfig config = calign::load_pipeline_config(opts.config_path);
    config.strict = opts.strict;
    if (opts.jobs > 0) config.jobs = opts.jobs;
    if (opts.seed >= 0) {
        config.seed = static_cast<std::uint64_t>(opts.seed);
        config.toy.seed = config.seed;
    }
    if (!opts.backend.empty()) {
        const std::string prefix = "scripted:";
        if (opts.backend.rfind(prefix, 0) != 0) {
            throw calign::ConfigError("--backend must look like scripted:<script file>");
        }
        config.override_script = opts.backend.substr(prefix.size());
    }
    return config;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"critique-driven alignment pipeline"};
    app.require_subcommand(1);

    GlobalOptions opts;
    app.add_option("--config", opts.config_path, "TOML config file")->required();
    app.add_flag("--strict", opts.strict, "fail the run on the first per-item error");
    app.add_option("--jobs", opts.jobs, "max concurrent backend calls");
    app.add_option("--seed", opts.seed, "override the config seed");
    app.add_option("--backend", opts.backend, "route all roles to one backend, e.g. scripted:mock.json");

    auto* build = app.add_subcommand("build-trees", "construct reasoning trees for every scenario");
    auto* annotate = app.add_subcommand("annotate", "critique and score extracted chains, write datasets");
    auto* score = app.add_subcommand("score", "attach process rewards to response groups");
    auto* train = app.add_subcommand("train-toy", "run the toy policy optimization loop");
    auto* evaluate = app.add_subcommand("evaluate", "judge responses and compute the metrics report");
    auto* export_rft = app.add_subcommand("export-rft", "emit the chat-format fine-tuning file");

    std::string score_responses;
    std::string evaluate_responses;
    score->add_option("--responses", score_responses, "response groups JSONL")->required();
    evaluate->add_option("--responses", evaluate_responses, "responses JSONL to judge")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        const calign::PipelineConfig config = load_config(opts);
        if (build->parsed()) {
            const auto s = calign::cmd_build_trees(config);
            std::printf("scenarios=%zu nodes=%zu paths=%zu failures=%zu\n", s.scenarios, s.nodes, s.paths,
                        s.failures);
            return 0;
        }
        if (annotate->parsed()) {
            const auto counts = calign::cmd_annotate(config);
            std::printf("rea=%zu rft=%zu\n", counts.rea, counts.rft);
            return 0;
        }
        if (score->parsed()) {
            const auto s = calign::cmd_score(config, score_responses);
            std::printf("groups=%zu responses=%zu errors=%zu\n", s.groups, s.responses, s.errors);
            return 0;
        }
        if (train->parsed()) {
            const auto s = calign::cmd_train_toy(config);
            std::printf("steps=%d target_probability %.6f -> %.6f\n", s.steps, s.init_target_probability,
                        s.final_target_probability);
            return 0;
        }
        if (evaluate->parsed()) {
            const auto s = calign::cmd_evaluate(config, evaluate_responses);
            const calign::json report = s.report;
            std::printf("%s\n", report.dump().c_str());
            if (s.excluded > 0) {
                std::fprintf(stderr, "excluded %zu unparseable verdicts\n", s.excluded);
            }
            return 0;
        }
        if (export_rft->parsed()) {
            const auto s = calign::cmd_export_rft(config);
            std::printf("records=%zu\n", s.records);
            return 0;
        }
    } catch (const calign::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
