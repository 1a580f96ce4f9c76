#include "calign/pipeline.hpp"

#include <atomic>
#include <cctype>
#include <filesystem>
#include <iostream>
#include <thread>

#include <nlohmann/json.hpp>

#include "calign/reward.hpp"
#include "calign/toml_lite.hpp"
#include "calign/tree.hpp"

namespace fs = std::filesystem;

namespace calign {

namespace {

BackendSpec parse_backend_spec(const json& j, const std::string& role) {
    BackendSpec spec;
    const std::string kind = j.value("kind", std::string{"scripted"});
    if (kind == "http") {
        spec.kind = BackendKind::Http;
        spec.endpoint = j.value("endpoint", std::string{});
        spec.model_name = j.value("model", std::string{});
        if (spec.endpoint.empty() || spec.model_name.empty()) {
            throw ConfigError("backend '" + role + "': http kind requires endpoint and model");
        }
    } else if (kind == "scripted") {
        spec.kind = BackendKind::Scripted;
        spec.script_path = j.value("script", std::string{});
        if (spec.script_path.empty()) {
            throw ConfigError("backend '" + role + "': scripted kind requires script");
        }
    } else {
        throw ConfigError("backend '" + role + "': unknown kind '" + kind + "'");
    }
    return spec;
}

void require_file(const std::string& path, const std::string& what) {
    if (!fs::exists(path)) throw ConfigError(what + " not found: " + path);
}

// Runs fn(0..n-1) on up to `jobs` threads; results must be written to
// per-index slots by the caller. The first exception wins and is rethrown.
template <typename F>
void parallel_for_indexed(size_t n, int jobs, F&& fn) {
    if (n == 0) return;
    if (jobs <= 1 || n == 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::vector<std::exception_ptr> errors(n);
    auto worker = [&] {
        for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    const size_t workers = std::min<size_t>(static_cast<size_t>(jobs), n);
    pool.reserve(workers);
    for (size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

std::vector<Scenario> load_scenarios(const std::string& path) {
    std::vector<Scenario> scenarios;
    for (const auto& line : read_jsonl(path)) {
        Scenario s = line.get<Scenario>();
        if (s.preference.text.empty()) throw ConfigError(path + ": scenario with empty preference text");
        if (s.query.text.empty()) throw ConfigError(path + ": scenario with empty query text");
        scenarios.push_back(std::move(s));
    }
    return scenarios;
}

}  // namespace

PipelineConfig load_pipeline_config(const std::string& path) {
    require_file(path, "config file");
    const json doc = parse_toml_file(path);
    PipelineConfig config;
    try {
        config.seed = doc.value("seed", 0LL) < 0
                          ? throw ConfigError("seed must be >= 0")
                          : static_cast<std::uint64_t>(doc.value("seed", 0LL));
        config.jobs = static_cast<int>(doc.value("jobs", 1LL));
        if (config.jobs < 1) throw ConfigError("jobs must be >= 1");

        if (doc.contains("align")) doc.at("align").get_to(config.align);
        if (auto violations = validate_align_config(config.align); !violations.empty()) {
            throw ConfigError("align: " + violations.front());
        }

        if (doc.contains("paths")) {
            const json& paths = doc.at("paths");
            config.scenarios_path = paths.value("scenarios", std::string{});
            config.work_dir = paths.value("work_dir", config.work_dir);
            config.out_dir = paths.value("out_dir", config.out_dir);
        }

        if (doc.contains("backends")) {
            for (const auto& [role, spec] : doc.at("backends").items()) {
                config.backends[role] = parse_backend_spec(spec, role);
            }
        }

        if (doc.contains("prompts")) {
            for (const auto& [role, file] : doc.at("prompts").items()) {
                config.prompt_files[role] = file.get<std::string>();
            }
        }

        if (doc.contains("toy")) {
            const json& toy = doc.at("toy");
            config.toy.steps = static_cast<int>(toy.value("steps", static_cast<long long>(config.toy.steps)));
            config.toy.learning_rate = toy.value("learning_rate", config.toy.learning_rate);
            config.toy.vocab_size =
                static_cast<int>(toy.value("vocab_size", static_cast<long long>(config.toy.vocab_size)));
            config.toy.max_len =
                static_cast<int>(toy.value("max_len", static_cast<long long>(config.toy.max_len)));
            config.toy.tokens_per_step = static_cast<int>(
                toy.value("tokens_per_step", static_cast<long long>(config.toy.tokens_per_step)));
            config.toy.target_token =
                static_cast<int>(toy.value("target_token", static_cast<long long>(config.toy.target_token)));
        }
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    config.toy.seed = config.seed;

    // Referenced files must exist before any command runs.
    const fs::path base = fs::path(path).parent_path();
    auto resolve = [&](std::string& p) {
        if (p.empty()) return;
        if (fs::path(p).is_relative()) p = (base / p).string();
    };
    resolve(config.scenarios_path);
    if (!config.scenarios_path.empty()) require_file(config.scenarios_path, "scenarios file");
    for (auto& [role, spec] : config.backends) {
        if (spec.kind == BackendKind::Scripted) {
            resolve(spec.script_path);
            require_file(spec.script_path, "script for backend '" + role + "'");
        }
    }
    for (auto& [role, file] : config.prompt_files) {
        resolve(file);
        require_file(file, "prompt template for '" + role + "'");
    }
    return config;
}

PromptTemplates load_templates(const PipelineConfig& config) {
    PromptTemplates t = PromptTemplates::defaults();
    auto maybe = [&](const char* role, std::string& slot) {
        auto it = config.prompt_files.find(role);
        if (it != config.prompt_files.end()) slot = read_text_file(it->second);
    };
    maybe("propose", t.propose);
    maybe("value", t.value);
    maybe("critique", t.critique);
    maybe("prm", t.prm);
    maybe("judge", t.judge);
    maybe("respond", t.respond);
    return t;
}

std::shared_ptr<Backend> BackendRegistry::for_role(const std::string& role) {
    if (!config_.override_script.empty()) {
        auto& cached = by_script_[config_.override_script];
        if (!cached) {
            require_file(config_.override_script, "script file");
            cached = ScriptedBackend::from_file(config_.override_script);
        }
        return cached;
    }
    auto it = config_.backends.find(role);
    if (it == config_.backends.end()) it = config_.backends.find("default");
    if (it == config_.backends.end()) {
        throw ConfigError("no backend configured for role '" + role + "' (and no 'default')");
    }
    const BackendSpec& spec = it->second;
    if (spec.kind == BackendKind::Scripted) {
        auto& cached = by_script_[spec.script_path];
        if (!cached) cached = ScriptedBackend::from_file(spec.script_path);
        return cached;
    }
    return open_backend(spec);
}

BuildTreesSummary cmd_build_trees(const PipelineConfig& config) {
    if (config.scenarios_path.empty()) throw ConfigError("paths.scenarios is not set");
    const std::vector<Scenario> scenarios = load_scenarios(config.scenarios_path);
    const PromptTemplates templates = load_templates(config);
    BackendRegistry registry(config);
    auto generator = registry.for_role("generator");
    auto evaluator = registry.for_role("evaluator");
    const std::vector<Persona> council = default_council();

    fs::create_directories(config.work_dir);
    BuildTreesSummary summary;
    std::vector<json> lines;
    for (const auto& scenario : scenarios) {
        try {
            const ReasoningTree tree =
                build_tree(*generator, *evaluator, scenario, config.align, council, templates);
            summary.scenarios += 1;
            summary.nodes += tree.nodes.size();
            summary.paths += extract_paths(tree).size();
            lines.push_back(tree);
        } catch (const Error& e) {
            if (config.strict) throw;
            summary.failures += 1;
            std::cerr << "warning: skipping scenario " << scenario_key(scenario) << ": " << e.what() << "\n";
        }
    }
    write_jsonl((fs::path(config.work_dir) / kTreesFileName).string(), lines);
    return summary;
}

DatasetCounts cmd_annotate(const PipelineConfig& config) {
    const std::string trees_path = (fs::path(config.work_dir) / kTreesFileName).string();
    require_file(trees_path, "trees file");
    const PromptTemplates templates = load_templates(config);
    BackendRegistry registry(config);
    auto evaluator = registry.for_role("evaluator");

    struct Task {
        Scenario scenario;
        ReasoningChain chain;
    };
    std::vector<Task> tasks;
    for (const auto& line : read_jsonl(trees_path)) {
        const ReasoningTree tree = line.get<ReasoningTree>();
        for (auto& chain : extract_paths(tree)) {
            tasks.push_back(Task{tree.scenario, std::move(chain)});
        }
    }
    std::vector<DatasetRecord> records(tasks.size());
    parallel_for_indexed(tasks.size(), config.jobs, [&](size_t i) {
        records[i] = annotate_chain(*evaluator, tasks[i].scenario, tasks[i].chain, templates);
    });
    return assemble_dataset(records, config.out_dir, config.align.rft_top_k);
}

ScoreSummary cmd_score(const PipelineConfig& config, const std::string& responses_path) {
    require_file(responses_path, "responses file");
    const PromptTemplates templates = load_templates(config);
    BackendRegistry registry(config);
    auto reward_model = registry.for_role("reward_model");

    ScoreSummary summary;
    std::vector<json> out_lines;
    for (const auto& line : read_jsonl(responses_path)) {
        json out;
        try {
            ResponseGroup group;
            if (line.contains("texts")) {
                group.scenario = line.at("scenario").get<Scenario>();
                WordVocab vocab;
                for (const auto& jt : line.at("texts")) {
                    const std::string text = jt.get<std::string>();
                    TokenizedResponse resp;
                    resp.text = text;
                    for (const auto& step : split_response_into_steps(text)) {
                        const int start = resp.length();
                        std::string word;
                        for (char c : step.text + " ") {
                            if (std::isspace(static_cast<unsigned char>(c))) {
                                if (!word.empty()) resp.tokens.push_back(vocab.id_for(word));
                                word.clear();
                            } else {
                                word += c;
                            }
                        }
                        resp.step_boundaries.emplace_back(start, resp.length());
                    }
                    group.responses.push_back(std::move(resp));
                }
            } else {
                group = line.get<ResponseGroup>();
            }
            if (static_cast<int>(group.responses.size()) != config.align.group_size) {
                throw ShapeError("group has " + std::to_string(group.responses.size()) +
                                 " responses, configured G is " + std::to_string(config.align.group_size));
            }

            // Score each response; ones that fail are dropped from the group
            // with the error recorded.
            json errors = json::array();
            ResponseGroup scored;
            scored.scenario = group.scenario;
            std::vector<std::vector<StepAnnotation>> all_annotations;
            for (size_t r = 0; r < group.responses.size(); ++r) {
                auto& resp = group.responses[r];
                try {
                    if (resp.text.empty()) throw SegmentationError("response has no text to score");
                    const auto steps = split_response_into_steps(resp.text);
                    if (steps.size() != resp.step_boundaries.size()) {
                        throw ShapeError("step count changed between tokenization and scoring");
                    }
                    const auto annotations = score_response(*reward_model, group.scenario.preference,
                                                            group.scenario.query, steps, templates);
                    std::vector<double> step_rewards;
                    step_rewards.reserve(annotations.size());
                    for (const auto& a : annotations) step_rewards.push_back(a.score);
                    scored.token_rewards.push_back(broadcast_step_rewards(resp, step_rewards));
                    scored.step_rewards.push_back(std::move(step_rewards));
                    scored.responses.push_back(std::move(resp));
                    all_annotations.push_back(annotations);
                    summary.responses += 1;
                } catch (const Error& e) {
                    errors.push_back(json{{"index", r}, {"message", e.what()}});
                    summary.errors += 1;
                }
            }
            out = scored;
            out["annotations"] = all_annotations;
            if (!errors.empty()) out["errors"] = errors;
            summary.groups += 1;
        } catch (const Error& e) {
            out = json{{"error", e.what()}};
            summary.errors += 1;
        }
        out_lines.push_back(std::move(out));
    }
    fs::create_directories(config.out_dir);
    write_jsonl((fs::path(config.out_dir) / kScoredGroupsFileName).string(), out_lines);
    return summary;
}

std::string render_chain_with_headers(const ReasoningChain& chain) {
    std::string out;
    for (const auto& step : chain.steps) {
        if (!out.empty()) out += '\n';
        out += "Step " + std::to_string(step.index) + ": " + step.text;
    }
    return out;
}

int toy_token_for_word(const std::string& word, int vocab_size) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : word) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return static_cast<int>(h % static_cast<std::uint64_t>(vocab_size));
}

TrainToySummary cmd_train_toy(const PipelineConfig& config) {
    const std::string rft_path = (fs::path(config.out_dir) / kRftFileName).string();
    require_file(rft_path, "RFT dataset");

    std::vector<std::vector<int>> sequences;
    for (const auto& line : read_jsonl(rft_path)) {
        const ReasoningChain chain = line.at("chain").get<ReasoningChain>();
        std::vector<int> tokens;
        for (const auto& step : chain.steps) {
            std::string word;
            for (char c : step.text + " ") {
                if (std::isspace(static_cast<unsigned char>(c))) {
                    if (!word.empty()) tokens.push_back(toy_token_for_word(word, config.toy.vocab_size));
                    word.clear();
                } else {
                    word += c;
                }
            }
        }
        if (!tokens.empty()) sequences.push_back(std::move(tokens));
    }

    const ToyTrainResult result = train_toy(config.align, config.toy, sequences);

    fs::create_directories(config.out_dir);
    write_text_file((fs::path(config.out_dir) / kToyMetricsFileName).string(),
                    metrics_to_csv(result.metrics));
    json params = json{{"init", result.init_policy}, {"final", result.final_policy}};
    write_text_file((fs::path(config.out_dir) / kToyPolicyFileName).string(), params.dump(2) + "\n");

    TrainToySummary summary;
    summary.steps = static_cast<int>(result.metrics.size());
    summary.init_target_probability = mean_target_probability(result.init_policy, config.toy.target_token);
    summary.final_target_probability = mean_target_probability(result.final_policy, config.toy.target_token);
    return summary;
}

EvaluateSummary cmd_evaluate(const PipelineConfig& config, const std::string& responses_path) {
    require_file(responses_path, "responses file");
    const PromptTemplates templates = load_templates(config);
    BackendRegistry registry(config);
    auto judge = registry.for_role("judge");

    struct Item {
        Preference preference;
        Query query;
        std::string response;
    };
    std::vector<Item> items;
    for (const auto& line : read_jsonl(responses_path)) {
        Item item;
        line.at("preference").get_to(item.preference);
        line.at("query").get_to(item.query);
        item.response = line.at("response").get<std::string>();
        items.push_back(std::move(item));
    }

    std::vector<json> verdict_lines;
    std::vector<JudgeVerdict> verdicts;
    struct Slot {
        bool ok = false;
        JudgeVerdict verdict;
        std::string error;
    };
    std::vector<Slot> slots(items.size());
    parallel_for_indexed(items.size(), config.jobs, [&](size_t i) {
        const PromptCall call = build_judge_call(templates, items[i].preference, items[i].query,
                                                 items[i].response);
        const std::string raw = judge->complete(call.messages, call.params).at(0);
        try {
            slots[i].verdict = parse_judge_output(raw);
            slots[i].ok = true;
        } catch (const ParseError& e) {
            slots[i].error = e.what();
        }
    });

    EvaluateSummary summary;
    for (size_t i = 0; i < slots.size(); ++i) {
        if (slots[i].ok) {
            verdicts.push_back(slots[i].verdict);
            verdict_lines.push_back(slots[i].verdict);
            summary.judged += 1;
        } else {
            summary.excluded += 1;
            std::cerr << "warning: judge output for response " << i << " unparseable, excluded: "
                      << slots[i].error << "\n";
        }
    }
    if (verdicts.empty()) throw Error("no parseable judge verdicts");

    fs::create_directories(config.out_dir);
    write_jsonl((fs::path(config.out_dir) / kVerdictsFileName).string(), verdict_lines);
    summary.report = compute_metrics(verdicts);
    const json report = summary.report;
    write_text_file((fs::path(config.out_dir) / kMetricsFileName).string(), report.dump(2) + "\n");
    return summary;
}

ExportSummary cmd_export_rft(const PipelineConfig& config) {
    const std::string rft_path = (fs::path(config.out_dir) / kRftFileName).string();
    require_file(rft_path, "RFT dataset");
    const PromptTemplates templates = load_templates(config);

    std::vector<json> lines;
    for (const auto& line : read_jsonl(rft_path)) {
        Scenario scenario;
        line.at("preference").get_to(scenario.preference);
        line.at("query").get_to(scenario.query);
        const ReasoningChain chain = line.at("chain").get<ReasoningChain>();

        // The chat messages mirror the inference prompt so fine-tuning data
        // and sampling stay consistent.
        const PromptCall call = build_respond_call(templates, scenario, 1.0, 1);
        json messages = json::array();
        for (const auto& m : call.messages) {
            messages.push_back(json{{"role", to_string(m.role)}, {"content", m.content}});
        }
        messages.push_back(json{{"role", "assistant"}, {"content", render_chain_with_headers(chain)}});
        lines.push_back(json{{"messages", messages}});
    }
    fs::create_directories(config.out_dir);
    write_jsonl((fs::path(config.out_dir) / kRftChatFileName).string(), lines);
    if (lines.empty()) std::cerr << "warning: RFT dataset is empty; wrote empty export\n";
    return ExportSummary{lines.size()};
}

}  // namespace calign
