#include <doctest.h>

#include <filesystem>

#include <nlohmann/json.hpp>

#include "calign/pipeline.hpp"
#include "calign/reward.hpp"
#include "calign/toml_lite.hpp"
#include "calign/tree.hpp"

using namespace calign;
namespace fs = std::filesystem;

namespace {

const char* kVerdictAllNoBlock =
    "reasoning\n```\ndeep_mining: no\ninnovative_expansion: no\nthoughtfulness: no\nmisleading: no\n"
    "err_unaware: no\nerr_hallucination: no\nerr_inconsistent: no\nerr_unhelpful: no\n```";

std::string verdict_with(const std::string& yes_key) {
    std::string block = "judged\n```\n";
    for (const char* key : {"deep_mining", "innovative_expansion", "thoughtfulness", "misleading",
                            "err_unaware", "err_hallucination", "err_inconsistent", "err_unhelpful"}) {
        block += std::string(key) + ": " + (yes_key == key ? "yes" : "no") + "\n";
    }
    return block + "```";
}

Scenario make_scenario(int i) {
    Scenario s;
    s.preference = {"p" + std::to_string(i), "values privacy and dislikes upsells",
                    PreferenceForm::DeepImplicit, "personal-finance"};
    s.query = {"q" + std::to_string(i), "how should I plan this?"};
    return s;
}

// A fixture directory holding scenarios, the mock script, and the config.
struct MockPipeline {
    fs::path dir;
    std::string config_path;

    explicit MockPipeline(const std::string& name, int judge_variant = 0) {
        dir = fs::temp_directory_path() / name;
        fs::remove_all(dir);
        fs::create_directories(dir);

        std::vector<json> scenarios;
        for (int i = 0; i < 2; ++i) scenarios.push_back(json(make_scenario(i)));
        write_jsonl((dir / "scenarios.jsonl").string(), scenarios);

        json script;
        script["entries"] = json::array();
        auto add = [&](const std::string& match, std::vector<std::string> responses) {
            script["entries"].push_back(
                json{{"match", match}, {"responses", responses}, {"cycle", true}});
        };
        add("You are a process reward model",
            {"grounded and helpful\nScore: 0.8", "ignores the constraint\nScore: 0.3",
             "adequate\nScore: 0.6"});
        add("You are a strict evaluator",
            {"insightful step\nScore: 0.8", "shallow step\nScore: 0.4", "solid step\nScore: 0.6"});
        add("Candidate next step:",
            {"promising\nScore: 0.9", "plausible\nScore: 0.7", "weak\nScore: 0.3"});
        add("Propose",
            {"- examine the underlying need", "- compare the available options",
             "- flag the hidden risk", "- outline a safer alternative", "- teach the tradeoffs"});
        if (judge_variant == 0) {
            add("You judge one response", {verdict_with("deep_mining"), verdict_with("misleading"),
                                           verdict_with("err_hallucination"), kVerdictAllNoBlock});
        } else {
            add("You judge one response",
                {verdict_with("deep_mining"), verdict_with("misleading"),
                 verdict_with("err_hallucination"), kVerdictAllNoBlock, "no fenced block here"});
        }
        write_text_file((dir / "mock.json").string(), script.dump(2) + "\n");

        const std::string toml =
            "seed = 7\n"
            "jobs = 1\n"
            "\n"
            "[paths]\n"
            "scenarios = \"scenarios.jsonl\"\n"
            "work_dir = \"" + (dir / "work").string() + "\"\n"
            "out_dir = \"" + (dir / "out").string() + "\"\n"
            "\n"
            "[align]\n"
            "group_size = 5\n"
            "branching = 1\n"
            "max_depth = 2\n"
            "prune_threshold = 0.6\n"
            "\n"
            "[backends.default]\n"
            "kind = \"scripted\"\n"
            "script = \"mock.json\"\n"
            "\n"
            "[toy]\n"
            "steps = 12\n"
            "learning_rate = 0.3\n"
            "target_token = 2\n";
        config_path = (dir / "config.toml").string();
        write_text_file(config_path, toml);
    }

    ~MockPipeline() { fs::remove_all(dir); }
};

std::string slurp(const fs::path& p) { return read_text_file(p.string()); }

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("toml subset parsing") {
    const json doc = parse_toml(
        "seed = 42\n"
        "name = \"demo\"  # comment\n"
        "ratio = 0.25\n"
        "flag = true\n"
        "[a.b]\n"
        "x = -3\n");
    CHECK(doc.at("seed") == 42);
    CHECK(doc.at("name") == "demo");
    CHECK(doc.at("ratio") == doctest::Approx(0.25));
    CHECK(doc.at("flag") == true);
    CHECK(doc.at("a").at("b").at("x") == -3);

    CHECK_THROWS_AS(parse_toml("key value\n"), ParseError);
    CHECK_THROWS_AS(parse_toml("[unclosed\n"), ParseError);
    CHECK_THROWS_AS(parse_toml("k = @bad\n"), ParseError);
}

TEST_CASE("config loading validates referenced files") {
    MockPipeline mock("calign_cfg_test");
    const PipelineConfig config = load_pipeline_config(mock.config_path);
    CHECK(config.seed == 7);
    CHECK(config.align.group_size == 5);
    CHECK(config.align.branching == 1);
    CHECK(config.toy.steps == 12);
    CHECK(config.toy.seed == 7);
    CHECK_FALSE(config.scenarios_path.empty());

    // A dangling scenarios path fails the load before any side effect.
    fs::remove(mock.dir / "scenarios.jsonl");
    CHECK_THROWS_AS(load_pipeline_config(mock.config_path), ConfigError);
}

TEST_CASE("config with a bad align knob is rejected") {
    MockPipeline mock("calign_cfg_bad");
    std::string toml = slurp(mock.config_path);
    toml += "\n[align2]\n";  // harmless unknown section
    write_text_file(mock.config_path, toml);
    CHECK_NOTHROW(load_pipeline_config(mock.config_path));

    write_text_file(mock.config_path, slurp(mock.config_path) + "\n[align]\nclip_epsilon = 1.5\n");
    CHECK_THROWS_AS(load_pipeline_config(mock.config_path), ConfigError);
}

TEST_CASE("build-trees writes one deterministic tree per scenario") {
    MockPipeline mock("calign_build_test");
    const PipelineConfig config = load_pipeline_config(mock.config_path);
    const BuildTreesSummary summary = cmd_build_trees(config);
    CHECK(summary.scenarios == 2);
    CHECK(summary.failures == 0);
    CHECK(summary.nodes > 2);
    CHECK(summary.paths > 0);

    const fs::path trees = fs::path(config.work_dir) / kTreesFileName;
    REQUIRE(fs::exists(trees));
    const std::string first = slurp(trees);
    CHECK(read_jsonl(trees.string()).size() == 2);

    cmd_build_trees(config);
    CHECK(slurp(trees) == first);
}

TEST_CASE("annotate produces validated records and the two dataset splits") {
    MockPipeline mock("calign_annotate_test");
    const PipelineConfig config = load_pipeline_config(mock.config_path);
    cmd_build_trees(config);
    const DatasetCounts counts = cmd_annotate(config);
    CHECK(counts.rea > 0);
    CHECK(counts.rft == 2);  // one best path per scenario at k=1

    const auto rea = read_jsonl((fs::path(config.out_dir) / kReaFileName).string());
    CHECK(rea.size() == counts.rea);
    for (const auto& line : rea) {
        CHECK(validate_record(line.get<DatasetRecord>()).empty());
    }
    const auto rft = read_jsonl((fs::path(config.out_dir) / kRftFileName).string());
    CHECK(rft.size() == counts.rft);
}

TEST_CASE("export-rft emits chat records whose assistant text re-segments") {
    MockPipeline mock("calign_export_test");
    const PipelineConfig config = load_pipeline_config(mock.config_path);
    cmd_build_trees(config);
    cmd_annotate(config);
    const ExportSummary summary = cmd_export_rft(config);
    CHECK(summary.records == 2);

    const auto rft = read_jsonl((fs::path(config.out_dir) / kRftFileName).string());
    const auto chat = read_jsonl((fs::path(config.out_dir) / kRftChatFileName).string());
    REQUIRE(chat.size() == rft.size());
    for (size_t i = 0; i < chat.size(); ++i) {
        const auto& messages = chat[i].at("messages");
        REQUIRE(messages.size() == 3);
        CHECK(messages[0].at("role") == "system");
        CHECK(messages[1].at("role") == "user");
        CHECK(messages[2].at("role") == "assistant");
        const auto steps = split_response_into_steps(messages[2].at("content").get<std::string>());
        const auto chain = rft[i].at("chain").get<ReasoningChain>();
        CHECK(static_cast<int>(steps.size()) == chain.length);
    }
}

TEST_CASE("score attaches step and token rewards to response groups") {
    MockPipeline mock("calign_score_test");
    const PipelineConfig config = load_pipeline_config(mock.config_path);

    json texts = json::array();
    for (int i = 0; i < 5; ++i) {
        texts.push_back("Step 1: analyze option " + std::to_string(i) + "\nStep 2: check the budget");
    }
    json line;
    line["scenario"] = make_scenario(0);
    line["texts"] = texts;
    const std::string responses_path = (mock.dir / "responses.jsonl").string();
    write_jsonl(responses_path, {line});

    const ScoreSummary summary = cmd_score(config, responses_path);
    CHECK(summary.groups == 1);
    CHECK(summary.responses == 5);
    CHECK(summary.errors == 0);

    const auto scored = read_jsonl((fs::path(config.out_dir) / kScoredGroupsFileName).string());
    REQUIRE(scored.size() == 1);
    const ResponseGroup group = scored[0].get<ResponseGroup>();
    REQUIRE(group.responses.size() == 5);
    for (size_t i = 0; i < group.responses.size(); ++i) {
        check_partition(group.responses[i]);
        REQUIRE(group.step_rewards[i].size() == 2);
        const auto expect = broadcast_step_rewards(group.responses[i], group.step_rewards[i]);
        CHECK(group.token_rewards[i] == expect);
    }
    CHECK(scored[0].contains("annotations"));
}

TEST_CASE("score records per-response failures and keeps going") {
    MockPipeline mock("calign_score_err_test");
    const PipelineConfig config = load_pipeline_config(mock.config_path);

    json texts = json::array();
    texts.push_back("   ");  // fails segmentation
    for (int i = 0; i < 4; ++i) texts.push_back("Step 1: fine " + std::to_string(i));
    json line;
    line["scenario"] = make_scenario(0);
    line["texts"] = texts;
    const std::string responses_path = (mock.dir / "responses.jsonl").string();
    write_jsonl(responses_path, {line});

    const ScoreSummary summary = cmd_score(config, responses_path);
    CHECK(summary.groups == 1);
    CHECK(summary.responses == 4);
    CHECK(summary.errors == 1);
    const auto scored = read_jsonl((fs::path(config.out_dir) / kScoredGroupsFileName).string());
    CHECK(scored[0].contains("errors"));
}

TEST_CASE("train-toy runs after annotate and moves the target token") {
    MockPipeline mock("calign_train_test");
    const PipelineConfig config = load_pipeline_config(mock.config_path);
    cmd_build_trees(config);
    cmd_annotate(config);
    const TrainToySummary summary = cmd_train_toy(config);
    CHECK(summary.steps == 12);
    CHECK(summary.final_target_probability > summary.init_target_probability);

    const std::string csv = slurp(fs::path(config.out_dir) / kToyMetricsFileName);
    CHECK(csv.rfind("step,objective,kl,mean_abs_adv\n", 0) == 0);
    CHECK(fs::exists(fs::path(config.out_dir) / kToyPolicyFileName));
}

TEST_CASE("evaluate judges responses and excludes unparseable verdicts") {
    MockPipeline mock("calign_eval_test", /*judge_variant=*/1);
    const PipelineConfig config = load_pipeline_config(mock.config_path);

    std::vector<json> lines;
    for (int i = 0; i < 5; ++i) {
        const Scenario s = make_scenario(i);
        json line;
        line["preference"] = s.preference;
        line["query"] = s.query;
        line["response"] = "Step 1: a response";
        lines.push_back(std::move(line));
    }
    const std::string responses_path = (mock.dir / "to_judge.jsonl").string();
    write_jsonl(responses_path, lines);

    const EvaluateSummary summary = cmd_evaluate(config, responses_path);
    CHECK(summary.judged == 4);
    CHECK(summary.excluded == 1);
    // Verdicts cycle: deep_mining, misleading, err_hallucination, all-no.
    CHECK(summary.report.n == 4);
    CHECK(summary.report.acc_da == 0.25);
    CHECK(summary.report.acc_mis == 0.25);
    CHECK(summary.report.acc_pf == 0.75);
    CHECK(fs::exists(fs::path(config.out_dir) / kVerdictsFileName));
    CHECK(fs::exists(fs::path(config.out_dir) / kMetricsFileName));
}

TEST_CASE("parallel annotation with fingerprinted entries matches sequential output") {
    MockPipeline mock("calign_jobs_test");
    PipelineConfig config = load_pipeline_config(mock.config_path);
    cmd_build_trees(config);

    // Re-script annotation with one entry per exact critique request, so the
    // response depends only on the request and never on pop order.
    const auto templates = load_templates(config);
    json script;
    script["entries"] = json::array();
    for (const auto& line : read_jsonl((fs::path(config.work_dir) / kTreesFileName).string())) {
        const ReasoningTree tree = line.get<ReasoningTree>();
        for (const auto& chain : extract_paths(tree)) {
            for (size_t j = 1; j <= chain.steps.size(); ++j) {
                const std::vector<ReasoningStep> prefix(chain.steps.begin(),
                                                        chain.steps.begin() + static_cast<long>(j));
                const PromptCall call = build_critique_call(templates, tree.scenario, prefix);
                script["entries"].push_back(
                    json{{"fingerprint", request_fingerprint(call.messages, call.params)},
                         {"responses", {"consistent critique\nScore: 0.7"}},
                         {"cycle", true}});
            }
        }
    }
    const std::string fp_script = (mock.dir / "mock_fp.json").string();
    write_text_file(fp_script, script.dump() + "\n");
    config.backends["default"].script_path = fp_script;

    config.jobs = 1;
    cmd_annotate(config);
    const std::string sequential = slurp(fs::path(config.out_dir) / kReaFileName);

    config.jobs = 4;
    cmd_annotate(config);
    CHECK(slurp(fs::path(config.out_dir) / kReaFileName) == sequential);
}

TEST_CASE("chain header rendering matches the step splitter") {
    const ReasoningChain chain = make_chain("c", {"first idea", "second idea", "third idea"});
    const auto steps = split_response_into_steps(render_chain_with_headers(chain));
    REQUIRE(steps.size() == 3);
    CHECK(steps[0].text == "first idea");
    CHECK(steps[2].text == "third idea");
}

TEST_CASE("toy word mapping is stable and in range") {
    for (const std::string word : {"alpha", "beta", "gamma", ""}) {
        const int id = toy_token_for_word(word, 8);
        CHECK(id >= 0);
        CHECK(id < 8);
        CHECK(id == toy_token_for_word(word, 8));
    }
}

}  // TEST_SUITE
