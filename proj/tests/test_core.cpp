#include <doctest.h>

#include <nlohmann/json.hpp>

#include "calign/core.hpp"

using namespace calign;

namespace {

DatasetRecord sample_record() {
    DatasetRecord r;
    r.scenario.preference = {"p1", "I value convenience but am privacy-conscious", PreferenceForm::DeepImplicit,
                             "personal-finance"};
    r.scenario.query = {"q1", "How should I share updates with my family?"};
    r.chain = make_chain("c1", {"consider the privacy angle", "compare channels", "recommend a digest"});
    r.annotations = {{"solid first step", 0.5}, {"good comparison", 0.8}, {"useful conclusion", 0.7}};
    r.total_score = 2.0;
    return r;
}

}  // namespace

TEST_SUITE("core") {

TEST_CASE("valid record passes validation") {
    CHECK(validate_record(sample_record()).empty());
}

TEST_CASE("annotation count mismatch is reported") {
    DatasetRecord r = sample_record();
    r.annotations.pop_back();
    r.total_score = 1.3;
    const auto violations = validate_record(r);
    REQUIRE_FALSE(violations.empty());
    bool found = false;
    for (const auto& v : violations) found = found || v.find("annotation count mismatch") != std::string::npos;
    CHECK(found);
}

TEST_CASE("score out of range is reported") {
    DatasetRecord r = sample_record();
    r.annotations[1].score = 1.3;
    r.total_score = 2.5;
    const auto violations = validate_record(r);
    bool found = false;
    for (const auto& v : violations) found = found || v.find("out of [0,1]") != std::string::npos;
    CHECK(found);
}

TEST_CASE("total score drift is reported") {
    DatasetRecord r = sample_record();
    r.total_score = 2.1;
    const auto violations = validate_record(r);
    REQUIRE(violations.size() == 1);
    CHECK(violations[0].find("total_score") != std::string::npos);
}

TEST_CASE("non-contiguous step indices are reported") {
    DatasetRecord r = sample_record();
    r.chain.steps[2].index = 5;
    CHECK_FALSE(validate_record(r).empty());
}

TEST_CASE("serialization round-trip is the identity") {
    const DatasetRecord r = sample_record();
    const json j = r;
    const auto back = j.get<DatasetRecord>();
    CHECK(back.scenario.preference.id == r.scenario.preference.id);
    CHECK(back.scenario.preference.form == r.scenario.preference.form);
    CHECK(back.scenario.preference.domain == r.scenario.preference.domain);
    CHECK(back.scenario.query.text == r.scenario.query.text);
    CHECK(back.chain.id == r.chain.id);
    CHECK(back.chain.length == r.chain.length);
    REQUIRE(back.chain.steps.size() == r.chain.steps.size());
    for (size_t i = 0; i < r.chain.steps.size(); ++i) {
        CHECK(back.chain.steps[i].index == r.chain.steps[i].index);
        CHECK(back.chain.steps[i].text == r.chain.steps[i].text);
        CHECK(back.chain.steps[i].persona == r.chain.steps[i].persona);
    }
    REQUIRE(back.annotations.size() == r.annotations.size());
    for (size_t i = 0; i < r.annotations.size(); ++i) {
        CHECK(back.annotations[i].critique == r.annotations[i].critique);
        CHECK(back.annotations[i].score == r.annotations[i].score);
    }
    CHECK(back.total_score == r.total_score);
    // Re-encoding is byte-identical.
    const json j2 = back;
    CHECK(j.dump() == j2.dump());
}

TEST_CASE("persona survives the round trip when present") {
    ReasoningStep s{2, "check the risks", "Contrarian"};
    const json j = s;
    const auto back = j.get<ReasoningStep>();
    REQUIRE(back.persona.has_value());
    CHECK(*back.persona == "Contrarian");

    ReasoningStep bare{1, "plain step", std::nullopt};
    const json jb = bare;
    CHECK_FALSE(jb.contains("persona"));
    CHECK_FALSE(jb.get<ReasoningStep>().persona.has_value());
}

TEST_CASE("preference form strings are exact") {
    CHECK(to_string(PreferenceForm::Explicit) == "explicit");
    CHECK(to_string(PreferenceForm::DeepImplicit) == "deep-implicit");
    CHECK(preference_form_from_string("explicit") == PreferenceForm::Explicit);
    CHECK(preference_form_from_string("deep-implicit") == PreferenceForm::DeepImplicit);
    CHECK_THROWS_AS(preference_form_from_string("implicit"), ParseError);
}

TEST_CASE("config invariants are checked") {
    AlignConfig good;
    CHECK(validate_align_config(good).empty());
    CHECK(good.group_size == 5);
    CHECK(good.sample_temperature == 1.0);

    AlignConfig bad;
    bad.group_size = 1;
    bad.clip_epsilon = 1.0;
    bad.norm_epsilon = 0.0;
    bad.prune_threshold = 1.5;
    CHECK(validate_align_config(bad).size() == 4);
}

TEST_CASE("jsonl files round-trip line by line") {
    const std::string path = "test_core_roundtrip.jsonl";
    std::vector<json> lines = {json{{"a", 1}}, json{{"b", "two"}}};
    write_jsonl(path, lines);
    const auto back = read_jsonl(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].dump() == lines[0].dump());
    CHECK(back[1].dump() == lines[1].dump());
    std::remove(path.c_str());
}

}  // TEST_SUITE
