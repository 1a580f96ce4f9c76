#include "calign/core.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace calign {

std::string to_string(PreferenceForm form) {
    return form == PreferenceForm::Explicit ? "explicit" : "deep-implicit";
}

PreferenceForm preference_form_from_string(const std::string& s) {
    if (s == "explicit") return PreferenceForm::Explicit;
    if (s == "deep-implicit") return PreferenceForm::DeepImplicit;
    throw ParseError("unknown preference form: '" + s + "'");
}

std::string scenario_key(const Scenario& s) {
    return s.preference.id + "/" + s.query.id;
}

ReasoningChain make_chain(std::string id, std::vector<std::string> step_texts) {
    ReasoningChain chain;
    chain.id = std::move(id);
    chain.steps.reserve(step_texts.size());
    for (size_t i = 0; i < step_texts.size(); ++i) {
        chain.steps.push_back(ReasoningStep{static_cast<int>(i) + 1, std::move(step_texts[i]), std::nullopt});
    }
    chain.length = static_cast<int>(chain.steps.size());
    return chain;
}

std::vector<std::string> validate_align_config(const AlignConfig& cfg) {
    std::vector<std::string> v;
    if (cfg.group_size < 2) v.push_back("group_size must be >= 2");
    if (!(cfg.clip_epsilon > 0.0 && cfg.clip_epsilon < 1.0)) v.push_back("clip_epsilon must be in (0,1)");
    if (!(cfg.norm_epsilon > 0.0)) v.push_back("norm_epsilon must be > 0");
    if (!(cfg.prune_threshold >= 0.0 && cfg.prune_threshold <= 1.0)) v.push_back("prune_threshold must be in [0,1]");
    if (cfg.sample_temperature < 0.0) v.push_back("sample_temperature must be >= 0");
    if (cfg.branching < 1) v.push_back("branching must be >= 1");
    if (cfg.max_depth < 0) v.push_back("max_depth must be >= 0");
    if (cfg.rft_top_k < 1) v.push_back("rft_top_k must be >= 1");
    if (!(cfg.grpo_delta > 0.0)) v.push_back("grpo_delta must be > 0");
    return v;
}

std::vector<std::string> validate_record(const DatasetRecord& record) {
    std::vector<std::string> v;
    if (record.scenario.preference.text.empty()) v.push_back("preference text is empty");
    if (record.scenario.query.text.empty()) v.push_back("query text is empty");
    if (record.chain.length != static_cast<int>(record.chain.steps.size())) {
        v.push_back("chain length field does not match step count");
    }
    for (size_t i = 0; i < record.chain.steps.size(); ++i) {
        const auto& step = record.chain.steps[i];
        if (step.index != static_cast<int>(i) + 1) {
            v.push_back("step indices not contiguous at position " + std::to_string(i + 1));
            break;
        }
        if (step.text.empty()) v.push_back("step " + std::to_string(step.index) + " text is empty");
    }
    if (record.annotations.size() != record.chain.steps.size()) {
        v.push_back("annotation count mismatch: " + std::to_string(record.annotations.size()) +
                    " annotations for " + std::to_string(record.chain.steps.size()) + " steps");
    }
    double sum = 0.0;
    for (size_t i = 0; i < record.annotations.size(); ++i) {
        const auto& ann = record.annotations[i];
        if (ann.critique.empty()) v.push_back("annotation " + std::to_string(i + 1) + " critique is empty");
        if (!(ann.score >= 0.0 && ann.score <= 1.0)) {
            v.push_back("annotation " + std::to_string(i + 1) + " score out of [0,1]");
        }
        sum += ann.score;
    }
    if (std::abs(sum - record.total_score) > kTotalScoreTolerance) {
        v.push_back("total_score does not equal sum of annotation scores");
    }
    return v;
}

// --- JSON hooks ---

void to_json(json& j, const Preference& p) {
    j = json{{"id", p.id}, {"text", p.text}, {"form", to_string(p.form)}, {"domain", p.domain}};
}

void from_json(const json& j, Preference& p) {
    j.at("id").get_to(p.id);
    j.at("text").get_to(p.text);
    p.form = preference_form_from_string(j.at("form").get<std::string>());
    p.domain = j.value("domain", std::string{});
}

void to_json(json& j, const Query& q) {
    j = json{{"id", q.id}, {"text", q.text}};
}

void from_json(const json& j, Query& q) {
    j.at("id").get_to(q.id);
    j.at("text").get_to(q.text);
}

void to_json(json& j, const Scenario& s) {
    j = json{{"preference", s.preference}, {"query", s.query}};
}

void from_json(const json& j, Scenario& s) {
    j.at("preference").get_to(s.preference);
    j.at("query").get_to(s.query);
}

void to_json(json& j, const ReasoningStep& s) {
    j = json{{"index", s.index}, {"text", s.text}};
    if (s.persona) j["persona"] = *s.persona;
}

void from_json(const json& j, ReasoningStep& s) {
    j.at("index").get_to(s.index);
    j.at("text").get_to(s.text);
    if (j.contains("persona") && !j.at("persona").is_null()) {
        s.persona = j.at("persona").get<std::string>();
    } else {
        s.persona = std::nullopt;
    }
}

void to_json(json& j, const ReasoningChain& c) {
    j = json{{"id", c.id}, {"steps", c.steps}, {"length", c.length}};
}

void from_json(const json& j, ReasoningChain& c) {
    j.at("id").get_to(c.id);
    j.at("steps").get_to(c.steps);
    c.length = j.contains("length") ? j.at("length").get<int>() : static_cast<int>(c.steps.size());
}

void to_json(json& j, const StepAnnotation& a) {
    j = json{{"critique", a.critique}, {"score", a.score}};
}

void from_json(const json& j, StepAnnotation& a) {
    j.at("critique").get_to(a.critique);
    j.at("score").get_to(a.score);
}

void to_json(json& j, const DatasetRecord& r) {
    j = json{{"preference", r.scenario.preference},
             {"query", r.scenario.query},
             {"chain", r.chain},
             {"annotations", r.annotations},
             {"total_score", r.total_score}};
}

void from_json(const json& j, DatasetRecord& r) {
    j.at("preference").get_to(r.scenario.preference);
    j.at("query").get_to(r.scenario.query);
    j.at("chain").get_to(r.chain);
    j.at("annotations").get_to(r.annotations);
    j.at("total_score").get_to(r.total_score);
}

void to_json(json& j, const AlignConfig& c) {
    j = json{{"group_size", c.group_size},
             {"sample_temperature", c.sample_temperature},
             {"clip_epsilon", c.clip_epsilon},
             {"kl_beta", c.kl_beta},
             {"norm_epsilon", c.norm_epsilon},
             {"grpo_delta", c.grpo_delta},
             {"prune_threshold", c.prune_threshold},
             {"branching", c.branching},
             {"max_depth", c.max_depth},
             {"rft_top_k", c.rft_top_k}};
}

void from_json(const json& j, AlignConfig& c) {
    c.group_size = j.value("group_size", c.group_size);
    c.sample_temperature = j.value("sample_temperature", c.sample_temperature);
    c.clip_epsilon = j.value("clip_epsilon", c.clip_epsilon);
    c.kl_beta = j.value("kl_beta", c.kl_beta);
    c.norm_epsilon = j.value("norm_epsilon", c.norm_epsilon);
    c.grpo_delta = j.value("grpo_delta", c.grpo_delta);
    c.prune_threshold = j.value("prune_threshold", c.prune_threshold);
    c.branching = j.value("branching", c.branching);
    c.max_depth = j.value("max_depth", c.max_depth);
    c.rft_top_k = j.value("rft_top_k", c.rft_top_k);
}

// --- JSONL I/O ---

std::vector<json> read_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open for reading: " + path);
    std::vector<json> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(json::parse(line));
        } catch (const json::parse_error& e) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what(), line);
        }
    }
    return out;
}

void write_jsonl(const std::string& path, const std::vector<json>& lines) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + path);
    for (const auto& j : lines) {
        out << j.dump() << '\n';
    }
    if (!out) throw Error("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open for reading: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + path);
    out << content;
    if (!out) throw Error("write failed: " + path);
}

}  // namespace calign
