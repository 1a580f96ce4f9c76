#include "calign/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

namespace calign {

namespace {

const std::vector<std::string>& verdict_keys() {
    static const std::vector<std::string> keys = {
        "deep_mining",       "innovative_expansion", "thoughtfulness",   "misleading",
        "err_unaware",       "err_hallucination",    "err_inconsistent", "err_unhelpful",
    };
    return keys;
}

bool* field_by_key(JudgeVerdict& v, const std::string& key) {
    if (key == "deep_mining") return &v.deep_mining;
    if (key == "innovative_expansion") return &v.innovative_expansion;
    if (key == "thoughtfulness") return &v.thoughtfulness;
    if (key == "misleading") return &v.misleading;
    if (key == "err_unaware") return &v.err_unaware;
    if (key == "err_hallucination") return &v.err_hallucination;
    if (key == "err_inconsistent") return &v.err_inconsistent;
    if (key == "err_unhelpful") return &v.err_unhelpful;
    return nullptr;
}

void require_nonempty(const std::vector<JudgeVerdict>& verdicts, const char* op) {
    if (verdicts.empty()) throw DomainError(std::string(op) + ": empty verdict sequence");
}

std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

}  // namespace

void to_json(json& j, const JudgeVerdict& v) {
    j = json{{"deep_mining", v.deep_mining},
             {"innovative_expansion", v.innovative_expansion},
             {"thoughtfulness", v.thoughtfulness},
             {"misleading", v.misleading},
             {"err_unaware", v.err_unaware},
             {"err_hallucination", v.err_hallucination},
             {"err_inconsistent", v.err_inconsistent},
             {"err_unhelpful", v.err_unhelpful}};
}

void from_json(const json& j, JudgeVerdict& v) {
    for (const auto& key : verdict_keys()) {
        *field_by_key(v, key) = j.at(key).get<bool>();
    }
}

double acc_da(const std::vector<JudgeVerdict>& verdicts) {
    require_nonempty(verdicts, "acc_da");
    size_t hits = 0;
    for (const auto& v : verdicts) {
        if (v.deep_mining || v.innovative_expansion || v.thoughtfulness) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(verdicts.size());
}

double acc_pf(const std::vector<JudgeVerdict>& verdicts) {
    require_nonempty(verdicts, "acc_pf");
    size_t clean = 0;
    for (const auto& v : verdicts) {
        if (!(v.err_unaware || v.err_hallucination || v.err_inconsistent || v.err_unhelpful)) ++clean;
    }
    return static_cast<double>(clean) / static_cast<double>(verdicts.size());
}

double acc_mis(const std::vector<JudgeVerdict>& verdicts) {
    require_nonempty(verdicts, "acc_mis");
    size_t flagged = 0;
    for (const auto& v : verdicts) {
        if (v.misleading) ++flagged;
    }
    return static_cast<double>(flagged) / static_cast<double>(verdicts.size());
}

JudgeVerdict parse_judge_output(const std::string& raw) {
    if (trim(raw).empty()) throw ParseError("empty judge output", raw);

    // Locate the last fenced block.
    std::vector<std::string> lines;
    {
        std::string cur;
        for (char c : raw) {
            if (c == '\n') {
                lines.push_back(cur);
                cur.clear();
            } else if (c != '\r') {
                cur += c;
            }
        }
        lines.push_back(cur);
    }
    std::vector<size_t> fence_lines;
    for (size_t i = 0; i < lines.size(); ++i) {
        if (trim(lines[i]).rfind("```", 0) == 0) fence_lines.push_back(i);
    }
    if (fence_lines.size() < 2) {
        throw ParseError("no fenced verdict block found", raw);
    }
    const size_t open = fence_lines[fence_lines.size() - 2];
    const size_t close = fence_lines[fence_lines.size() - 1];

    JudgeVerdict verdict;
    std::map<std::string, int> seen;
    std::vector<std::string> offenders;
    for (size_t i = open + 1; i < close; ++i) {
        const std::string line = trim(lines[i]);
        if (line.empty()) continue;
        const size_t colon = line.find(':');
        if (colon == std::string::npos) {
            offenders.push_back("unparseable line '" + line + "'");
            continue;
        }
        const std::string key = trim(line.substr(0, colon));
        const std::string value = lower(trim(line.substr(colon + 1)));
        bool* field = field_by_key(verdict, key);
        if (field == nullptr) {
            offenders.push_back("unknown key '" + key + "'");
            continue;
        }
        if (++seen[key] > 1) {
            offenders.push_back("duplicate key '" + key + "'");
            continue;
        }
        if (value == "yes") {
            *field = true;
        } else if (value == "no") {
            *field = false;
        } else {
            offenders.push_back("unrecognized value '" + value + "' for key '" + key + "'");
        }
    }
    for (const auto& key : verdict_keys()) {
        if (seen.find(key) == seen.end()) offenders.push_back("missing key '" + key + "'");
    }
    if (!offenders.empty()) {
        std::string msg = "judge verdict block invalid: ";
        for (size_t i = 0; i < offenders.size(); ++i) msg += (i ? "; " : "") + offenders[i];
        throw ParseError(msg, raw);
    }
    return verdict;
}

MetricsReport compute_metrics(const std::vector<JudgeVerdict>& verdicts) {
    MetricsReport report;
    report.acc_da = acc_da(verdicts);
    report.acc_pf = acc_pf(verdicts);
    report.acc_mis = acc_mis(verdicts);
    report.n = static_cast<int>(verdicts.size());
    size_t dm = 0, ie = 0, th = 0;
    for (const auto& v : verdicts) {
        dm += v.deep_mining ? 1 : 0;
        ie += v.innovative_expansion ? 1 : 0;
        th += v.thoughtfulness ? 1 : 0;
    }
    report.m_dm = static_cast<double>(dm) / static_cast<double>(verdicts.size());
    report.m_ie = static_cast<double>(ie) / static_cast<double>(verdicts.size());
    report.m_th = static_cast<double>(th) / static_cast<double>(verdicts.size());
    return report;
}

void to_json(json& j, const MetricsReport& r) {
    j = json{{"acc_da", r.acc_da}, {"acc_pf", r.acc_pf}, {"acc_mis", r.acc_mis}, {"n", r.n},
             {"m_dm", r.m_dm},     {"m_ie", r.m_ie},     {"m_th", r.m_th}};
}

}  // namespace calign
