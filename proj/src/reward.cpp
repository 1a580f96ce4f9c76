#include "calign/reward.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace calign {

namespace {

struct Line {
    size_t number;  // 1-based
    std::string text;
};

std::vector<Line> split_lines(const std::string& text) {
    std::vector<Line> lines;
    std::string cur;
    size_t n = 1;
    for (char c : text) {
        if (c == '\n') {
            lines.push_back({n++, cur});
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    lines.push_back({n, cur});
    return lines;
}

std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

bool is_blank(const std::string& s) { return trim(s).empty(); }

// Matches "score: <number>" (case-insensitive key) with nothing else on the
// line. On success fills value text (verbatim digits) and returns true.
bool match_score_line(const std::string& line, std::string& value_text) {
    size_t i = 0;
    auto skip_ws = [&] {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    };
    skip_ws();
    static const char* kKey = "score";
    for (const char* k = kKey; *k != '\0'; ++k, ++i) {
        if (i >= line.size() || std::tolower(static_cast<unsigned char>(line[i])) != *k) return false;
    }
    skip_ws();
    if (i >= line.size() || line[i] != ':') return false;
    ++i;
    skip_ws();
    const size_t value_begin = i;
    if (i < line.size() && (line[i] == '-' || line[i] == '+')) ++i;
    size_t digits = 0;
    while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i, ++digits;
    if (digits == 0) return false;
    if (i < line.size() && line[i] == '.') {
        ++i;
        size_t frac = 0;
        while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i, ++frac;
        if (frac == 0) return false;
    }
    const size_t value_end = i;
    skip_ws();
    if (i != line.size()) return false;
    value_text = line.substr(value_begin, value_end - value_begin);
    return true;
}

int fractional_digits(const std::string& value_text) {
    const size_t dot = value_text.find('.');
    return dot == std::string::npos ? 0 : static_cast<int>(value_text.size() - dot - 1);
}

struct ScoreLineScan {
    std::vector<size_t> score_line_numbers;
    std::string value_text;
    size_t last_nonempty_line = 0;
    size_t matched_line = 0;
};

ScoreLineScan scan_score_lines(const std::string& critique) {
    if (trim(critique).empty()) throw ParseError("empty critique", critique);
    ScoreLineScan scan;
    for (const auto& line : split_lines(critique)) {
        if (!is_blank(line.text)) scan.last_nonempty_line = line.number;
        std::string value;
        if (match_score_line(line.text, value)) {
            scan.score_line_numbers.push_back(line.number);
            scan.value_text = value;
            scan.matched_line = line.number;
        }
    }
    if (scan.score_line_numbers.empty()) {
        throw ParseError("no score line found (expected a final line of the form 'Score: <d>')", critique);
    }
    if (scan.score_line_numbers.size() > 1) {
        std::string where;
        for (size_t ln : scan.score_line_numbers) where += (where.empty() ? "" : ", ") + std::to_string(ln);
        throw ParseError("duplicate score lines at lines " + where, critique);
    }
    if (scan.matched_line != scan.last_nonempty_line) {
        throw ParseError("score line at line " + std::to_string(scan.matched_line) +
                             " is not the last non-empty line (line " +
                             std::to_string(scan.last_nonempty_line) + ")",
                         critique);
    }
    return scan;
}

}  // namespace

double extract_score(const std::string& critique) {
    const ScoreLineScan scan = scan_score_lines(critique);
    if (fractional_digits(scan.value_text) > 4) {
        throw ParseError("score '" + scan.value_text + "' has more than 4 fractional digits", critique);
    }
    const double value = std::stod(scan.value_text);
    if (!(value >= 0.0 && value <= 1.0)) {
        throw RangeError("score " + scan.value_text + " out of [0,1]");
    }
    return value;
}

double extract_score_raw(const std::string& critique) {
    return std::stod(scan_score_lines(critique).value_text);
}

std::string format_score(double score) {
    if (!std::isfinite(score) || score < 0.0 || score > 1.0) {
        throw DomainError("format_score requires a finite value in [0,1]");
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", score);
    std::string digits = buf;
    while (!digits.empty() && digits.back() == '0') digits.pop_back();
    if (!digits.empty() && digits.back() == '.') digits.pop_back();
    return "Score: " + digits;
}

std::string strip_score_line(const std::string& critique) {
    const ScoreLineScan scan = scan_score_lines(critique);
    std::string out;
    for (const auto& line : split_lines(critique)) {
        if (line.number == scan.matched_line) continue;
        if (!out.empty()) out += '\n';
        out += line.text;
    }
    return trim(out);
}

double sft_loss(const std::vector<SegmentedLogProbs>& batch) {
    if (batch.empty()) throw DomainError("sft_loss: empty batch");
    double total = 0.0;
    for (const auto& record : batch) {
        for (const auto& step : record.steps) {
            for (double lp : step.critique_logprobs) {
                if (!(lp <= 0.0)) throw DomainError("sft_loss: positive critique log-probability");
                total += lp;
            }
            for (double lp : step.score_logprobs) {
                if (!(lp <= 0.0)) throw DomainError("sft_loss: positive score log-probability");
                total += lp;
            }
        }
    }
    return -total / static_cast<double>(batch.size());
}

double dense_reward(const std::vector<StepAnnotation>& annotations) {
    if (annotations.empty()) throw DomainError("dense_reward: empty annotation sequence");
    double sum = 0.0;
    for (const auto& a : annotations) sum += a.score;
    return sum;
}

namespace {

// "Step <k>:" header; returns the content start past the colon, or npos.
size_t match_step_header(const std::string& line) {
    size_t i = 0;
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    static const char* kKey = "step";
    for (const char* k = kKey; *k != '\0'; ++k, ++i) {
        if (i >= line.size() || std::tolower(static_cast<unsigned char>(line[i])) != *k) {
            return std::string::npos;
        }
    }
    if (i >= line.size() || (line[i] != ' ' && line[i] != '\t')) return std::string::npos;
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    size_t digits = 0;
    while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i, ++digits;
    if (digits == 0) return std::string::npos;
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    if (i >= line.size() || line[i] != ':') return std::string::npos;
    return i + 1;
}

}  // namespace

std::vector<ReasoningStep> split_response_into_steps(const std::string& response) {
    if (trim(response).empty()) throw SegmentationError("response is empty or whitespace-only");
    const auto lines = split_lines(response);

    bool has_markers = false;
    for (const auto& line : lines) {
        if (match_step_header(line.text) != std::string::npos) {
            has_markers = true;
            break;
        }
    }

    std::vector<std::string> raw_steps;
    if (has_markers) {
        // Text before the first header is boilerplate and is dropped.
        std::string cur;
        bool in_step = false;
        for (const auto& line : lines) {
            const size_t content = match_step_header(line.text);
            if (content != std::string::npos) {
                if (in_step) raw_steps.push_back(cur);
                cur = line.text.substr(content);
                in_step = true;
            } else if (in_step) {
                cur += '\n' + line.text;
            }
        }
        if (in_step) raw_steps.push_back(cur);
    } else {
        std::string cur;
        for (const auto& line : lines) {
            if (is_blank(line.text)) {
                if (!cur.empty()) raw_steps.push_back(cur);
                cur.clear();
            } else {
                if (!cur.empty()) cur += '\n';
                cur += line.text;
            }
        }
        if (!cur.empty()) raw_steps.push_back(cur);
    }

    std::vector<ReasoningStep> steps;
    for (auto& raw : raw_steps) {
        std::string text = trim(raw);
        if (text.empty()) continue;
        steps.push_back(ReasoningStep{static_cast<int>(steps.size()) + 1, std::move(text), std::nullopt});
    }
    if (steps.empty()) throw SegmentationError("no non-empty steps in response");
    return steps;
}

StepAnnotation critique_and_score(Backend& backend, const PromptCall& call) {
    const std::string completion = backend.complete(call.messages, call.params).at(0);
    StepAnnotation ann;
    ann.score = extract_score(completion);
    ann.critique = strip_score_line(completion);
    if (ann.critique.empty()) {
        throw ParseError("critique is empty apart from the score line", completion);
    }
    return ann;
}

std::vector<StepAnnotation> score_response(Backend& backend, const Preference& preference, const Query& query,
                                           const std::vector<ReasoningStep>& response_steps,
                                           const PromptTemplates& templates) {
    if (response_steps.empty()) throw DomainError("score_response: response has no steps");
    std::vector<StepAnnotation> annotations;
    annotations.reserve(response_steps.size());
    for (size_t j = 1; j <= response_steps.size(); ++j) {
        const std::vector<ReasoningStep> prefix(response_steps.begin(),
                                                response_steps.begin() + static_cast<long>(j));
        try {
            annotations.push_back(
                critique_and_score(backend, build_prm_call(templates, preference, query, prefix)));
        } catch (const ParseError& e) {
            throw ParseError("scoring failed at step " + std::to_string(j) + ": " + e.what(), e.raw);
        }
    }
    return annotations;
}

}  // namespace calign
