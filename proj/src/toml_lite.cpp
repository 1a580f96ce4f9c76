#include "calign/toml_lite.hpp"

#include <cctype>
#include <cstdlib>
#include <sstream>

#include <nlohmann/json.hpp>

namespace calign {

namespace {

std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

// Strips a trailing comment that is not inside a quoted string.
std::string strip_comment(const std::string& line) {
    bool in_string = false;
    for (size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_string = !in_string;
        if (line[i] == '#' && !in_string) return line.substr(0, i);
    }
    return line;
}

json parse_value(const std::string& raw, size_t lineno) {
    const std::string v = trim(raw);
    if (v.empty()) throw ParseError("toml line " + std::to_string(lineno) + ": empty value");
    if (v.front() == '"') {
        if (v.size() < 2 || v.back() != '"') {
            throw ParseError("toml line " + std::to_string(lineno) + ": unterminated string");
        }
        std::string out;
        for (size_t i = 1; i + 1 < v.size(); ++i) {
            if (v[i] == '\\' && i + 2 < v.size() + 1) {
                ++i;
                switch (v[i]) {
                    case 'n': out += '\n'; break;
                    case 't': out += '\t'; break;
                    case '"': out += '"'; break;
                    case '\\': out += '\\'; break;
                    default:
                        throw ParseError("toml line " + std::to_string(lineno) + ": bad escape \\" +
                                         std::string(1, v[i]));
                }
            } else {
                out += v[i];
            }
        }
        return json(out);
    }
    if (v == "true") return json(true);
    if (v == "false") return json(false);
    // Number: float when it has a dot or exponent.
    const bool is_float = v.find('.') != std::string::npos || v.find('e') != std::string::npos ||
                          v.find('E') != std::string::npos;
    char* end = nullptr;
    if (is_float) {
        const double d = std::strtod(v.c_str(), &end);
        if (end == v.c_str() + v.size()) return json(d);
    } else {
        const long long n = std::strtoll(v.c_str(), &end, 10);
        if (end == v.c_str() + v.size()) return json(n);
    }
    throw ParseError("toml line " + std::to_string(lineno) + ": cannot parse value '" + v + "'");
}

}  // namespace

json parse_toml(const std::string& text) {
    json doc = json::object();
    json* section = &doc;
    std::istringstream in(text);
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(strip_comment(line));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ParseError("toml line " + std::to_string(lineno) + ": unterminated section header");
            }
            const std::string name = trim(line.substr(1, line.size() - 2));
            if (name.empty()) throw ParseError("toml line " + std::to_string(lineno) + ": empty section");
            section = &doc;
            std::istringstream parts(name);
            std::string part;
            while (std::getline(parts, part, '.')) {
                part = trim(part);
                if (part.empty()) {
                    throw ParseError("toml line " + std::to_string(lineno) + ": bad section name");
                }
                section = &(*section)[part];
                if (!section->is_object() && !section->is_null()) {
                    throw ParseError("toml line " + std::to_string(lineno) + ": section name collides");
                }
                if (section->is_null()) *section = json::object();
            }
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ParseError("toml line " + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw ParseError("toml line " + std::to_string(lineno) + ": empty key");
        (*section)[key] = parse_value(line.substr(eq + 1), lineno);
    }
    return doc;
}

json parse_toml_file(const std::string& path) {
    try {
        return parse_toml(read_text_file(path));
    } catch (const ParseError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

}  // namespace calign
