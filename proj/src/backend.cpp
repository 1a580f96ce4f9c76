#include "calign/backend.hpp"

#include <cstdio>
#include <cstdlib>

#include <nlohmann/json.hpp>

// httplib spawns a thread per connection; keep the client minimal.
#include <httplib.h>

namespace calign {

std::string to_string(Role role) {
    switch (role) {
        case Role::System: return "system";
        case Role::User: return "user";
        case Role::Assistant: return "assistant";
    }
    return "user";
}

Role role_from_string(const std::string& s) {
    if (s == "system") return Role::System;
    if (s == "user") return Role::User;
    if (s == "assistant") return Role::Assistant;
    throw ParseError("unknown chat role: '" + s + "'");
}

namespace {

// FNV-1a, 64-bit. Stable across runs and platforms.
uint64_t fnv1a(uint64_t h, const std::string& s) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string rendered_conversation(const std::vector<ChatMessage>& messages) {
    std::string all;
    for (const auto& m : messages) {
        if (!all.empty()) all += '\n';
        all += m.content;
    }
    return all;
}

}  // namespace

std::string request_fingerprint(const std::vector<ChatMessage>& messages,
                                const GenerationParams& params) {
    uint64_t h = 14695981039346656037ULL;
    for (const auto& m : messages) {
        h = fnv1a(h, to_string(m.role));
        h = fnv1a(h, "\x1e");
        h = fnv1a(h, m.content);
        h = fnv1a(h, "\x1f");
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "t=%.6g;m=%d;n=%d", params.temperature, params.max_tokens, params.n);
    h = fnv1a(h, buf);
    char out[17];
    std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
    return out;
}

ScriptedBackend::ScriptedBackend(std::vector<ScriptEntry> entries) {
    entries_.reserve(entries.size());
    for (auto& e : entries) {
        if (e.fingerprint.empty() == e.match.empty()) {
            throw ConfigError("script entry must set exactly one of 'fingerprint' or 'match'");
        }
        if (e.responses.empty()) throw ConfigError("script entry has no responses");
        EntryState st;
        st.queue.assign(e.responses.begin(), e.responses.end());
        st.entry = std::move(e);
        entries_.push_back(std::move(st));
    }
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_file(const std::string& path) {
    json doc;
    try {
        doc = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError("script file " + path + " is not valid JSON: " + e.what());
    }
    std::vector<ScriptEntry> entries;
    for (const auto& je : doc.at("entries")) {
        ScriptEntry e;
        e.fingerprint = je.value("fingerprint", std::string{});
        e.match = je.value("match", std::string{});
        e.cycle = je.value("cycle", false);
        for (const auto& r : je.at("responses")) e.responses.push_back(r.get<std::string>());
        entries.push_back(std::move(e));
    }
    return std::make_shared<ScriptedBackend>(std::move(entries));
}

std::vector<std::string> ScriptedBackend::complete(const std::vector<ChatMessage>& messages,
                                                   const GenerationParams& params) {
    if (params.n < 1) throw ConfigError("GenerationParams.n must be >= 1");
    const std::string fp = request_fingerprint(messages, params);
    const std::string conversation = rendered_conversation(messages);

    std::lock_guard<std::mutex> lock(mu_);
    for (auto& st : entries_) {
        const bool hit = !st.entry.fingerprint.empty()
                             ? st.entry.fingerprint == fp
                             : conversation.find(st.entry.match) != std::string::npos;
        if (!hit) continue;
        std::vector<std::string> out;
        out.reserve(static_cast<size_t>(params.n));
        for (int i = 0; i < params.n; ++i) {
            if (st.entry.cycle) {
                out.push_back(st.entry.responses[st.cursor % st.entry.responses.size()]);
                ++st.cursor;
            } else {
                if (st.queue.empty()) {
                    throw ConfigError("script queue exhausted for fingerprint " + fp +
                                      " (needed " + std::to_string(params.n) + " responses)");
                }
                out.push_back(st.queue.front());
                st.queue.pop_front();
            }
        }
        return out;
    }
    throw ConfigError("no script entry matches request fingerprint " + fp);
}

std::vector<ScriptEntry> make_fingerprint_script(
    const std::vector<std::pair<std::string, std::vector<std::string>>>& fp_to_responses) {
    std::vector<ScriptEntry> entries;
    entries.reserve(fp_to_responses.size());
    for (const auto& [fp, responses] : fp_to_responses) {
        ScriptEntry e;
        e.fingerprint = fp;
        e.responses = responses;
        entries.push_back(std::move(e));
    }
    return entries;
}

HttpBackend::HttpBackend(std::string endpoint, std::string model_name, std::chrono::seconds timeout,
                         RetryPolicy retry)
    : endpoint_(std::move(endpoint)), model_(std::move(model_name)), timeout_(timeout), retry_(std::move(retry)) {
    if (endpoint_.empty() || model_.empty()) {
        throw ConfigError("http backend requires non-empty endpoint and model_name");
    }
    // Normalize: no trailing slash.
    while (!endpoint_.empty() && endpoint_.back() == '/') endpoint_.pop_back();
}

std::string HttpBackend::build_request_body(const std::string& model,
                                            const std::vector<ChatMessage>& messages,
                                            const GenerationParams& params) {
    json body;
    body["model"] = model;
    body["messages"] = json::array();
    for (const auto& m : messages) {
        body["messages"].push_back({{"role", to_string(m.role)}, {"content", m.content}});
    }
    body["temperature"] = params.temperature;
    body["max_tokens"] = params.max_tokens;
    body["n"] = params.n;
    return body.dump();
}

std::vector<std::string> HttpBackend::parse_response_body(const std::string& body, int expected_n) {
    json doc;
    try {
        doc = json::parse(body);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("chat response is not valid JSON: ") + e.what(), body);
    }
    std::vector<std::string> out;
    try {
        for (const auto& choice : doc.at("choices")) {
            out.push_back(choice.at("message").at("content").get<std::string>());
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("chat response missing choices[*].message.content: ") + e.what(), body);
    }
    if (static_cast<int>(out.size()) != expected_n) {
        throw ParseError("chat response has " + std::to_string(out.size()) + " choices, expected " +
                             std::to_string(expected_n),
                         body);
    }
    return out;
}

std::vector<std::string> HttpBackend::complete(const std::vector<ChatMessage>& messages,
                                               const GenerationParams& params) {
    if (params.n < 1) throw ConfigError("GenerationParams.n must be >= 1");
    const std::string body = build_request_body(model_, messages, params);
    int attempt = 0;
    auto once = [&]() -> std::vector<std::string> {
        ++attempt;
        httplib::Client client(endpoint_);
        client.set_connection_timeout(timeout_.count(), 0);
        client.set_read_timeout(timeout_.count(), 0);
        client.set_write_timeout(timeout_.count(), 0);
        httplib::Headers headers;
        if (const char* key = std::getenv("CRITIQUE_ALIGN_API_KEY"); key != nullptr && *key != '\0') {
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }
        auto res = client.Post("/v1/chat/completions", headers, body, "application/json");
        if (!res) {
            throw TransportError("transport failure against " + endpoint_ + ": " + httplib::to_string(res.error()),
                                 attempt);
        }
        if (res->status == 429 || res->status >= 500) {
            throw TransportError("HTTP " + std::to_string(res->status) + " from " + endpoint_, attempt);
        }
        if (res->status != 200) {
            throw Error("HTTP " + std::to_string(res->status) + " from " + endpoint_ + ": " + res->body);
        }
        return parse_response_body(res->body, params.n);
    };
    return with_retry(once, retry_);
}

std::shared_ptr<Backend> open_backend(const BackendSpec& spec) {
    if (spec.kind == BackendKind::Scripted) {
        if (spec.script_path.empty()) throw ConfigError("scripted backend requires a script file");
        return ScriptedBackend::from_file(spec.script_path);
    }
    return std::make_shared<HttpBackend>(spec.endpoint, spec.model_name);
}

}  // namespace calign
