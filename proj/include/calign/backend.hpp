#pragma once
// Pluggable text-generation backends.
//
// Two kinds: an HTTP client speaking the OpenAI-compatible chat-completions
// protocol (POST {endpoint}/v1/chat/completions), and a deterministic
// scripted backend for tests and mock pipelines. Backends are safe to call
// from many threads; the scripted backend serializes its queue pops.

#include <chrono>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "calign/core.hpp"
#include "calign/errors.hpp"

namespace calign {

enum class Role { System, User, Assistant };

std::string to_string(Role role);
Role role_from_string(const std::string& s);

struct ChatMessage {
    Role role = Role::User;
    std::string content;
};

struct GenerationParams {
    double temperature = 1.0;
    int max_tokens = 1024;
    int n = 1;  // number of samples
};

enum class BackendKind { Http, Scripted };

// Declarative backend description, as it appears in the config file.
struct BackendSpec {
    BackendKind kind = BackendKind::Scripted;
    std::string endpoint;     // http only, e.g. "http://localhost:8000"
    std::string model_name;   // http only
    std::string script_path;  // scripted only
};

// Stable fingerprint of a request: hashes the (role, content) pairs and the
// generation params. Used as the scripted backend's lookup key.
std::string request_fingerprint(const std::vector<ChatMessage>& messages,
                                const GenerationParams& params);

class Backend {
public:
    virtual ~Backend() = default;
    // Returns exactly params.n generated texts or throws.
    virtual std::vector<std::string> complete(const std::vector<ChatMessage>& messages,
                                              const GenerationParams& params) = 0;
};

// One entry of a script. Matched in order; the first hit serves the request.
//   - fingerprint: exact request fingerprint (see request_fingerprint)
//   - match: substring of the rendered conversation (all contents joined by \n)
// Exactly one of the two must be set. "queue" entries consume responses FIFO
// and error when exhausted; "cycle" entries repeat their list forever.
struct ScriptEntry {
    std::string fingerprint;
    std::string match;
    std::vector<std::string> responses;
    bool cycle = false;
};

// Deterministic replay backend. A given call sequence over a fresh script
// always produces the same outputs.
class ScriptedBackend : public Backend {
public:
    explicit ScriptedBackend(std::vector<ScriptEntry> entries);

    // Loads the JSON script file: {"entries": [{"fingerprint"|"match", "responses", "cycle"?}]}
    static std::shared_ptr<ScriptedBackend> from_file(const std::string& path);

    std::vector<std::string> complete(const std::vector<ChatMessage>& messages,
                                      const GenerationParams& params) override;

private:
    struct EntryState {
        ScriptEntry entry;
        std::deque<std::string> queue;  // queue mode
        size_t cursor = 0;              // cycle mode
    };
    std::vector<EntryState> entries_;
    std::mutex mu_;
};

// Convenience builder used heavily by tests: maps an exact request to a
// FIFO queue of canned responses.
std::vector<ScriptEntry> make_fingerprint_script(
    const std::vector<std::pair<std::string, std::vector<std::string>>>& fp_to_responses);

struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{1000};
    double multiplier = 2.0;
    // Injectable for tests; defaults to std::this_thread::sleep_for.
    std::function<void(std::chrono::milliseconds)> sleeper;
};

// Runs op, retrying only TransportError. Non-retryable errors propagate on
// the first attempt; exhaustion throws RetryExhaustedError carrying every
// attempt's message.
template <typename F>
auto with_retry(F&& op, const RetryPolicy& policy) -> decltype(op()) {
    if (policy.max_attempts < 1) throw ConfigError("with_retry: max_attempts must be >= 1");
    std::vector<std::string> attempt_errors;
    auto backoff = policy.initial_backoff;
    for (int attempt = 1; attempt <= policy.max_attempts; ++attempt) {
        try {
            return op();
        } catch (const TransportError& e) {
            attempt_errors.push_back(e.what());
            if (attempt == policy.max_attempts) break;
            if (policy.sleeper) {
                policy.sleeper(backoff);
            } else {
                std::this_thread::sleep_for(backoff);
            }
            backoff = std::chrono::milliseconds(
                static_cast<long long>(static_cast<double>(backoff.count()) * policy.multiplier));
        }
    }
    throw RetryExhaustedError("all " + std::to_string(policy.max_attempts) + " attempts failed; last: " +
                                  attempt_errors.back(),
                              attempt_errors);
}

// OpenAI-compatible chat-completions client. The API key is read from the
// CRITIQUE_ALIGN_API_KEY environment variable and travels only in the
// Authorization header, never in the request body.
class HttpBackend : public Backend {
public:
    HttpBackend(std::string endpoint, std::string model_name,
                std::chrono::seconds timeout = std::chrono::seconds(60),
                RetryPolicy retry = {});

    std::vector<std::string> complete(const std::vector<ChatMessage>& messages,
                                      const GenerationParams& params) override;

    // Exposed for conformance tests.
    static std::string build_request_body(const std::string& model,
                                          const std::vector<ChatMessage>& messages,
                                          const GenerationParams& params);
    static std::vector<std::string> parse_response_body(const std::string& body, int expected_n);

private:
    std::string endpoint_;
    std::string model_;
    std::chrono::seconds timeout_;
    RetryPolicy retry_;
};

// Instantiates the backend described by spec.
std::shared_ptr<Backend> open_backend(const BackendSpec& spec);

}  // namespace calign
