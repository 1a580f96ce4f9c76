#include <doctest.h>

#include <atomic>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "calign/backend.hpp"

using namespace calign;

namespace {

std::vector<ChatMessage> hello_messages() {
    return {{Role::System, "be brief"}, {Role::User, "hello"}};
}

}  // namespace

TEST_SUITE("backend") {

TEST_CASE("scripted backend replays a fingerprinted response") {
    const GenerationParams params{1.0, 64, 1};
    const auto fp = request_fingerprint(hello_messages(), params);
    ScriptedBackend backend(make_fingerprint_script({{fp, {"A"}}}));
    CHECK(backend.complete(hello_messages(), params) == std::vector<std::string>{"A"});
}

TEST_CASE("scripted backend pops the queue in order for n samples") {
    const GenerationParams params{1.0, 64, 2};
    const auto fp = request_fingerprint(hello_messages(), params);
    ScriptedBackend backend(make_fingerprint_script({{fp, {"A", "B"}}}));
    CHECK(backend.complete(hello_messages(), params) == std::vector<std::string>{"A", "B"});
}

TEST_CASE("scripted miss names the unmatched fingerprint") {
    ScriptedBackend backend(make_fingerprint_script({{"deadbeef00000000", {"x"}}}));
    const GenerationParams params{1.0, 64, 1};
    const auto fp = request_fingerprint(hello_messages(), params);
    try {
        backend.complete(hello_messages(), params);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find(fp) != std::string::npos);
    }
}

TEST_CASE("queue exhaustion is a configuration error") {
    const GenerationParams params{1.0, 64, 1};
    const auto fp = request_fingerprint(hello_messages(), params);
    ScriptedBackend backend(make_fingerprint_script({{fp, {"only"}}}));
    CHECK(backend.complete(hello_messages(), params) == std::vector<std::string>{"only"});
    CHECK_THROWS_AS(backend.complete(hello_messages(), params), ConfigError);
}

TEST_CASE("cycle entries repeat deterministically") {
    ScriptEntry e;
    e.match = "hello";
    e.responses = {"r1", "r2"};
    e.cycle = true;
    ScriptedBackend backend({e});
    const GenerationParams params{1.0, 64, 1};
    CHECK(backend.complete(hello_messages(), params)[0] == "r1");
    CHECK(backend.complete(hello_messages(), params)[0] == "r2");
    CHECK(backend.complete(hello_messages(), params)[0] == "r1");
}

TEST_CASE("replay determinism: same script and call sequence, same outputs") {
    const GenerationParams params{1.0, 64, 1};
    const auto fp = request_fingerprint(hello_messages(), params);
    auto run = [&] {
        ScriptedBackend backend(make_fingerprint_script({{fp, {"A", "B", "C"}}}));
        std::vector<std::string> out;
        for (int i = 0; i < 3; ++i) out.push_back(backend.complete(hello_messages(), params)[0]);
        return out;
    };
    CHECK(run() == run());
}

TEST_CASE("fingerprints separate role, content, and params") {
    const GenerationParams params{1.0, 64, 1};
    const auto base = request_fingerprint(hello_messages(), params);
    CHECK(base == request_fingerprint(hello_messages(), params));
    CHECK(base != request_fingerprint({{Role::User, "be brief"}, {Role::User, "hello"}}, params));
    CHECK(base != request_fingerprint({{Role::System, "be brief"}, {Role::User, "hello!"}}, params));
    GenerationParams other = params;
    other.n = 2;
    CHECK(base != request_fingerprint(hello_messages(), other));
}

TEST_CASE("with_retry retries only transport errors") {
    RetryPolicy fast{3, std::chrono::milliseconds(0), 2.0, [](std::chrono::milliseconds) {}};

    SUBCASE("fails once then succeeds") {
        int calls = 0;
        const int result = with_retry(
            [&] {
                if (++calls == 1) throw TransportError("boom", 1);
                return 42;
            },
            fast);
        CHECK(result == 42);
        CHECK(calls == 2);
    }

    SUBCASE("non-retryable error propagates immediately") {
        int calls = 0;
        CHECK_THROWS_AS(with_retry(
                            [&]() -> int {
                                ++calls;
                                throw ParseError("bad payload", "raw");
                            },
                            fast),
                        ParseError);
        CHECK(calls == 1);
    }

    SUBCASE("exhaustion lists every attempt") {
        RetryPolicy two{2, std::chrono::milliseconds(0), 2.0, [](std::chrono::milliseconds) {}};
        try {
            with_retry([&]() -> int { throw TransportError("down", 1); }, two);
            FAIL("expected RetryExhaustedError");
        } catch (const RetryExhaustedError& e) {
            CHECK(e.attempt_errors.size() == 2);
        }
    }
}

TEST_CASE("http backend round-trips against a conformance stub") {
    httplib::Server server;
    std::string seen_body;
    std::string seen_auth;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        seen_body = req.body;
        seen_auth = req.get_header_value("Authorization");
        const auto body = nlohmann::json::parse(req.body);
        std::string last_user;
        for (const auto& m : body.at("messages")) {
            if (m.at("role") == "user") last_user = m.at("content");
        }
        nlohmann::json reply;
        reply["choices"] = nlohmann::json::array();
        for (int i = 0; i < body.at("n").get<int>(); ++i) {
            reply["choices"].push_back({{"message", {{"role", "assistant"}, {"content", last_user}}}});
        }
        res.set_content(reply.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    setenv("CRITIQUE_ALIGN_API_KEY", "sk-test-key", 1);
    HttpBackend backend("http://127.0.0.1:" + std::to_string(port), "test-model");
    const auto out = backend.complete(hello_messages(), GenerationParams{0.5, 32, 1});
    REQUIRE(out.size() == 1);
    CHECK(out[0] == "hello");

    // The key travels only in the Authorization header, never the body.
    CHECK(seen_auth == "Bearer sk-test-key");
    CHECK(seen_body.find("sk-test-key") == std::string::npos);
    const auto body = nlohmann::json::parse(seen_body);
    CHECK(body.at("model") == "test-model");
    CHECK(body.at("temperature").get<double>() == doctest::Approx(0.5));
    CHECK(body.at("max_tokens") == 32);

    server.stop();
    server_thread.join();
    unsetenv("CRITIQUE_ALIGN_API_KEY");
}

TEST_CASE("malformed response body raises a parse error with the payload") {
    CHECK_THROWS_AS(HttpBackend::parse_response_body("not json", 1), ParseError);
    CHECK_THROWS_AS(HttpBackend::parse_response_body(R"({"choices": []})", 1), ParseError);
    try {
        HttpBackend::parse_response_body("<html>oops</html>", 1);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.raw == "<html>oops</html>");
    }
}

TEST_CASE("unreachable endpoint exhausts retries with transport errors") {
    RetryPolicy fast{2, std::chrono::milliseconds(0), 2.0, [](std::chrono::milliseconds) {}};
    HttpBackend backend("http://127.0.0.1:9", "model", std::chrono::seconds(1), fast);
    CHECK_THROWS_AS(backend.complete(hello_messages(), GenerationParams{1.0, 16, 1}),
                    RetryExhaustedError);
}

TEST_CASE("scripted backend is safe under concurrent callers") {
    ScriptEntry e;
    e.match = "hello";
    e.responses = {"r"};
    e.cycle = true;
    ScriptedBackend backend({e});
    std::atomic<int> ok{0};
    std::vector<std::thread> threads;
    for (int t = 0; t < 8; ++t) {
        threads.emplace_back([&] {
            for (int i = 0; i < 50; ++i) {
                if (backend.complete(hello_messages(), GenerationParams{1.0, 16, 1})[0] == "r") {
                    ok.fetch_add(1);
                }
            }
        });
    }
    for (auto& t : threads) t.join();
    CHECK(ok.load() == 400);
}

}  // TEST_SUITE
