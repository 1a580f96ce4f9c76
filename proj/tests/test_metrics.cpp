#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>

#include <nlohmann/json.hpp>

#include "calign/metrics.hpp"

using namespace calign;

namespace {

// Bit i of the mask drives flag i, in declaration order.
JudgeVerdict verdict_from_mask(unsigned mask) {
    JudgeVerdict v;
    v.deep_mining = mask & 1u;
    v.innovative_expansion = mask & 2u;
    v.thoughtfulness = mask & 4u;
    v.misleading = mask & 8u;
    v.err_unaware = mask & 16u;
    v.err_hallucination = mask & 32u;
    v.err_inconsistent = mask & 64u;
    v.err_unhelpful = mask & 128u;
    return v;
}

// Naive per-item loops, kept independent of the implementation.
double oracle_da(const std::vector<JudgeVerdict>& vs) {
    double s = 0;
    for (const auto& v : vs) {
        int best = 0;
        if (v.deep_mining) best = 1;
        if (v.innovative_expansion) best = std::max(best, 1);
        if (v.thoughtfulness) best = std::max(best, 1);
        s += best;
    }
    return s / static_cast<double>(vs.size());
}

double oracle_pf(const std::vector<JudgeVerdict>& vs) {
    double s = 0;
    for (const auto& v : vs) {
        int worst = 0;
        if (v.err_unaware) worst = 1;
        if (v.err_hallucination) worst = std::max(worst, 1);
        if (v.err_inconsistent) worst = std::max(worst, 1);
        if (v.err_unhelpful) worst = std::max(worst, 1);
        s += 1 - worst;
    }
    return s / static_cast<double>(vs.size());
}

double oracle_mis(const std::vector<JudgeVerdict>& vs) {
    double s = 0;
    for (const auto& v : vs) s += v.misleading ? 1 : 0;
    return s / static_cast<double>(vs.size());
}

std::string verdict_block(const std::map<std::string, std::string>& kv) {
    std::string out = "Reasoning first.\n```\n";
    for (const auto& [k, v] : kv) out += k + ": " + v + "\n";
    out += "```";
    return out;
}

std::map<std::string, std::string> all_no() {
    return {{"deep_mining", "no"},   {"innovative_expansion", "no"}, {"thoughtfulness", "no"},
            {"misleading", "no"},    {"err_unaware", "no"},          {"err_hallucination", "no"},
            {"err_inconsistent", "no"}, {"err_unhelpful", "no"}};
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("direct formula evaluations") {
    JudgeVerdict dm;
    dm.deep_mining = true;
    JudgeVerdict none;
    CHECK(acc_da({dm, none}) == 0.5);

    JudgeVerdict all;
    all.deep_mining = all.innovative_expansion = all.thoughtfulness = true;
    CHECK(acc_da({all, all, all}) == 1.0);

    JudgeVerdict hallucinating;
    hallucinating.err_hallucination = true;
    CHECK(acc_pf({hallucinating}) == 0.0);
    CHECK(acc_pf({none, none, none, none}) == 1.0);

    JudgeVerdict misleading;
    misleading.misleading = true;
    CHECK(acc_mis({misleading, none, none, none}) == 0.25);
    CHECK(acc_mis({none, none}) == 0.0);
    CHECK(acc_mis({misleading, misleading}) == 1.0);
}

TEST_CASE("empty input is a domain error") {
    CHECK_THROWS_AS(acc_da({}), DomainError);
    CHECK_THROWS_AS(acc_pf({}), DomainError);
    CHECK_THROWS_AS(acc_mis({}), DomainError);
}

TEST_CASE("metrics equal the naive loops on all 256 single-verdict cases") {
    for (unsigned mask = 0; mask < 256; ++mask) {
        const std::vector<JudgeVerdict> one = {verdict_from_mask(mask)};
        CHECK(acc_da(one) == oracle_da(one));
        CHECK(acc_pf(one) == oracle_pf(one));
        CHECK(acc_mis(one) == oracle_mis(one));
    }
}

TEST_CASE("metrics equal the naive loops on random batches") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<JudgeVerdict> vs;
        for (int i = 0; i < 100; ++i) vs.push_back(verdict_from_mask(static_cast<unsigned>(rng() % 256)));
        CHECK(acc_da(vs) == doctest::Approx(oracle_da(vs)).epsilon(1e-15));
        CHECK(acc_pf(vs) == doctest::Approx(oracle_pf(vs)).epsilon(1e-15));
        CHECK(acc_mis(vs) == doctest::Approx(oracle_mis(vs)).epsilon(1e-15));
    }
}

TEST_CASE("metrics are permutation invariant") {
    std::mt19937_64 rng(7);
    std::vector<JudgeVerdict> vs;
    for (int i = 0; i < 40; ++i) vs.push_back(verdict_from_mask(static_cast<unsigned>(rng() % 256)));
    auto shuffled = vs;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(acc_da(vs) == acc_da(shuffled));
    CHECK(acc_pf(vs) == acc_pf(shuffled));
    CHECK(acc_mis(vs) == acc_mis(shuffled));
}

TEST_CASE("flipping a success criterion up never lowers acc_da") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<JudgeVerdict> vs;
        for (int i = 0; i < 20; ++i) vs.push_back(verdict_from_mask(static_cast<unsigned>(rng() % 256)));
        const double before_da = acc_da(vs);
        const double before_pf = acc_pf(vs);
        auto& target = vs[rng() % vs.size()];
        switch (rng() % 3) {
            case 0: target.deep_mining = true; break;
            case 1: target.innovative_expansion = true; break;
            default: target.thoughtfulness = true; break;
        }
        CHECK(acc_da(vs) >= before_da);
        switch (rng() % 4) {
            case 0: target.err_unaware = true; break;
            case 1: target.err_hallucination = true; break;
            case 2: target.err_inconsistent = true; break;
            default: target.err_unhelpful = true; break;
        }
        CHECK(acc_pf(vs) <= before_pf);
    }
}

TEST_CASE("judge output parsing") {
    SUBCASE("an all-no block is all false") {
        const JudgeVerdict v = parse_judge_output(verdict_block(all_no()));
        CHECK_FALSE(v.deep_mining);
        CHECK_FALSE(v.misleading);
        CHECK_FALSE(v.err_unhelpful);
    }
    SUBCASE("values are case-insensitive") {
        auto kv = all_no();
        kv["deep_mining"] = "YES";
        const JudgeVerdict v = parse_judge_output(verdict_block(kv));
        CHECK(v.deep_mining);
    }
    SUBCASE("a missing key is named in the error") {
        auto kv = all_no();
        kv.erase("misleading");
        try {
            parse_judge_output(verdict_block(kv));
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find("misleading") != std::string::npos);
        }
    }
    SUBCASE("duplicates and unknown keys are reported") {
        std::string block = "```\n";
        for (const auto& [k, v] : all_no()) block += k + ": " + v + "\n";
        block += "deep_mining: yes\nmystery_flag: yes\n```";
        try {
            parse_judge_output(block);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("duplicate key 'deep_mining'") != std::string::npos);
            CHECK(msg.find("unknown key 'mystery_flag'") != std::string::npos);
        }
    }
    SUBCASE("bad values are reported") {
        auto kv = all_no();
        kv["thoughtfulness"] = "maybe";
        CHECK_THROWS_AS(parse_judge_output(verdict_block(kv)), ParseError);
    }
    SUBCASE("text without a fenced block is unparseable") {
        CHECK_THROWS_AS(parse_judge_output("deep_mining: yes"), ParseError);
    }
    SUBCASE("the last fenced block wins") {
        auto kv = all_no();
        kv["misleading"] = "yes";
        const std::string raw = "```\nsome earlier fence\n```\nthoughts\n" + verdict_block(kv);
        CHECK(parse_judge_output(raw).misleading);
    }
}

TEST_CASE("report carries the three accuracies and per-criterion rates") {
    std::vector<JudgeVerdict> vs;
    JudgeVerdict a;
    a.deep_mining = true;
    a.thoughtfulness = true;
    JudgeVerdict b;
    b.misleading = true;
    b.err_unaware = true;
    vs = {a, b};
    const MetricsReport r = compute_metrics(vs);
    CHECK(r.n == 2);
    CHECK(r.acc_da == 0.5);
    CHECK(r.acc_pf == 0.5);
    CHECK(r.acc_mis == 0.5);
    CHECK(r.m_dm == 0.5);
    CHECK(r.m_ie == 0.0);
    CHECK(r.m_th == 0.5);
    const json j = r;
    CHECK(j.at("n") == 2);
    CHECK(j.contains("acc_da"));
    CHECK(j.contains("m_th"));
}

TEST_CASE("verdict serialization round-trips") {
    const JudgeVerdict v = verdict_from_mask(0b10110010);
    const json j = v;
    const auto back = j.get<JudgeVerdict>();
    CHECK(json(back).dump() == j.dump());
}

}  // TEST_SUITE
