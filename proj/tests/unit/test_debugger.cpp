#include "doctest.h"

#include <random>

#include "../fixtures.hpp"
#include "xplain/debugger.hpp"
#include "xplain/errors.hpp"

using namespace xplain;

TEST_CASE("overall is the mean of the three dimensions") {
    CHECK(overall(5, 5, 5) == 5.0);
    CHECK(format_overall(overall(4.05, 3.65, 4.10)) == "3.93");
    CHECK(format_overall(overall(3.50, 2.95, 3.65)) == "3.37");
    CHECK(format_overall(DebuggerScore{4, 3, 4}.overall()) == "3.67");
    // Symmetric and monotone.
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> step(20, 100);
    for (int i = 0; i < 200; ++i) {
        double f = step(rng) * 0.05, c = step(rng) * 0.05, a = step(rng) * 0.05;
        CHECK(overall(f, c, a) == doctest::Approx(overall(a, f, c)).epsilon(1e-15));
        CHECK(overall(f, c, a) == doctest::Approx(overall(c, a, f)).epsilon(1e-15));
        if (f + 0.05 <= 5.0) CHECK(overall(f + 0.05, c, a) > overall(f, c, a));
    }
}

TEST_CASE("parse_scores") {
    CHECK(parse_scores("Faithfulness: 4 | Completeness: 3 | Accuracy: 4") == DebuggerScore{4, 3, 4});
    CHECK(parse_scores("Accuracy: 5 | Faithfulness: 5 | Completeness: 5") == DebuggerScore{5, 5, 5});
    CHECK(parse_scores("Accuracy: 5 | Faithfulness: 5 | Completeness: 5").overall() == 5.0);
    CHECK(parse_scores("Sure! Here is my assessment.\nfaithfulness: 2 | COMPLETENESS: 1 | accuracy: 3\nThanks.") ==
          DebuggerScore{2, 1, 3});
    CHECK(parse_scores("Faithfulness: 3.5 | Completeness: 4.25 | Accuracy: 2.05") == DebuggerScore{3.5, 4.25, 2.05});
    // Labels spread across lines still parse.
    CHECK(parse_scores("Faithfulness: 4\nCompleteness: 4\nAccuracy: 2") == DebuggerScore{4, 4, 2});

    CHECK_THROWS_AS(parse_scores("Faithfulness: 6 | Completeness: 3 | Accuracy: 4"), ParseError);
    CHECK_THROWS_AS(parse_scores("Faithfulness: 0 | Completeness: 3 | Accuracy: 4"), ParseError);
    CHECK_THROWS_AS(parse_scores("Faithfulness: 4.03 | Completeness: 3 | Accuracy: 4"), ParseError);
    CHECK_THROWS_AS(parse_scores("Faithfulness: 4 | Completeness: 3"), ParseError);
    CHECK_THROWS_AS(parse_scores(""), ParseError);
    try {
        parse_scores("no scores here");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("no scores here") != std::string::npos);
    }
}

TEST_CASE("render and parse round trip over every integer triple") {
    int n = 0;
    for (int f = 1; f <= 5; ++f) {
        for (int c = 1; c <= 5; ++c) {
            for (int a = 1; a <= 5; ++a) {
                DebuggerScore s{double(f), double(c), double(a)};
                CHECK(parse_scores(render(s)) == s);
                ++n;
            }
        }
    }
    CHECK(n == 125);
    CHECK(render({4, 3, 4}) == "Faithfulness: 4 | Completeness: 3 | Accuracy: 4");
    CHECK(render({3.5, 4.25, 1}) == "Faithfulness: 3.5 | Completeness: 4.25 | Accuracy: 1");
}

TEST_CASE("debugger prompt") {
    auto inst = testing::worked_instance();
    auto prompt = build_debugger_prompt(inst);
    for (const char* heading : {"Faithfulness:", "Completeness:", "Accuracy:", "scale from 1 to 5", "LM debuggers"}) {
        CHECK(prompt.find(heading) != std::string::npos);
    }
    CHECK(prompt.find(inst.question) != std::string::npos);
    CHECK(prompt.find("E. unfeeling") != std::string::npos);
    CHECK(prompt == build_debugger_prompt(inst));

    auto other = inst;
    other.explanation_why = "A different why text.";
    auto p2 = build_debugger_prompt(other);
    auto a = prompt.find(inst.explanation_why);
    REQUIRE(a != std::string::npos);
    CHECK(prompt.substr(0, a) == p2.substr(0, a));
    CHECK(prompt.substr(a + inst.explanation_why.size()) == p2.substr(a + other.explanation_why.size()));

    auto empty = inst;
    empty.explanation_why_not = "";
    CHECK_THROWS_AS(build_debugger_prompt(empty), ArgumentError);
}

TEST_CASE("score_instance") {
    auto inst = testing::worked_instance();
    ScoringOptions fast{3, std::chrono::milliseconds(0)};

    MockChatClient direct;
    direct.push("Faithfulness: 4 | Completeness: 3 | Accuracy: 4");
    CHECK(score_instance(inst, direct, fast) == DebuggerScore{4, 3, 4});
    CHECK(direct.calls() == 1);

    MockChatClient reask;
    reask.push("I think it is quite good overall.");
    reask.push("Faithfulness: 5 | Completeness: 4 | Accuracy: 4");
    CHECK(score_instance(inst, reask, fast) == DebuggerScore{5, 4, 4});
    REQUIRE(reask.calls() == 2);
    CHECK(reask.requests()[1].back().content == kScoreFormatReminder);

    MockChatClient garbage;
    garbage.push("garbage");
    garbage.push("still garbage");
    CHECK_THROWS_AS(score_instance(inst, garbage, fast), EvaluationError);

    MockChatClient flaky;
    flaky.push_failure();
    flaky.push("Faithfulness: 2 | Completeness: 2 | Accuracy: 2");
    CHECK(score_instance(inst, flaky, fast) == DebuggerScore{2, 2, 2});
}
