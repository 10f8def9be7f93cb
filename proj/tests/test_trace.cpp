#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "lachesis/rng.hpp"
#include "lachesis/trace.hpp"
#include "lachesis/trace_io.hpp"

using namespace lachesis;

namespace {

// Independent exact fraction for the voting oracle: cross-multiplied adds,
// gcd reduction, no shared code with the library's Rational.
struct Frac {
    long long num = 0;
    long long den = 1;

    void reduce() {
        long long g = std::gcd(num < 0 ? -num : num, den);
        if (g > 1) { num /= g; den /= g; }
        if (num == 0) den = 1;
    }
    Frac& operator+=(const Frac& o) {
        num = num * o.den + o.num * den;
        den = den * o.den;
        reduce();
        return *this;
    }
    bool operator==(const Frac& o) const { return num * o.den == o.num * den; }
};

// Brute-force per-run vote mass enumeration.
std::map<std::string, Frac> oracle_votes(const BugTrace& bug) {
    std::map<std::string, Frac> out;
    const long long runs = static_cast<long long>(bug.runs.size());
    for (const ReasoningRun& run : bug.runs) {
        if (run.answer.empty()) continue;
        for (const std::string& m : run.answer) {
            Frac share{1, runs * static_cast<long long>(run.answer.size())};
            out[m] += share;
        }
    }
    return out;
}

ReasoningRun run_with_answer(std::vector<std::string> answer) {
    ReasoningRun run;
    run.answer = std::move(answer);
    return run;
}

BugTrace bug_with_answers(std::vector<std::vector<std::string>> answers,
                          std::string ground_truth = "a") {
    BugTrace bug;
    bug.bug_id = "b";
    bug.ground_truth = std::move(ground_truth);
    for (auto& a : answers) bug.runs.push_back(run_with_answer(std::move(a)));
    return bug;
}

BugTrace random_bug(SplitMix64& rng, int runs, int symbols) {
    BugTrace bug;
    bug.bug_id = "r";
    bug.ground_truth = "m" + std::to_string(rng.next_below(symbols));
    for (int r = 0; r < runs; ++r) {
        std::set<std::string> answer;
        const int size = std::min(static_cast<int>(rng.next_below(4)), symbols);  // 0..3 answers
        while (static_cast<int>(answer.size()) < size)
            answer.insert("m" + std::to_string(rng.next_below(symbols)));
        bug.runs.push_back(run_with_answer({answer.begin(), answer.end()}));
    }
    return bug;
}

const char* kMinimalFile = R"json({
  "R": 2,
  "N": 10,
  "functions": {"get_coverage": 0, "get_snippet": 1},
  "bugs": [
    {
      "bug_id": "demo-1",
      "dataset": "bugsinpy",
      "ground_truth": "pkg.m1()",
      "runs": [
        {"steps": [{"function": 0, "argument": "pkg.m1()", "resolved": true}],
         "answer": ["pkg.m1()"]},
        {"steps": [{"function": 1, "argument": null, "resolved": true}],
         "answer": []}
      ]
    }
  ]
})json";

}  // namespace

TEST_CASE("ingest round-trips a minimal record") {
    const TraceFile file = parse_traces(kMinimalFile);
    REQUIRE(file.runs_per_bug == 2);
    REQUIRE(file.max_steps == 10);
    REQUIRE(file.bugs.size() == 1);
    REQUIRE(file.bugs[0].runs.size() == 2);
    REQUIRE(file.bugs[0].runs[0].steps.size() == 1);
    REQUIRE(file.bugs[0].runs[0].steps[0].argument == "pkg.m1()");
    REQUIRE(file.bugs[0].runs[1].steps[0].argument == std::nullopt);
}

TEST_CASE("ingest rejects malformed records naming the bug and field") {
    SECTION("run with more steps than N") {
        TraceFile file = parse_traces(kMinimalFile);
        file.max_steps = 0;
        REQUIRE_THROWS_WITH(validate_traces(file),
                            Catch::Matchers::ContainsSubstring("demo-1") &&
                                Catch::Matchers::ContainsSubstring("run 0"));
    }
    SECTION("run count different from header R") {
        TraceFile file = parse_traces(kMinimalFile);
        file.bugs[0].runs.pop_back();
        REQUIRE_THROWS_WITH(validate_traces(file),
                            Catch::Matchers::ContainsSubstring("demo-1") &&
                                Catch::Matchers::ContainsSubstring("R=2"));
    }
    SECTION("function_type out of range") {
        TraceFile file = parse_traces(kMinimalFile);
        file.bugs[0].runs[0].steps[0].function_type = 5;
        REQUIRE_THROWS_WITH(validate_traces(file),
                            Catch::Matchers::ContainsSubstring("function_type 5"));
    }
    SECTION("argumentless call cannot be unresolved") {
        TraceFile file = parse_traces(kMinimalFile);
        file.bugs[0].runs[1].steps[0].resolved = false;
        REQUIRE_THROWS_AS(validate_traces(file), TraceError);
    }
    SECTION("duplicate bug_id") {
        TraceFile file = parse_traces(kMinimalFile);
        file.bugs.push_back(file.bugs[0]);
        REQUIRE_THROWS_WITH(validate_traces(file),
                            Catch::Matchers::ContainsSubstring("duplicate bug_id"));
    }
    SECTION("duplicate answer entries") {
        TraceFile file = parse_traces(kMinimalFile);
        file.bugs[0].runs[0].answer = {"x", "x"};
        REQUIRE_THROWS_AS(validate_traces(file), TraceError);
    }
    SECTION("not JSON at all") {
        REQUIRE_THROWS_AS(parse_traces("not json"), TraceError);
    }
}

TEST_CASE("vote_scores spreads each run's unit mass over its answer set") {
    SECTION("R=2, answers {a} and {a,b}") {
        const VoteTally tally = vote_scores(bug_with_answers({{"a"}, {"a", "b"}}));
        REQUIRE(tally.scores.at("a") == Rational(3, 4));
        REQUIRE(tally.scores.at("b") == Rational(1, 4));
    }
    SECTION("unanimous singleton over 10 runs") {
        const BugTrace bug = bug_with_answers(std::vector<std::vector<std::string>>(10, {"a"}));
        REQUIRE(vote_scores(bug).scores.at("a") == Rational(1));
    }
    SECTION("empty answers contribute nothing") {
        const VoteTally tally = vote_scores(bug_with_answers({{}, {"b"}}));
        REQUIRE(tally.scores.size() == 1);
        REQUIRE(tally.scores.at("b") == Rational(1, 2));
    }
}

TEST_CASE("confidence is the maximum score") {
    REQUIRE(confidence(vote_scores(bug_with_answers({{"a"}, {"a", "b"}}))) == Rational(3, 4));
    REQUIRE(confidence(vote_scores(bug_with_answers(
                std::vector<std::vector<std::string>>(10, {"a"})))) == Rational(1));
    REQUIRE(confidence(VoteTally{}) == Rational(0));
}

TEST_CASE("label requires the strict unique maximum") {
    REQUIRE(label(bug_with_answers({{"a"}, {"a", "b"}}, "a")));
    SECTION("tie is not ranked at the top") {
        REQUIRE_FALSE(label(bug_with_answers({{"a"}, {"b"}}, "a")));
    }
    SECTION("ground truth absent from tally") {
        REQUIRE_FALSE(label(bug_with_answers({{"b"}, {"b"}}, "a")));
    }
    SECTION("empty tally") {
        REQUIRE_FALSE(label(bug_with_answers({{}, {}}, "a")));
    }
}

TEST_CASE("classify_by_confidence uses >= at the threshold") {
    REQUIRE(classify_by_confidence(vote_scores(bug_with_answers({{"a"}, {"a", "b"}})), 0.5));
    REQUIRE(classify_by_confidence(vote_scores(bug_with_answers({{"a"}, {"b"}})), 0.5));
    REQUIRE_FALSE(classify_by_confidence(VoteTally{}, 0.5));
    REQUIRE_THROWS_AS(classify_by_confidence(VoteTally{}, 1.5), ConfigError);
}

TEST_CASE("truncate keeps prefixes and removes answers") {
    BugTrace bug = bug_with_answers({{"a"}, {"a"}});
    bug.runs[0].steps.resize(2);
    bug.runs[1].steps.resize(4);

    SECTION("t=N keeps all steps") {
        const BugTrace cut = truncate_runs(bug, 10, 10);
        REQUIRE(cut.runs[0].steps.size() == 2);
        REQUIRE(cut.runs[1].steps.size() == 4);
        REQUIRE(cut.runs[0].answer.empty());
        REQUIRE(cut.runs[1].answer.empty());
    }
    SECTION("t=0 empties every run") {
        const BugTrace cut = truncate_runs(bug, 0, 10);
        for (const auto& run : cut.runs) REQUIRE(run.steps.empty());
    }
    SECTION("t beyond a short run leaves it unchanged") {
        const BugTrace cut = truncate_runs(bug, 3, 10);
        REQUIRE(cut.runs[0].steps.size() == 2);
        REQUIRE(cut.runs[1].steps.size() == 3);
    }
    SECTION("t out of range") {
        REQUIRE_THROWS_AS(truncate_runs(bug, 11, 10), ConfigError);
        REQUIRE_THROWS_AS(truncate_runs(bug, -1, 10), ConfigError);
    }
}

TEST_CASE("vote mass conservation and oracle agreement on random bugs") {
    SplitMix64 rng(20240811);
    for (int trial = 0; trial < 300; ++trial) {
        const BugTrace bug = random_bug(rng, 2 + rng.next_below(9), 2 + rng.next_below(6));
        const VoteTally tally = vote_scores(bug);

        long long non_empty = 0;
        for (const auto& run : bug.runs) non_empty += run.answer.empty() ? 0 : 1;
        Rational total(0);
        for (const auto& [m, s] : tally.scores) total += s;
        REQUIRE(total == Rational(non_empty, static_cast<long long>(bug.runs.size())));

        const auto expected = oracle_votes(bug);
        REQUIRE(expected.size() == tally.scores.size());
        for (const auto& [m, frac] : expected) {
            const Rational& got = tally.scores.at(m);
            REQUIRE(Frac{got.num(), got.den()} == frac);
        }
    }
}

TEST_CASE("confidence hits 1 exactly when every run answers the same singleton") {
    SplitMix64 rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        const BugTrace bug = random_bug(rng, 2 + rng.next_below(6), 3);
        const bool unanimous_singleton = [&bug] {
            for (const auto& run : bug.runs)
                if (run.answer.size() != 1 || run.answer[0] != bug.runs[0].answer[0])
                    return false;
            return !bug.runs.empty() && bug.runs[0].answer.size() == 1;
        }();
        REQUIRE((confidence(vote_scores(bug)) == Rational(1)) == unanimous_singleton);
    }
}

TEST_CASE("label is invariant under run permutation") {
    SplitMix64 rng(99);
    for (int trial = 0; trial < 100; ++trial) {
        BugTrace bug = random_bug(rng, 2 + rng.next_below(8), 4);
        const bool before = label(bug);
        rng.shuffle(bug.runs);
        REQUIRE(label(bug) == before);
    }
}

TEST_CASE("serialize then ingest is the identity on canonical files") {
    const TraceFile file = parse_traces(kMinimalFile);
    const std::string once = serialize_traces(file);
    const TraceFile again = parse_traces(once);
    REQUIRE(serialize_traces(again) == once);
    REQUIRE(again.bugs[0].runs[0].answer == file.bugs[0].runs[0].answer);
    REQUIRE(again.runs_per_bug == file.runs_per_bug);
}
