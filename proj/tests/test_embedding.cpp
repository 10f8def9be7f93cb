#include <catch2/catch_amalgamated.hpp>

#include <numeric>
#include <string>
#include <vector>

#include "lachesis/embedding.hpp"
#include "lachesis/trace.hpp"

using namespace lachesis;

namespace {

FunctionCall call(int type, const char* arg = nullptr, bool resolved = true) {
    FunctionCall c;
    c.function_type = type;
    if (arg != nullptr) c.argument = arg;
    c.resolved = arg == nullptr ? true : resolved;
    return c;
}

// One bug whose resolved arguments and answers are given explicitly.
BugTrace bug(std::string id, std::vector<FunctionCall> steps,
             std::vector<std::string> answer) {
    BugTrace b;
    b.bug_id = std::move(id);
    b.ground_truth = "gt";
    ReasoningRun run;
    run.steps = std::move(steps);
    run.answer = std::move(answer);
    b.runs.push_back(std::move(run));
    return b;
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

TEST_CASE("vocabulary collects resolved arguments and answers in first-appearance order") {
    const BugTrace b =
        bug("b1", {call(0, "m1"), call(1, "m2"), call(2, "m1")}, {"m2", "m3"});
    const Vocabulary vocab = build_vocabulary({b});
    REQUIRE(vocab.symbols("b1").ordered == std::vector<std::string>{"m1", "m2", "m3"});
    REQUIRE(vocab.width == 4);
}

TEST_CASE("vocabulary excludes arguments that never resolved") {
    const BugTrace b = bug("b1", {call(0, "ghost", false), call(1, "m1")}, {});
    const Vocabulary vocab = build_vocabulary({b});
    REQUIRE(vocab.symbols("b1").ordered == std::vector<std::string>{"m1"});
}

TEST_CASE("empty bug yields only the reserved slot") {
    const BugTrace b = bug("b1", {call(0)}, {});
    const Vocabulary vocab = build_vocabulary({b});
    REQUIRE(vocab.symbols("b1").ordered.empty());
    REQUIRE(vocab.width == 1);
}

TEST_CASE("global width is the largest collection plus one") {
    const BugTrace b1 = bug("b1", {call(0, "a"), call(0, "b"), call(0, "c")}, {});
    const BugTrace b2 = bug("b2",
                            {call(0, "a"), call(0, "b"), call(0, "c"), call(0, "d"),
                             call(0, "e"), call(0, "f"), call(0, "g")},
                            {});
    REQUIRE(build_vocabulary({b1, b2}).width == 8);
}

TEST_CASE("step embeddings match the scheme definitions") {
    // Two bugs force W=4 while b1's own collection is [m1, m2].
    const BugTrace b1 = bug("b1", {call(1, "m1"), call(1, "m2")}, {});
    const BugTrace b2 = bug("b2", {call(0, "x"), call(0, "y"), call(0, "z")}, {});
    const Vocabulary vocab = build_vocabulary({b1, b2});
    REQUIRE(vocab.width == 4);

    SECTION("function type one-hot") {
        REQUIRE(embed_step(Scheme::function, vocab, "b1", call(2)) ==
                std::vector<double>{0, 0, 1, 0, 0});
    }
    SECTION("shape only is all ones") {
        REQUIRE(embed_step(Scheme::shape, vocab, "b1", call(3, "anything")) ==
                std::vector<double>{1, 1, 1, 1, 1});
    }
    SECTION("argument one-hot at the bug-local index") {
        REQUIRE(embed_step(Scheme::function_arg, vocab, "b1", call(1, "m2")) ==
                std::vector<double>{0, 1, 0, 0, 0, /**/ 0, 1, 0, 0});
    }
    SECTION("unresolved argument maps to the reserved last slot") {
        const auto v = embed_step(Scheme::function_arg, vocab, "b1", call(1, "nope", false));
        REQUIRE(v == std::vector<double>{0, 1, 0, 0, 0, /**/ 0, 0, 0, 1});
    }
    SECTION("absent argument leaves the argument part zero") {
        const auto v = embed_step(Scheme::function_arg, vocab, "b1", call(4));
        REQUIRE(v == std::vector<double>{0, 0, 0, 0, 1, /**/ 0, 0, 0, 0});
    }
    SECTION("surrounding whitespace is canonicalized away") {
        const auto v = embed_step(Scheme::function_arg, vocab, "b1", call(1, "  m2  "));
        REQUIRE(v[kFunctionTypes + 1] == 1.0);
    }
}

TEST_CASE("answer embeddings") {
    const BugTrace b1 = bug("b1", {call(0, "m1"), call(0, "m2")}, {});
    const BugTrace b2 = bug("b2", {call(0, "x"), call(0, "y"), call(0, "z")}, {});
    const Vocabulary vocab = build_vocabulary({b1, b2});

    SECTION("multi-hot over the answer set") {
        REQUIRE(embed_answer(Scheme::function_arg_answer, vocab, "b1", {"m1", "m2"}) ==
                std::vector<double>{0, 0, 0, 0, 0, /**/ 1, 1, 0, 0});
    }
    SECTION("empty answer set is all zeros") {
        REQUIRE(sum(embed_answer(Scheme::function_arg_answer, vocab, "b1", {})) == 0.0);
    }
    SECTION("out-of-vocabulary answers hit the reserved slot") {
        const auto v = embed_answer(Scheme::function_arg_answer, vocab, "b1", {"stranger"});
        REQUIRE(v == std::vector<double>{0, 0, 0, 0, 0, /**/ 0, 0, 0, 1});
    }
    SECTION("shape answers are all ones") {
        REQUIRE(embed_answer(Scheme::shape, vocab, "b1", {"m1"}) ==
                std::vector<double>{1, 1, 1, 1, 1});
    }
    SECTION("F and F+A have no answer step") {
        REQUIRE_THROWS_AS(embed_answer(Scheme::function, vocab, "b1", {"m1"}), ConfigError);
        REQUIRE_THROWS_AS(embed_answer(Scheme::function_arg, vocab, "b1", {"m1"}), ConfigError);
    }
}

TEST_CASE("step vector mass properties") {
    const BugTrace b1 = bug("b1", {call(0, "m1"), call(1, "m2"), call(2)}, {"m1"});
    const Vocabulary vocab = build_vocabulary({b1});
    for (const FunctionCall& c : b1.runs[0].steps) {
        REQUIRE(sum(embed_step(Scheme::function, vocab, "b1", c)) == 1.0);
        const double fa_sum = sum(embed_step(Scheme::function_arg, vocab, "b1", c));
        REQUIRE(fa_sum == (c.argument.has_value() ? 2.0 : 1.0));
    }
}

TEST_CASE("widths are consistent per scheme and dataset") {
    const BugTrace b1 = bug("b1", {call(0, "m1")}, {"m2"});
    const BugTrace b2 = bug("b2", {call(0, "x"), call(1, "y")}, {});
    const Vocabulary vocab = build_vocabulary({b1, b2});
    for (Scheme s : {Scheme::function_arg, Scheme::function_arg_answer}) {
        const int expected = feature_width(s, vocab.width);
        for (const BugTrace* b : {&b1, &b2})
            for (const FunctionCall& c : b->runs[0].steps)
                REQUIRE(static_cast<int>(embed_step(s, vocab, b->bug_id, c).size()) == expected);
    }
    REQUIRE(feature_width(Scheme::function, vocab.width) == kFunctionTypes);
    REQUIRE(feature_width(Scheme::shape, vocab.width) == kFunctionTypes);
}

TEST_CASE("another bug's vocabulary only pads, never moves hot positions") {
    const BugTrace b1 = bug("b1", {call(1, "m1"), call(2, "m2")}, {"m2"});
    const BugTrace big = bug("big",
                             {call(0, "s1"), call(0, "s2"), call(0, "s3"), call(0, "s4"),
                              call(0, "s5"), call(0, "s6")},
                             {});
    const Vocabulary small_vocab = build_vocabulary({b1});
    const Vocabulary big_vocab = build_vocabulary({b1, big});
    REQUIRE(big_vocab.width > small_vocab.width);
    for (const FunctionCall& c : b1.runs[0].steps) {
        const auto narrow = embed_step(Scheme::function_arg, small_vocab, "b1", c);
        const auto wide = embed_step(Scheme::function_arg, big_vocab, "b1", c);
        for (std::size_t i = 0; i < narrow.size() - 1; ++i)  // all but the reserved slot
            REQUIRE(narrow[i] == wide[i]);
    }
}

TEST_CASE("width overrides pad upward but never shrink") {
    const BugTrace b1 = bug("b1", {call(0, "m1")}, {});
    const Vocabulary vocab = build_vocabulary({b1});
    REQUIRE(embed_step(Scheme::function_arg, vocab, "b1", call(0, "m1"), 6).size() ==
            static_cast<std::size_t>(kFunctionTypes + 6));
    REQUIRE_THROWS_AS(embed_step(Scheme::function_arg, vocab, "b1", call(0, "m1"), 1),
                      ConfigError);
}
