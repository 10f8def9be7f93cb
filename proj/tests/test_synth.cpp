#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "lachesis/synth.hpp"
#include "lachesis/trace.hpp"
#include "lachesis/trace_io.hpp"

using namespace lachesis;

namespace {

// Independent re-labeling oracle: exact fractions, strict unique argmax.
struct Frac {
    long long num = 0, den = 1;
    void reduce() {
        long long g = std::gcd(num < 0 ? -num : num, den);
        if (g > 1) { num /= g; den /= g; }
    }
    Frac& operator+=(const Frac& o) {
        num = num * o.den + o.num * den;
        den *= o.den;
        reduce();
        return *this;
    }
    bool operator<(const Frac& o) const { return num * o.den < o.num * den; }
    bool operator==(const Frac& o) const { return num * o.den == o.num * den; }
};

bool oracle_label(const BugTrace& bug) {
    std::map<std::string, Frac> mass;
    const long long runs = static_cast<long long>(bug.runs.size());
    for (const auto& run : bug.runs)
        for (const auto& m : run.answer)
            mass[m] += Frac{1, runs * static_cast<long long>(run.answer.size())};
    auto it = mass.find(bug.ground_truth);
    if (it == mass.end()) return false;
    for (const auto& [m, f] : mass)
        if (m != bug.ground_truth && !(f < it->second)) return false;
    return true;
}

}  // namespace

TEST_CASE("generation is byte-deterministic") {
    SynthConfig cfg;
    cfg.n_bugs = 25;
    cfg.seed = 123;
    REQUIRE(serialize_traces(generate_traces(cfg)) == serialize_traces(generate_traces(cfg)));

    SynthConfig other = cfg;
    other.seed = 124;
    REQUIRE(serialize_traces(generate_traces(other)) != serialize_traces(generate_traces(cfg)));
}

TEST_CASE("generated files round-trip through ingest with zero rejects") {
    SynthConfig cfg;
    cfg.n_bugs = 40;
    cfg.seed = 5;
    const TraceFile file = generate_traces(cfg);
    const std::string bytes = serialize_traces(file);
    const TraceFile back = parse_traces(bytes);  // parse validates every invariant
    REQUIRE(back.bugs.size() == file.bugs.size());
    REQUIRE(serialize_traces(back) == bytes);
}

TEST_CASE("full convergence and zero noise give unanimous correct bugs") {
    SynthConfig cfg;
    cfg.n_bugs = 50;
    cfg.positive_fraction = 1.0;
    cfg.convergence = 1.0;
    cfg.noise = 0.0;
    cfg.seed = 9;
    const TraceFile file = generate_traces(cfg);
    for (const BugTrace& bug : file.bugs) {
        REQUIRE(confidence(vote_scores(bug)) == Rational(1));
        REQUIRE(label(bug));
    }
}

TEST_CASE("labels recomputed by voting agree with the oracle on every bug") {
    SynthConfig cfg;
    cfg.n_bugs = 120;
    cfg.positive_fraction = 0.6;
    cfg.noise = 0.15;
    cfg.seed = 31;
    const TraceFile file = generate_traces(cfg);
    for (const BugTrace& bug : file.bugs) REQUIRE(label(bug) == oracle_label(bug));
}

TEST_CASE("empirical positive rate tracks the configured fraction") {
    SynthConfig cfg;
    cfg.n_bugs = 300;
    cfg.positive_fraction = 0.67;
    cfg.convergence = 0.9;
    cfg.noise = 0.0;  // planted positives survive voting with certainty
    cfg.seed = 77;
    const TraceFile file = generate_traces(cfg);
    int positives = 0;
    for (const BugTrace& bug : file.bugs) positives += label(bug) ? 1 : 0;
    const double rate = static_cast<double>(positives) / cfg.n_bugs;
    REQUIRE(rate >= cfg.positive_fraction - 0.05);
    REQUIRE(rate <= cfg.positive_fraction + 0.05);

    SECTION("mild answer noise stays within the band") {
        SynthConfig noisy = cfg;
        noisy.noise = 0.1;
        noisy.seed = 78;
        const TraceFile f2 = generate_traces(noisy);
        int pos2 = 0;
        for (const BugTrace& bug : f2.bugs) pos2 += label(bug) ? 1 : 0;
        const double rate2 = static_cast<double>(pos2) / noisy.n_bugs;
        REQUIRE(rate2 >= noisy.positive_fraction - 0.05);
        REQUIRE(rate2 <= noisy.positive_fraction + 0.05);
    }
}

TEST_CASE("synth config json round-trip") {
    SynthConfig cfg;
    cfg.n_bugs = 17;
    cfg.convergence = 0.4;
    cfg.seed = 99;
    const SynthConfig back = synth_config_from_json(synth_config_to_json(cfg));
    REQUIRE(back.n_bugs == 17);
    REQUIRE(back.convergence == 0.4);
    REQUIRE(back.seed == 99);

    nlohmann::json j = synth_config_to_json(cfg);
    j["oops"] = true;
    REQUIRE_THROWS_AS(synth_config_from_json(j), ConfigError);

    j = synth_config_to_json(cfg);
    j["tools"] = 3;
    REQUIRE_THROWS_AS(synth_config_from_json(j), ConfigError);
}
