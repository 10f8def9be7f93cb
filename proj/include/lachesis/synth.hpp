#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "lachesis/errors.hpp"
#include "lachesis/rng.hpp"
#include "lachesis/trace.hpp"

namespace lachesis {

// Deterministic generator of trace files with a planted self-consistency
// signal: bugs drawn as "positive" converge their late-half call arguments
// on a designated ground-truth symbol and answer it unanimously (up to
// noise); negative bugs call and answer uniformly at random. Labels are
// never stored; they re-emerge from the voting rule at ingestion.
struct SynthConfig {
    int n_bugs = 100;
    double positive_fraction = 0.5;
    int runs_per_bug = 10;   // R
    int max_steps = 10;      // N
    int tools = 5;           // pinned: three common + one per dataset family
    int symbols_per_bug = 10;
    double convergence = 0.9;  // p: chance a late-half step targets the ground truth
    double noise = 0.1;        // chance a positive run's answer is corrupted
    std::uint64_t seed = 1;
};

inline void validate_synth_config(const SynthConfig& c) {
    if (c.n_bugs < 1) throw ConfigError("synth: n_bugs must be >= 1");
    if (c.positive_fraction < 0.0 || c.positive_fraction > 1.0)
        throw ConfigError("synth: positive_fraction must lie in [0,1]");
    if (c.runs_per_bug < 1) throw ConfigError("synth: runs_per_bug must be >= 1");
    if (c.max_steps < 2) throw ConfigError("synth: max_steps must be >= 2");
    if (c.tools != kFunctionTypes)
        throw ConfigError("synth: tools must be " + std::to_string(kFunctionTypes) +
                          " to match the trace schema");
    if (c.symbols_per_bug < 2) throw ConfigError("synth: symbols_per_bug must be >= 2");
    if (c.convergence < 0.0 || c.convergence > 1.0)
        throw ConfigError("synth: convergence must lie in [0,1]");
    if (c.noise < 0.0 || c.noise > 1.0) throw ConfigError("synth: noise must lie in [0,1]");
}

inline nlohmann::json synth_config_to_json(const SynthConfig& c) {
    nlohmann::json j;
    j["n_bugs"] = c.n_bugs;
    j["positive_fraction"] = c.positive_fraction;
    j["R"] = c.runs_per_bug;
    j["N"] = c.max_steps;
    j["tools"] = c.tools;
    j["symbols_per_bug"] = c.symbols_per_bug;
    j["convergence"] = c.convergence;
    j["noise"] = c.noise;
    j["seed"] = c.seed;
    return j;
}

inline SynthConfig synth_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("synth config: top level must be an object");
    static const std::vector<std::string> known = {
        "n_bugs", "positive_fraction", "R", "N", "tools", "symbols_per_bug",
        "convergence", "noise", "seed"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            throw ConfigError("synth config: unknown field '" + it.key() + "'");
    SynthConfig c;
    if (j.contains("n_bugs")) c.n_bugs = j["n_bugs"].get<int>();
    if (j.contains("positive_fraction")) c.positive_fraction = j["positive_fraction"].get<double>();
    if (j.contains("R")) c.runs_per_bug = j["R"].get<int>();
    if (j.contains("N")) c.max_steps = j["N"].get<int>();
    if (j.contains("tools")) c.tools = j["tools"].get<int>();
    if (j.contains("symbols_per_bug")) c.symbols_per_bug = j["symbols_per_bug"].get<int>();
    if (j.contains("convergence")) c.convergence = j["convergence"].get<double>();
    if (j.contains("noise")) c.noise = j["noise"].get<double>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    validate_synth_config(c);
    return c;
}

namespace detail {

// Uniform answer set of size one or two drawn from the symbol pool.
inline std::vector<std::string> random_answer(const std::vector<std::string>& symbols,
                                              SplitMix64& rng) {
    const int k = static_cast<int>(symbols.size());
    if (rng.next_bernoulli(0.5) || k < 2)
        return {symbols[rng.next_below(static_cast<std::uint32_t>(k))]};
    const int a = static_cast<int>(rng.next_below(static_cast<std::uint32_t>(k)));
    const int b = (a + 1 + static_cast<int>(rng.next_below(static_cast<std::uint32_t>(k - 1)))) % k;
    return {symbols[a], symbols[b]};
}

// Wrong answer for a corrupted positive run: never contains the ground truth.
inline std::vector<std::string> wrong_answer(const std::vector<std::string>& symbols,
                                             int gt_index, SplitMix64& rng) {
    const int k = static_cast<int>(symbols.size());
    auto pick_other = [&]() {
        return (gt_index + 1 + static_cast<int>(rng.next_below(static_cast<std::uint32_t>(k - 1)))) % k;
    };
    const int a = pick_other();
    if (rng.next_bernoulli(0.5) || k < 3) return {symbols[a]};
    int b = pick_other();
    if (b == a) b = (b + 1) % k == gt_index ? (b + 2) % k : (b + 1) % k;
    return {symbols[a], symbols[b]};
}

}  // namespace detail

inline TraceFile generate_traces(const SynthConfig& config) {
    validate_synth_config(config);
    // Small chance a step has no argument or probes a ghost identifier that
    // does not exist in the repository; identical across classes so only
    // the planted convergence separates them.
    constexpr double kNoArgumentRate = 0.08;
    constexpr double kGhostRate = 0.07;

    TraceFile file;
    file.runs_per_bug = config.runs_per_bug;
    file.max_steps = config.max_steps;
    file.functions = {{"coverage_classes", 0},
                      {"coverage_methods", 1},
                      {"code_snippet", 2},
                      {"bugsinpy_docs", 3},
                      {"defects4j_comments", 4}};

    const SplitMix64 root(config.seed);
    for (int b = 0; b < config.n_bugs; ++b) {
        SplitMix64 rng = root.split(static_cast<std::uint64_t>(b) + 1);
        // Exact class proportions, interleaved through the file: bug b is
        // positive when the running count of positives has to advance.
        const bool positive =
            static_cast<long long>(std::floor((b + 1) * config.positive_fraction)) >
            static_cast<long long>(std::floor(b * config.positive_fraction));
        BugTrace bug;
        bug.bug_id = "synth-" + std::to_string(b);
        bug.dataset = rng.next_bernoulli(294.0 / 456.0) ? DatasetKind::bugsinpy
                                                        : DatasetKind::defects4j;
        const int dataset_tool = bug.dataset == DatasetKind::bugsinpy ? 3 : 4;

        std::vector<std::string> symbols;
        symbols.reserve(config.symbols_per_bug);
        for (int s = 0; s < config.symbols_per_bug; ++s)
            symbols.push_back("b" + std::to_string(b) + ".m" + std::to_string(s) + "()");
        const int gt_index = static_cast<int>(
            rng.next_below(static_cast<std::uint32_t>(config.symbols_per_bug)));
        bug.ground_truth = symbols[gt_index];

        for (int r = 0; r < config.runs_per_bug; ++r) {
            ReasoningRun run;
            const int length =
                2 + static_cast<int>(rng.next_below(static_cast<std::uint32_t>(config.max_steps - 1)));
            for (int t = 0; t < length; ++t) {
                FunctionCall call;
                const int pick = static_cast<int>(rng.next_below(4));
                call.function_type = pick < 3 ? pick : dataset_tool;
                const bool late = t >= length / 2;
                if (positive && late && rng.next_bernoulli(config.convergence)) {
                    call.argument = bug.ground_truth;
                    call.resolved = true;
                } else {
                    const double u = rng.next_double();
                    if (u < kNoArgumentRate) {
                        // argumentless call
                    } else if (u < kNoArgumentRate + kGhostRate) {
                        call.argument = "ghost" + std::to_string(rng.next_below(1000)) + "()";
                        call.resolved = false;
                    } else {
                        call.argument = symbols[rng.next_below(
                            static_cast<std::uint32_t>(config.symbols_per_bug))];
                        call.resolved = true;
                    }
                }
                run.steps.push_back(std::move(call));
            }
            if (positive) {
                if (rng.next_bernoulli(config.noise))
                    run.answer = detail::wrong_answer(symbols, gt_index, rng);
                else
                    run.answer = {bug.ground_truth};
            } else {
                run.answer = detail::random_answer(symbols, rng);
            }
            bug.runs.push_back(std::move(run));
        }
        file.bugs.push_back(std::move(bug));
    }
    return file;
}

}  // namespace lachesis
