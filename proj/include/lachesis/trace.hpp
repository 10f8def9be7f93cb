#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lachesis/errors.hpp"
#include "lachesis/rational.hpp"

namespace lachesis {

// Width of the function-type one-hot: three tools common to both datasets
// plus one dataset-specific tool family each.
inline constexpr int kFunctionTypes = 5;

enum class DatasetKind { bugsinpy, defects4j };

inline std::string_view to_string(DatasetKind d) {
    return d == DatasetKind::bugsinpy ? "bugsinpy" : "defects4j";
}

inline DatasetKind dataset_from_string(std::string_view s) {
    if (s == "bugsinpy") return DatasetKind::bugsinpy;
    if (s == "defects4j") return DatasetKind::defects4j;
    throw TraceError("unknown dataset tag '" + std::string(s) + "'");
}

struct FunctionCall {
    int function_type = 0;                 // in [0, kFunctionTypes)
    std::optional<std::string> argument;   // class or method identifier
    bool resolved = true;                  // argument exists in the repository
};

struct ReasoningRun {
    std::vector<FunctionCall> steps;       // at most N per the file header
    std::vector<std::string> answer;       // unique, file order preserved
};

struct BugTrace {
    std::string bug_id;
    DatasetKind dataset = DatasetKind::bugsinpy;
    std::string ground_truth;
    std::vector<ReasoningRun> runs;        // exactly R per the file header
};

struct TraceFile {
    int runs_per_bug = 0;                              // R
    int max_steps = 0;                                 // N
    std::vector<std::pair<std::string, int>> functions;  // name -> index, file order
    std::vector<BugTrace> bugs;
};

struct VoteTally {
    std::map<std::string, Rational> scores;  // method -> score in [0,1]
};

// Each run spreads one unit of vote mass uniformly over its answer set,
// then mass is averaged over all R runs. Runs with an empty answer set
// contribute nothing.
inline VoteTally vote_scores(const BugTrace& bug) {
    VoteTally tally;
    const auto runs = static_cast<std::int64_t>(bug.runs.size());
    if (runs == 0) return tally;
    for (const ReasoningRun& run : bug.runs) {
        if (run.answer.empty()) continue;
        Rational share(1, runs * static_cast<std::int64_t>(run.answer.size()));
        for (const std::string& method : run.answer) tally.scores[method] += share;
    }
    return tally;
}

// Maximum voting score over all candidate methods; 0 for an empty tally.
inline Rational confidence(const VoteTally& tally) {
    Rational best(0);
    for (const auto& [method, score] : tally.scores)
        if (score > best) best = score;
    return best;
}

// True iff the ground-truth method holds the strict unique maximum of the
// tally. Ties and absent ground truth are false.
inline bool label(const BugTrace& bug) {
    const VoteTally tally = vote_scores(bug);
    auto it = tally.scores.find(bug.ground_truth);
    if (it == tally.scores.end()) return false;
    for (const auto& [method, score] : tally.scores) {
        if (method == bug.ground_truth) continue;
        if (score >= it->second) return false;
    }
    return true;
}

inline bool classify_by_confidence(const VoteTally& tally, double threshold) {
    if (threshold < 0.0 || threshold > 1.0)
        throw ConfigError("threshold must lie in [0,1]");
    return confidence(tally).to_double() >= threshold;
}

// Keeps only the first min(t, length) steps of every run and removes all
// answers: a prefix of the reasoning exists before any answer does.
inline BugTrace truncate_runs(const BugTrace& bug, int prefix_steps, int max_steps) {
    if (prefix_steps < 0 || prefix_steps > max_steps)
        throw ConfigError("prefix length " + std::to_string(prefix_steps) +
                          " out of range [0," + std::to_string(max_steps) + "]");
    BugTrace out;
    out.bug_id = bug.bug_id;
    out.dataset = bug.dataset;
    out.ground_truth = bug.ground_truth;
    out.runs.reserve(bug.runs.size());
    for (const ReasoningRun& run : bug.runs) {
        ReasoningRun trimmed;
        const std::size_t keep =
            std::min(run.steps.size(), static_cast<std::size_t>(prefix_steps));
        trimmed.steps.assign(run.steps.begin(), run.steps.begin() + keep);
        out.runs.push_back(std::move(trimmed));
    }
    return out;
}

inline TraceFile truncate_runs(const TraceFile& file, int prefix_steps) {
    TraceFile out;
    out.runs_per_bug = file.runs_per_bug;
    out.max_steps = file.max_steps;
    out.functions = file.functions;
    out.bugs.reserve(file.bugs.size());
    for (const BugTrace& bug : file.bugs)
        out.bugs.push_back(truncate_runs(bug, prefix_steps, file.max_steps));
    return out;
}

}  // namespace lachesis
