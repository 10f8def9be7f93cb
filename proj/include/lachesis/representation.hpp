#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lachesis/embedding.hpp"
#include "lachesis/errors.hpp"
#include "lachesis/trace.hpp"

namespace lachesis {

// R x N grid of step embeddings; column r holds run r's steps in call
// order, zero-padded after the run ends.
struct InferenceMatrix {
    std::string bug_id;
    bool correct = false;  // voting label
    int runs = 0;          // R
    int max_steps = 0;     // N
    int width = 0;         // d
    std::vector<double> data;  // ((r * max_steps) + t) * width + j

    std::span<const double> row(int run, int step) const {
        return {data.data() + (static_cast<std::size_t>(run) * max_steps + step) * width,
                static_cast<std::size_t>(width)};
    }
    std::span<double> row(int run, int step) {
        return {data.data() + (static_cast<std::size_t>(run) * max_steps + step) * width,
                static_cast<std::size_t>(width)};
    }
};

struct GraphNode {
    std::string key;              // content key; unique within the graph
    std::vector<double> feature;
};

struct GraphEdge {
    int src = 0;
    int dst = 0;
    std::int64_t weight = 0;  // number of times dst immediately followed src
};

// Weighted digraph of distinct reasoning steps. Nodes merge by content
// across runs and positions; edges count consecutive-step occurrences.
struct InferenceGraph {
    std::string bug_id;
    bool correct = false;
    std::vector<GraphNode> nodes;  // first-appearance order
    std::vector<GraphEdge> edges;  // sorted by (src, dst)
};

namespace detail {

inline std::string quote_symbol(std::string_view s) {
    std::string out;
    out.reserve(s.size() + 2);
    out.push_back('"');
    for (char c : s) {
        if (c == '\\' || c == '"') out.push_back('\\');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

inline std::string call_key(const FunctionCall& call) {
    std::string out = "call(";
    out += std::to_string(call.function_type);
    out += ',';
    out += call.argument.has_value() ? quote_symbol(canonical_symbol(*call.argument)) : "-";
    out += ',';
    out += call.resolved ? "1)" : "0)";
    return out;
}

inline std::string answer_key(const std::vector<std::string>& answer) {
    std::vector<std::string> sorted;
    sorted.reserve(answer.size());
    for (const std::string& a : answer) sorted.push_back(canonical_symbol(a));
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    std::string out = "answer{";
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (i > 0) out += ',';
        out += quote_symbol(sorted[i]);
    }
    out += '}';
    return out;
}

}  // namespace detail

// Builds the inference matrix for one bug. Under F+A+A the answer vector
// occupies the first padded row; a run that used all N calls has its last
// row replaced instead, keeping the fixed R x N shape. Runs with an empty
// answer set contribute no answer row (there is no outcome to encode).
inline InferenceMatrix build_lim(const BugTrace& bug, Scheme scheme, const Vocabulary& vocab,
                                 int max_steps, int width_override = 0) {
    if (!scheme_matrix_compatible(scheme))
        throw ConfigError("scheme 's' carries no step content and cannot fill a matrix; "
                          "use the graph representation");
    InferenceMatrix m;
    m.bug_id = bug.bug_id;
    m.correct = label(bug);
    m.runs = static_cast<int>(bug.runs.size());
    m.max_steps = max_steps;
    m.width = feature_width(scheme, width_override == 0 ? vocab.width : width_override);
    m.data.assign(static_cast<std::size_t>(m.runs) * max_steps * m.width, 0.0);

    for (int r = 0; r < m.runs; ++r) {
        const ReasoningRun& run = bug.runs[r];
        if (run.steps.size() > static_cast<std::size_t>(max_steps))
            throw TraceError("bug '" + bug.bug_id + "' run " + std::to_string(r) +
                             ": has " + std::to_string(run.steps.size()) +
                             " steps, exceeds N=" + std::to_string(max_steps));
        for (std::size_t t = 0; t < run.steps.size(); ++t) {
            std::vector<double> v =
                embed_step(scheme, vocab, bug.bug_id, run.steps[t], width_override);
            std::copy(v.begin(), v.end(), m.row(r, static_cast<int>(t)).begin());
        }
        if (scheme == Scheme::function_arg_answer && !run.answer.empty() && max_steps > 0) {
            const int slot = std::min(static_cast<int>(run.steps.size()), max_steps - 1);
            std::vector<double> v =
                embed_answer(scheme, vocab, bug.bug_id, run.answer, width_override);
            std::copy(v.begin(), v.end(), m.row(r, slot).begin());
        }
    }
    return m;
}

// Builds the inference graph for one bug. Node identity is the content key:
// calls merge on (function type, canonical argument, resolved flag), answers
// on the sorted answer set. Edge (u,v) weight counts how often v immediately
// followed u across runs; repeated identical calls yield self-loops.
inline InferenceGraph build_lig(const BugTrace& bug, Scheme scheme, const Vocabulary& vocab,
                                int width_override = 0) {
    InferenceGraph g;
    g.bug_id = bug.bug_id;
    g.correct = label(bug);

    std::map<std::string, int> node_index;
    std::map<std::pair<int, int>, std::int64_t> weights;

    auto intern = [&](std::string key, std::vector<double> feature) {
        auto [it, inserted] = node_index.emplace(std::move(key), static_cast<int>(g.nodes.size()));
        if (inserted) g.nodes.push_back({it->first, std::move(feature)});
        return it->second;
    };

    for (const ReasoningRun& run : bug.runs) {
        int prev = -1;
        for (const FunctionCall& call : run.steps) {
            int node = intern(detail::call_key(call),
                              embed_step(scheme, vocab, bug.bug_id, call, width_override));
            if (prev >= 0) ++weights[{prev, node}];
            prev = node;
        }
        if (scheme_has_answer_step(scheme) && !run.answer.empty()) {
            int node = intern(detail::answer_key(run.answer),
                              embed_answer(scheme, vocab, bug.bug_id, run.answer, width_override));
            if (prev >= 0) ++weights[{prev, node}];
        }
    }

    g.edges.reserve(weights.size());
    for (const auto& [endpoints, weight] : weights)
        g.edges.push_back({endpoints.first, endpoints.second, weight});
    return g;
}

// Flattens the matrix into the order the sequence model consumes: all R
// first steps, then all R second steps, and so on. Element t*R + r is run
// r's step-t vector (zero where the run was padded).
inline std::vector<std::vector<double>> lstm_sequence(const InferenceMatrix& m) {
    std::vector<std::vector<double>> seq;
    seq.reserve(static_cast<std::size_t>(m.runs) * m.max_steps);
    for (int t = 0; t < m.max_steps; ++t)
        for (int r = 0; r < m.runs; ++r) {
            auto row = m.row(r, t);
            seq.emplace_back(row.begin(), row.end());
        }
    return seq;
}

// Debug dump, one line per edge: src_key -> dst_key [weight]
inline std::string lig_edge_list(const InferenceGraph& g) {
    std::ostringstream out;
    for (const GraphEdge& e : g.edges)
        out << g.nodes[e.src].key << " -> " << g.nodes[e.dst].key << " [" << e.weight << "]\n";
    return out.str();
}

}  // namespace lachesis
