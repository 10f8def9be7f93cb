#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "lachesis/errors.hpp"
#include "lachesis/trace.hpp"

namespace lachesis {

// Step feature constructions, in increasing information content:
// shape only, function type, plus argument identity, plus answer multi-hot.
enum class Scheme { shape, function, function_arg, function_arg_answer };

inline std::string_view to_string(Scheme s) {
    switch (s) {
        case Scheme::shape: return "s";
        case Scheme::function: return "f";
        case Scheme::function_arg: return "fa";
        default: return "faa";
    }
}

inline Scheme scheme_from_string(std::string_view s) {
    if (s == "s") return Scheme::shape;
    if (s == "f") return Scheme::function;
    if (s == "fa") return Scheme::function_arg;
    if (s == "faa") return Scheme::function_arg_answer;
    throw ConfigError("unknown scheme '" + std::string(s) + "' (expected s|f|fa|faa)");
}

// Shape-only has no per-step content, so it cannot fill matrix rows; it is
// meaningful only on the graph representation.
inline bool scheme_matrix_compatible(Scheme s) { return s != Scheme::shape; }

// Final answers appear as their own reasoning step only under shape-only
// and function+argument+answer; F and F+A end at the last function call.
inline bool scheme_has_answer_step(Scheme s) {
    return s == Scheme::shape || s == Scheme::function_arg_answer;
}

// Canonical symbol form used by vocabularies and graph node keys: the exact
// trace string trimmed of surrounding whitespace, no further normalization.
inline std::string canonical_symbol(std::string_view raw) {
    std::size_t b = raw.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return std::string();
    std::size_t e = raw.find_last_not_of(" \t\r\n");
    return std::string(raw.substr(b, e - b + 1));
}

struct BugSymbols {
    std::vector<std::string> ordered;              // first-appearance order
    std::unordered_map<std::string, int> index;
};

// Per-bug symbol collections plus the shared padding width W. W is the
// largest per-bug collection size plus one; the extra slot (global position
// W-1) is reserved for arguments that do not exist in the repository.
struct Vocabulary {
    std::map<std::string, BugSymbols> per_bug;
    int width = 1;  // W

    const BugSymbols& symbols(const std::string& bug_id) const {
        auto it = per_bug.find(bug_id);
        if (it == per_bug.end())
            throw TraceError("vocabulary has no entry for bug '" + bug_id + "'");
        return it->second;
    }
};

// Collects, per bug, every class or method that appeared as a resolved
// function argument or as an answer, in first-appearance order (runs in
// file order; within a run, steps before the answer set). Arguments that
// never resolved are excluded.
inline Vocabulary build_vocabulary(const std::vector<BugTrace>& bugs) {
    Vocabulary vocab;
    std::size_t largest = 0;
    for (const BugTrace& bug : bugs) {
        BugSymbols& symbols = vocab.per_bug[bug.bug_id];
        auto add = [&symbols](const std::string& raw) {
            std::string sym = canonical_symbol(raw);
            if (sym.empty()) return;
            if (symbols.index.emplace(sym, static_cast<int>(symbols.ordered.size())).second)
                symbols.ordered.push_back(std::move(sym));
        };
        for (const ReasoningRun& run : bug.runs) {
            for (const FunctionCall& call : run.steps)
                if (call.argument.has_value() && call.resolved) add(*call.argument);
            for (const std::string& a : run.answer) add(a);
        }
        largest = std::max(largest, symbols.ordered.size());
    }
    vocab.width = static_cast<int>(largest) + 1;
    return vocab;
}

inline int feature_width(Scheme scheme, int vocab_width) {
    switch (scheme) {
        case Scheme::shape:
        case Scheme::function:
            return kFunctionTypes;
        default:
            return kFunctionTypes + vocab_width;
    }
}

namespace detail {

// The effective padding width: callers evaluating against a checkpoint can
// override W upward; the reserved slot stays pinned to the last position.
inline int effective_width(const Vocabulary& vocab, int width_override) {
    if (width_override == 0) return vocab.width;
    if (width_override < vocab.width)
        throw ConfigError("vocabulary needs width " + std::to_string(vocab.width) +
                          " but width " + std::to_string(width_override) + " was requested");
    return width_override;
}

}  // namespace detail

inline std::vector<double> embed_step(Scheme scheme, const Vocabulary& vocab,
                                      const std::string& bug_id, const FunctionCall& call,
                                      int width_override = 0) {
    if (call.function_type < 0 || call.function_type >= kFunctionTypes)
        throw TraceError("bug '" + bug_id + "': function_type " +
                         std::to_string(call.function_type) + " outside [0," +
                         std::to_string(kFunctionTypes) + ")");
    if (scheme == Scheme::shape)
        return std::vector<double>(kFunctionTypes, 1.0);
    if (scheme == Scheme::function) {
        std::vector<double> onehot(kFunctionTypes, 0.0);
        onehot[call.function_type] = 1.0;
        return onehot;
    }

    const int w = detail::effective_width(vocab, width_override);
    std::vector<double> v(static_cast<std::size_t>(kFunctionTypes) + w, 0.0);
    v[call.function_type] = 1.0;
    if (!call.argument.has_value()) return v;  // no argument: argument part stays zero
    if (!call.resolved) {
        v[kFunctionTypes + w - 1] = 1.0;  // reserved slot for non-existent identifiers
        return v;
    }
    const BugSymbols& symbols = vocab.symbols(bug_id);
    const std::string sym = canonical_symbol(*call.argument);
    auto it = symbols.index.find(sym);
    if (it == symbols.index.end())
        throw TraceError("bug '" + bug_id + "': resolved argument '" + sym +
                         "' missing from vocabulary");
    v[kFunctionTypes + it->second] = 1.0;
    return v;
}

inline std::vector<double> embed_answer(Scheme scheme, const Vocabulary& vocab,
                                        const std::string& bug_id,
                                        const std::vector<std::string>& answer,
                                        int width_override = 0) {
    if (!scheme_has_answer_step(scheme))
        throw ConfigError("scheme '" + std::string(to_string(scheme)) +
                          "' has no answer step");
    if (scheme == Scheme::shape)
        return std::vector<double>(kFunctionTypes, 1.0);

    const int w = detail::effective_width(vocab, width_override);
    std::vector<double> v(static_cast<std::size_t>(kFunctionTypes) + w, 0.0);
    const BugSymbols& symbols = vocab.symbols(bug_id);
    for (const std::string& raw : answer) {
        const std::string sym = canonical_symbol(raw);
        auto it = symbols.index.find(sym);
        if (it != symbols.index.end())
            v[kFunctionTypes + it->second] = 1.0;
        else
            v[kFunctionTypes + w - 1] = 1.0;
    }
    return v;
}

// Debug dump: bug_id -> ordered symbol list.
inline nlohmann::json vocabulary_to_json(const Vocabulary& vocab) {
    nlohmann::json out;
    out["width"] = vocab.width;
    nlohmann::json per_bug = nlohmann::json::object();
    for (const auto& [bug_id, symbols] : vocab.per_bug) per_bug[bug_id] = symbols.ordered;
    out["per_bug"] = std::move(per_bug);
    return out;
}

}  // namespace lachesis
