#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "lachesis/errors.hpp"
#include "lachesis/trace.hpp"

namespace lachesis {

namespace detail {

inline const nlohmann::json& require_field(const nlohmann::json& obj, const char* name,
                                           const std::string& where) {
    auto it = obj.find(name);
    if (it == obj.end()) throw TraceError(where + ": missing field '" + name + "'");
    return *it;
}

inline int require_int(const nlohmann::json& j, const char* name, const std::string& where) {
    const auto& v = require_field(j, name, where);
    if (!v.is_number_integer()) throw TraceError(where + ": field '" + name + "' must be an integer");
    return v.get<int>();
}

inline std::string require_string(const nlohmann::json& j, const char* name,
                                  const std::string& where) {
    const auto& v = require_field(j, name, where);
    if (!v.is_string()) throw TraceError(where + ": field '" + name + "' must be a string");
    return v.get<std::string>();
}

}  // namespace detail

// Full invariant check of an in-memory trace set; throws TraceError naming
// the offending bug and field.
inline void validate_traces(const TraceFile& file) {
    if (file.runs_per_bug < 1) throw TraceError("header: R must be >= 1");
    if (file.max_steps < 0) throw TraceError("header: N must be >= 0");
    if (file.functions.size() > static_cast<std::size_t>(kFunctionTypes))
        throw TraceError("header: functions map has more than " +
                         std::to_string(kFunctionTypes) + " entries");
    std::set<int> seen_indices;
    for (const auto& [name, index] : file.functions) {
        if (index < 0 || index >= kFunctionTypes)
            throw TraceError("header: function '" + name + "' has index " +
                             std::to_string(index) + " outside [0," +
                             std::to_string(kFunctionTypes) + ")");
        if (!seen_indices.insert(index).second)
            throw TraceError("header: duplicate function index " + std::to_string(index));
    }
    std::set<std::string> seen_ids;
    for (const BugTrace& bug : file.bugs) {
        const std::string where = "bug '" + bug.bug_id + "'";
        if (bug.bug_id.empty()) throw TraceError("bug with empty bug_id");
        if (!seen_ids.insert(bug.bug_id).second)
            throw TraceError(where + ": duplicate bug_id");
        if (bug.ground_truth.empty()) throw TraceError(where + ": empty ground_truth");
        if (bug.runs.size() != static_cast<std::size_t>(file.runs_per_bug))
            throw TraceError(where + ": has " + std::to_string(bug.runs.size()) +
                             " runs, header declares R=" + std::to_string(file.runs_per_bug));
        for (std::size_t r = 0; r < bug.runs.size(); ++r) {
            const ReasoningRun& run = bug.runs[r];
            const std::string run_where = where + " run " + std::to_string(r);
            if (run.steps.size() > static_cast<std::size_t>(file.max_steps))
                throw TraceError(run_where + ": has " + std::to_string(run.steps.size()) +
                                 " steps, exceeds N=" + std::to_string(file.max_steps));
            for (std::size_t s = 0; s < run.steps.size(); ++s) {
                const FunctionCall& call = run.steps[s];
                const std::string step_where = run_where + " step " + std::to_string(s);
                if (call.function_type < 0 || call.function_type >= kFunctionTypes)
                    throw TraceError(step_where + ": function_type " +
                                     std::to_string(call.function_type) + " outside [0," +
                                     std::to_string(kFunctionTypes) + ")");
                if (!call.argument.has_value() && !call.resolved)
                    throw TraceError(step_where +
                                     ": argumentless call cannot be unresolved");
            }
            std::set<std::string> seen_answers;
            for (const std::string& a : run.answer)
                if (!seen_answers.insert(a).second)
                    throw TraceError(run_where + ": duplicate answer '" + a + "'");
        }
    }
}

inline TraceFile parse_traces(const std::string& text) {
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw TraceError(std::string("trace file is not valid JSON: ") + e.what());
    }
    if (!root.is_object()) throw TraceError("trace file: top level must be an object");

    TraceFile file;
    file.runs_per_bug = detail::require_int(root, "R", "header");
    file.max_steps = detail::require_int(root, "N", "header");

    const auto& functions = detail::require_field(root, "functions", "header");
    if (!functions.is_object()) throw TraceError("header: 'functions' must be an object");
    for (auto it = functions.begin(); it != functions.end(); ++it) {
        if (!it.value().is_number_integer())
            throw TraceError("header: function '" + it.key() + "' index must be an integer");
        file.functions.emplace_back(it.key(), it.value().get<int>());
    }

    const auto& bugs = detail::require_field(root, "bugs", "header");
    if (!bugs.is_array()) throw TraceError("header: 'bugs' must be an array");
    for (const auto& jbug : bugs) {
        if (!jbug.is_object()) throw TraceError("bugs array: entries must be objects");
        BugTrace bug;
        bug.bug_id = detail::require_string(jbug, "bug_id", "bug entry");
        const std::string where = "bug '" + bug.bug_id + "'";
        bug.dataset = dataset_from_string(detail::require_string(jbug, "dataset", where));
        bug.ground_truth = detail::require_string(jbug, "ground_truth", where);
        const auto& jruns = detail::require_field(jbug, "runs", where);
        if (!jruns.is_array()) throw TraceError(where + ": 'runs' must be an array");
        for (std::size_t r = 0; r < jruns.size(); ++r) {
            const std::string run_where = where + " run " + std::to_string(r);
            const auto& jrun = jruns[r];
            if (!jrun.is_object()) throw TraceError(run_where + ": must be an object");
            ReasoningRun run;
            const auto& jsteps = detail::require_field(jrun, "steps", run_where);
            if (!jsteps.is_array()) throw TraceError(run_where + ": 'steps' must be an array");
            for (std::size_t s = 0; s < jsteps.size(); ++s) {
                const std::string step_where = run_where + " step " + std::to_string(s);
                const auto& jstep = jsteps[s];
                if (!jstep.is_object()) throw TraceError(step_where + ": must be an object");
                FunctionCall call;
                call.function_type = detail::require_int(jstep, "function", step_where);
                const auto& jarg = detail::require_field(jstep, "argument", step_where);
                if (jarg.is_string())
                    call.argument = jarg.get<std::string>();
                else if (!jarg.is_null())
                    throw TraceError(step_where + ": 'argument' must be a string or null");
                const auto& jres = detail::require_field(jstep, "resolved", step_where);
                if (!jres.is_boolean())
                    throw TraceError(step_where + ": 'resolved' must be a boolean");
                call.resolved = jres.get<bool>();
                run.steps.push_back(std::move(call));
            }
            const auto& janswer = detail::require_field(jrun, "answer", run_where);
            if (!janswer.is_array()) throw TraceError(run_where + ": 'answer' must be an array");
            for (const auto& ja : janswer) {
                if (!ja.is_string())
                    throw TraceError(run_where + ": answer entries must be strings");
                run.answer.push_back(ja.get<std::string>());
            }
            bug.runs.push_back(std::move(run));
        }
        file.bugs.push_back(std::move(bug));
    }

    validate_traces(file);
    return file;
}

inline TraceFile ingest_traces(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw TraceError("cannot open trace file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_traces(buf.str());
}

// Canonical form: object keys sorted, two-space indentation, trailing
// newline. Serializing an ingested file reproduces the generator's bytes.
inline std::string serialize_traces(const TraceFile& file) {
    nlohmann::json root;
    root["R"] = file.runs_per_bug;
    root["N"] = file.max_steps;
    nlohmann::json functions = nlohmann::json::object();
    for (const auto& [name, index] : file.functions) functions[name] = index;
    root["functions"] = functions;
    nlohmann::json bugs = nlohmann::json::array();
    for (const BugTrace& bug : file.bugs) {
        nlohmann::json jbug;
        jbug["bug_id"] = bug.bug_id;
        jbug["dataset"] = std::string(to_string(bug.dataset));
        jbug["ground_truth"] = bug.ground_truth;
        nlohmann::json jruns = nlohmann::json::array();
        for (const ReasoningRun& run : bug.runs) {
            nlohmann::json jrun;
            nlohmann::json jsteps = nlohmann::json::array();
            for (const FunctionCall& call : run.steps) {
                nlohmann::json jstep;
                jstep["function"] = call.function_type;
                if (call.argument.has_value())
                    jstep["argument"] = *call.argument;
                else
                    jstep["argument"] = nullptr;
                jstep["resolved"] = call.resolved;
                jsteps.push_back(std::move(jstep));
            }
            jrun["steps"] = std::move(jsteps);
            jrun["answer"] = run.answer;
            jruns.push_back(std::move(jrun));
        }
        jbug["runs"] = std::move(jruns);
        bugs.push_back(std::move(jbug));
    }
    root["bugs"] = std::move(bugs);
    return root.dump(2) + "\n";
}

inline void write_traces(const TraceFile& file, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw TraceError("cannot write trace file: " + path.string());
    out << serialize_traces(file);
}

}  // namespace lachesis
