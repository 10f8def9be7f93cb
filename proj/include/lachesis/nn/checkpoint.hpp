#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lachesis/errors.hpp"
#include "lachesis/nn/params.hpp"

namespace lachesis::nn {

inline constexpr int kCheckpointVersion = 1;

// Versioned JSON container of named arrays plus free-form metadata;
// loading validates array shapes against the receiving model.
inline nlohmann::json checkpoint_to_json(const ParameterSet& params,
                                         nlohmann::json metadata) {
    nlohmann::json out;
    out["version"] = kCheckpointVersion;
    out["metadata"] = std::move(metadata);
    nlohmann::json arrays = nlohmann::json::array();
    for (const Parameter& p : params.all()) {
        nlohmann::json jp;
        jp["name"] = p.name;
        jp["rows"] = p.value.rows();
        jp["cols"] = p.value.cols();
        jp["data"] = std::vector<double>(p.value.data(), p.value.data() + p.value.size());
        arrays.push_back(std::move(jp));
    }
    out["parameters"] = std::move(arrays);
    return out;
}

inline void save_checkpoint(const ParameterSet& params, nlohmann::json metadata,
                            const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write checkpoint: " + path.string());
    out << checkpoint_to_json(params, std::move(metadata)).dump(2) << "\n";
}

struct LoadedCheckpoint {
    nlohmann::json metadata;
    nlohmann::json parameters;  // array of {name, rows, cols, data}
};

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open checkpoint: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(buf.str());
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("checkpoint is not valid JSON: ") + e.what());
    }
    if (!root.is_object() || !root.contains("version") || !root["version"].is_number_integer())
        throw ConfigError("checkpoint: missing version");
    if (root["version"].get<int>() != kCheckpointVersion)
        throw ConfigError("checkpoint: unsupported version " + root["version"].dump());
    if (!root.contains("parameters") || !root["parameters"].is_array())
        throw ConfigError("checkpoint: missing parameters array");
    return {root.value("metadata", nlohmann::json::object()), root["parameters"]};
}

// Copies checkpoint arrays into a model's parameters; every name must match
// and every shape must agree with the hyperparameter-derived layout.
inline void restore_parameters(ParameterSet& params, const LoadedCheckpoint& ckpt) {
    if (ckpt.parameters.size() != params.all().size())
        throw ConfigError("checkpoint: expected " + std::to_string(params.all().size()) +
                          " parameters, found " + std::to_string(ckpt.parameters.size()));
    for (std::size_t i = 0; i < params.all().size(); ++i) {
        Parameter& p = params.all()[i];
        const nlohmann::json& jp = ckpt.parameters[i];
        if (jp.value("name", "") != p.name)
            throw ConfigError("checkpoint: parameter " + std::to_string(i) + " is '" +
                              jp.value("name", "") + "', model expects '" + p.name + "'");
        if (jp.value("rows", -1) != p.value.rows() || jp.value("cols", -1) != p.value.cols())
            throw ConfigError("checkpoint: parameter '" + p.name + "' has shape " +
                              std::to_string(jp.value("rows", -1)) + "x" +
                              std::to_string(jp.value("cols", -1)) + ", model expects " +
                              std::to_string(p.value.rows()) + "x" +
                              std::to_string(p.value.cols()));
        const auto data = jp.at("data").get<std::vector<double>>();
        if (data.size() != p.value.size())
            throw ConfigError("checkpoint: parameter '" + p.name + "' data length mismatch");
        std::copy(data.begin(), data.end(), p.value.data());
    }
}

}  // namespace lachesis::nn
