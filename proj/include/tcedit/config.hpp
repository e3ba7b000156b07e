#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "tcedit/data.hpp"
#include "tcedit/edit.hpp"
#include "tcedit/model.hpp"
#include "tcedit/training.hpp"

namespace tcedit {

struct GeneratorConfig {
    SyntheticSpec spec;
    std::size_t count = 20;  // scenes, seeds spec.seed, spec.seed + 1, ...
};

struct EvalConfig {
    std::size_t step = 5;
    std::size_t groups_per_boundary = 6;
    std::uint64_t baseline_seed = 0;
};

// Everything a command may need. Sections: model, train, generator, eval, edit.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    GeneratorConfig generator;
    EvalConfig eval;
    EditOptions edit;

    std::vector<std::string> problems() const;
    // Throws ConfigError listing every problem across all sections.
    void validate() const;

    SamplingConfig eval_sampling() const { return {model.window, eval.step, eval.groups_per_boundary}; }
};

// Applies a JSON document on top of `base`. Unknown sections or keys and
// wrongly typed values are collected and thrown together as one ConfigError.
RunConfig apply_config_json(RunConfig base, const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});

// Dotted-key override such as "train.epochs=5" or "model.streams=joint".
// Values are parsed as JSON first, falling back to a plain string.
RunConfig apply_overrides(RunConfig base, const std::vector<std::string>& assignments);

nlohmann::json run_config_to_json(const RunConfig& config);

}  // namespace tcedit
