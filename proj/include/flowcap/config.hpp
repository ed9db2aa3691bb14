#pragma once

// Run configuration: plain-text "key = value" lines ('#' starts a comment).
// Command-line overrides are applied after the file; later settings win.

#include <filesystem>
#include <string>
#include <vector>

#include "flowcap/data.hpp"
#include "flowcap/decoding.hpp"
#include "flowcap/model.hpp"
#include "flowcap/training.hpp"

namespace flowcap {

struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    DecodeConfig decode;
    SynthConfig synth;
    std::size_t n_val = 40;
    std::vector<std::uint64_t> ablate_seeds{1, 2, 3};
    std::vector<double> ablate_lambdas{0.0, 0.1, 1.0, 10.0};

    RunConfig() { model.feature_dim = synth.feature_dim; }
};

struct ConfigKey {
    std::string key;
    std::string help;
    void (*set)(RunConfig&, const std::string&);
    std::string (*get)(const RunConfig&);
};

const std::vector<ConfigKey>& config_schema();

// ConfigError on an unknown key or a malformed value.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);
// "key=value"
void apply_override(RunConfig& cfg, const std::string& assignment);
void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& source = "config");
RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

// One line per key: name, current value, help.
std::string describe_schema(const RunConfig& defaults = {});
// Every key as "key = value", in schema order.
std::string dump_config(const RunConfig& cfg);

}  // namespace flowcap
