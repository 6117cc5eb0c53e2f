#pragma once

#include <map>
#include <string>

#include "raretok/pipelines.hpp"

namespace raretok {

// Everything a full run needs: input locations plus the analysis knobs.
// Values load from a key = value config file first; command-line flags
// override individual keys afterwards.
struct RunConfig {
    std::string model;
    std::string corpus;
    std::string count_corpus;  // optional larger corpus for frequency counting
    std::string out = ".";
    PipelineConfig pipeline;
    bool seed_set = false;

    void validate_io(bool need_model, bool need_corpus) const;

    // The knobs that determine results, in a fixed key order. Thread count
    // and paths are deliberately absent: they must not change any output.
    std::string resolved_json() const;
};

// Parses a config file of `key = value` lines ('#' comments, quoted strings,
// booleans, numbers) into a RunConfig. Unknown keys are rejected.
RunConfig load_run_config(const std::string& path);
void apply_config_entry(RunConfig& config, const std::string& key, const std::string& value);

// Comma-separated neuron indices, e.g. "3,17,42".
std::vector<int> parse_group_list(const std::string& text);

}  // namespace raretok
