#pragma once

#include <optional>
#include <string>

#include "raretok/pipelines.hpp"

namespace raretok {

struct InputDigest {
    std::string path;
    std::string fnv1a64;
};

struct ReportInputs {
    InputDigest model;
    InputDigest corpus;
    std::optional<InputDigest> count_corpus;
};

// CSV renderings of the pipeline records, full precision, one header row.
std::string sweep_csv(const AblationSweepResult& sweep);
std::string regimes_csv(const RegimeSegmentation& rare, const RegimeSegmentation& common);
std::string regimes_csv(const RegimeSegmentation& seg, TokenClass token_class);
std::string split_csv(const TokenClassSplit& split);
std::string geometry_csv(const GeometryReport& report);
std::string graph_csv(const GraphReport& report);
std::string attention_heads_csv(const AttentionReport& report);
std::string attention_impact_csv(const AttentionReport& report);
std::string spectrum_csv(const SpectralReport& report);

// Reads a sweep.csv back into the per-neuron influence vectors (the
// per-position matrix is not persisted).
AblationSweepResult load_sweep_csv(const std::string& path);

// Plateau membership handoff between subcommands.
std::string plateau_json(const RegimeSegmentation& seg, TokenClass token_class);
std::vector<int> load_plateau_group(const std::string& path);

// Declarative plot specs: data inline, axes and markers as metadata.
std::string rank_delta_loss_plot(const RegimeSegmentation& rare);
std::string alpha_hill_plot(const SpectralReport& report);

std::string report_json(const FullRunResult& run, const std::string& resolved_config,
                        const ReportInputs& inputs);

// Writes report.json, tables/*.csv and plots/*.json under out_dir.
void emit_report(const FullRunResult& run, const std::string& resolved_config,
                 const ReportInputs& inputs, const std::string& out_dir);

void write_file(const std::string& path, const std::string& content);

}  // namespace raretok
