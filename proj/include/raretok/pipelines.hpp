#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "raretok/engine.hpp"
#include "raretok/graph.hpp"
#include "raretok/spectral.hpp"
#include "raretok/stats.hpp"
#include "raretok/tensor_io.hpp"
#include "raretok/token_stats.hpp"

namespace raretok {

struct RegimeThresholds {
    double plateau_slope_max = 0.2;  // max |slope| of an accepted plateau segment
    double gap_min = 1.5;            // plateau level over middle extrapolation at rank 1
    double tail_ratio = 2.0;         // |tail slope| over |middle slope|
};

// Influence of every final-layer neuron, one |loss change| per evaluated
// position. Class means are a pure function of the stored matrix and a
// vocabulary split, so re-splitting reproduces a fresh sweep exactly.
struct AblationSweepResult {
    Matrix position_abs_delta;                   // loss positions x d_mlp
    std::vector<std::uint32_t> position_target;  // target token per loss position
    Vector delta_loss_rare;
    Vector delta_loss_common;
    Vector delta_loss_all;
    std::int64_t rare_positions = 0;
    std::int64_t common_positions = 0;
    std::int64_t excluded_positions = 0;
    std::vector<int> ranking;  // neurons by delta_loss_rare descending, ties by index
};

struct ClassDeltas {
    Vector rare;
    Vector common;
    Vector all;
    std::int64_t rare_positions = 0;
    std::int64_t common_positions = 0;
    std::int64_t excluded_positions = 0;
};

ClassDeltas aggregate_sweep(const Matrix& position_abs_delta,
                            const std::vector<std::uint32_t>& targets,
                            const TokenClassSplit& split);

// First `limit` tokens with document boundaries clipped to match. A limit of
// zero keeps the whole stream.
TokenStream truncate_stream(const TokenStream& stream, std::int64_t limit);

AblationSweepResult ablation_sweep(const ModelBundle& bundle, const TokenStream& stream,
                                   const TokenClassSplit& split, int threads = 1);

struct RegimeSegmentation {
    std::int64_t plateau_end_rank = 0;   // 0 when no plateau is accepted
    std::int64_t powerlaw_end_rank = 0;  // last rank of the power-law regime
    double kappa = 0.0;
    double beta = 0.0;
    double r_squared = 0.0;
    bool r_squared_defined = false;
    double slope_left = 0.0;
    double slope_right = 0.0;
    std::vector<int> plateau_set;      // neuron indices, empty for curve-only input
    std::vector<int> ranked_neurons;   // neurons with positive influence, by rank
    std::vector<double> ranked_values; // the fitted descending curve
    RegimeThresholds thresholds;
};

// Two-changepoint piecewise-linear fit of log(value) against log(rank).
RegimeSegmentation segment_curve(const std::vector<double>& values,
                                 const RegimeThresholds& thresholds = {});
RegimeSegmentation segment_regimes(const AblationSweepResult& sweep, TokenClass token_class,
                                   const RegimeThresholds& thresholds = {});

struct BaselineStats {
    std::vector<double> values;  // one per random group
    double mean = 0.0;
    double stddev = 0.0;
    double p_value = 1.0;  // group statistic against the baseline sample
    bool p_defined = false;
};

struct GeometryReport {
    int group_size = 0;
    int d_eff = 0;
    double d_eff_ratio = 0.0;
    BaselineStats baseline;  // of d_eff ratios
    std::int64_t sample_positions = 0;
};

struct GraphReport {
    double q = 0.0;
    int communities = 0;
    double mean_community_size = 0.0;
    int group_size = 0;
    BaselineStats baseline;  // of modularity values
    std::int64_t sample_positions = 0;
};

struct AttentionHeadReport {
    int layer = 0;
    int head = 0;
    double gini_rare_mean = 0.0;
    double gini_rare_std = 0.0;
    double gini_common_mean = 0.0;
    double gini_common_std = 0.0;
    double welch_t = 0.0;
    double welch_p = 1.0;
    double spearman_r = 0.0;
    bool spearman_defined = false;
    double impact = 0.0;  // relative change of group activations when the head is zeroed
};

struct AttentionImpact {
    std::string kind;  // "max_head", "random_head", "all_heads"
    int layer = 0;
    int head = -1;  // -1 for all-heads
    double impact = 0.0;
};

struct AttentionReport {
    std::vector<AttentionHeadReport> heads;
    double spearman_mean = 0.0;
    double spearman_std = 0.0;
    std::vector<AttentionImpact> impacts;
    std::int64_t rare_positions = 0;
    std::int64_t common_positions = 0;
};

struct SpectralReport {
    double alpha = 0.0;
    std::size_t k = 0;
    double lambda_k = 0.0;
    bool degenerate = false;
    int group_size = 0;
    std::string weight_source;  // "w_in" or "w_out"
    BaselineStats baseline;     // of alpha values
};

// Activation matrix of every final-layer neuron at positions whose target
// token is rare (rows = neurons, cols = positions).
struct RareActivations {
    Matrix acts;
    std::vector<std::size_t> positions;
};

RareActivations collect_rare_activations(const ModelBundle& bundle, const TokenStream& stream,
                                         const TokenClassSplit& split, int threads = 1);

// Matrix-level cores, shared by the bundle wrappers and fixture tests.
// Baseline groups are size-matched draws from the rows outside `group`.
GeometryReport geometry_from_activations(const Matrix& acts, const std::vector<int>& group,
                                         int baselines, double tau, std::uint64_t seed);
GraphReport graph_from_activations(const Matrix& acts, const std::vector<int>& group,
                                   int baselines, int bins, int restarts, double resolution,
                                   std::uint64_t seed);
SpectralReport spectral_from_weights(const Matrix& weight_rows, const std::vector<int>& group,
                                     int baselines, std::uint64_t seed);

GeometryReport geometry_analysis(const ModelBundle& bundle, const TokenStream& stream,
                                 const TokenClassSplit& split, const std::vector<int>& group,
                                 int baselines, double tau, std::uint64_t seed, int threads = 1);
GraphReport graph_analysis(const ModelBundle& bundle, const TokenStream& stream,
                           const TokenClassSplit& split, const std::vector<int>& group,
                           int baselines, int bins, int restarts, double resolution,
                           std::uint64_t seed, int threads = 1);
AttentionReport attention_analysis(const ModelBundle& bundle, const TokenStream& stream,
                                   const TokenClassSplit& split, const std::vector<int>& group,
                                   std::uint64_t seed, int threads = 1);
SpectralReport spectral_analysis(const ModelBundle& bundle, const std::vector<int>& group,
                                 int baselines, bool use_w_out, std::uint64_t seed);

struct PipelineConfig {
    double percentile = 0.15;
    int elbow_window = 51;
    double tau = 0.95;
    int bins = 16;
    int baselines = 20;
    int restarts = 10;
    double resolution = 1.0;
    RegimeThresholds regimes;
    bool spectral_use_w_out = false;
    std::uint64_t seed = 0;
    int threads = 0;  // 0: one worker per core; results never depend on this
    std::int64_t eval_tokens = 0;  // 0: evaluate the whole stream
    bool run_geometry = true;
    bool run_graph = true;
    bool run_attention = true;
    bool run_spectral = true;

    void validate() const;
};

struct FullRunResult {
    TokenClassSplit split;
    AblationSweepResult sweep;
    RegimeSegmentation regimes_rare;
    RegimeSegmentation regimes_common;
    std::optional<GeometryReport> geometry;
    std::optional<GraphReport> graph;
    std::optional<AttentionReport> attention;
    std::optional<SpectralReport> spectral;
    std::vector<std::string> skipped;  // "analysis: reason" entries
    bool partial = false;
    std::int64_t evaluated_tokens = 0;
    PipelineConfig config;
};

// freq -> sweep -> segmentation -> group analyses on the plateau set.
// Frequencies come from count_stream when given (a larger counting corpus),
// otherwise from the evaluation stream itself.
FullRunResult run_full_pipeline(const ModelBundle& bundle, const TokenStream& stream,
                                const PipelineConfig& config,
                                const TokenStream* count_stream = nullptr);

}  // namespace raretok
