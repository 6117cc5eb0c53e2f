#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "raretok/graph.hpp"
#include "raretok/spectral.hpp"
#include "raretok/tensor_io.hpp"

namespace raretok {

// Recipe for a toy model with known rare-token neurons. Base weights are
// Gaussian; the planted neurons' final-layer output columns are aligned with
// the mean unembedding of the rare token set, scaled by boost. A cluster
// gain > 0 gives every rare-band token a shared unembedding component so the
// alignment target is a real direction, while keeping column norms at the
// background level.
struct PlantSpec {
    ArchDescriptor arch{2, 64, 256, 4, 1024, 256, "gelu", "pre_layernorm"};
    std::vector<int> planted_neurons;           // empty: pick planted_count at random
    int planted_count = 8;
    double boost = 5.0;
    std::vector<std::uint32_t> rare_token_set;  // empty: rare class at percentile 0.10
    double cluster_gain = 0.85;
    double zipf_exponent = 1.1;
    std::int64_t stream_length = 160000;
    std::int64_t min_rare_targets = 500;
    std::uint64_t seed = 1;

    void validate() const;
};

struct PlantedModel {
    ModelBundle bundle;
    TokenStream stream;
    std::vector<int> planted_neurons;
    std::vector<std::uint32_t> rare_token_set;
    std::vector<std::uint32_t> cluster_tokens;
    std::int64_t rare_target_positions = 0;
    PlantSpec spec;

    std::string manifest_json() const;
};

PlantedModel make_planted_bundle(const PlantSpec& spec);

// spec.json round trip for the synth subcommand. Missing keys keep their
// defaults, unknown keys are rejected.
PlantSpec plant_spec_from_json(const std::string& text);
std::string plant_spec_to_json(const PlantSpec& spec);

// Piecewise influence curve: a flat shelf of plateau_n values sitting
// plateau_gap above the rank-1 extrapolation of the power-law middle, the
// middle itself at rank^(-kappa), and an exponential drop from 0.8*n on.
// Noise multiplies each value by exp(noise * standard normal).
struct RegimeCurve {
    std::vector<double> delta_loss;
    std::int64_t plateau_n = 0;
    double kappa = 1.0;
    double tail_rate = 0.05;
    std::int64_t tail_start = 0;
    double plateau_gap = 2.0;
};

RegimeCurve make_regime_curve(std::int64_t plateau_n, double kappa, double tail_rate,
                              std::int64_t n, double noise, std::uint64_t seed);

// Pareto(alpha) draws with x_min = 1, sorted descending.
Spectrum make_pareto_spectrum(double alpha, int n, std::uint64_t seed);

// Unit-weight random graph with dense blocks: edge probability p_in inside a
// block, p_out across blocks.
WeightedGraph make_block_graph(const std::vector<int>& block_sizes, double p_in, double p_out,
                               std::uint64_t seed);

// n_neurons x t_samples matrix; neurons in the same block share a latent
// factor with weight sqrt(rho).
Matrix make_correlated_acts(int blocks, double rho, int n_neurons, std::int64_t t_samples,
                            std::uint64_t seed);

}  // namespace raretok
