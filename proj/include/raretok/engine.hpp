#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "raretok/tensor_io.hpp"

namespace raretok {

inline constexpr double kLayerNormEps = 1e-5;

struct Intervention {
    enum class Kind { MeanAblateNeuron, ZeroHead, ZeroAllHeads };

    Kind kind = Kind::MeanAblateNeuron;
    int neuron = -1;
    double mean_value = 0.0;
    int layer = -1;
    int head = -1;

    // Replaces neuron i's final-layer activation with a constant, shifting
    // the residual stream by (value - n_i) * w_out column i at every position.
    static Intervention mean_ablate_neuron(int neuron, double mean_value);
    static Intervention zero_head(int layer, int head);
    static Intervention zero_all_heads(int layer);
};

struct ForwardOptions {
    bool capture_mlp = true;         // final-layer post-gelu activations
    bool capture_attention = false;  // per (layer, head) weight matrices
    bool capture_residual = false;   // residual stream entering the final layernorm
};

struct ForwardTrace {
    Matrix logits;    // positions x vocab
    Matrix mlp_acts;  // positions x d_mlp, final layer, reflects interventions
    Matrix residual;  // positions x d_model, pre-final-layernorm
    std::map<std::pair<int, int>, Matrix> attn_weights;
};

ForwardTrace forward(const ModelBundle& bundle, std::span<const std::uint32_t> tokens,
                     const std::vector<Intervention>& interventions = {},
                     const ForwardOptions& options = {});

// Next-token cross-entropy; entry t-1 is the loss of predicting tokens[t]
// from position t-1, so the result has one entry per position after the first.
std::vector<double> token_loss(const ForwardTrace& trace, std::span<const std::uint32_t> tokens);

// Contiguous evaluation windows: documents are chopped into runs of at most
// max_context tokens and windows never straddle a document boundary.
struct EvalWindow {
    std::size_t begin = 0;
    std::size_t end = 0;
};

std::vector<EvalWindow> plan_windows(const TokenStream& stream, int max_context);

// Per-neuron mean of final-layer activations over every evaluated position.
// Accumulation runs in position order within a window and window order
// across windows, so the result does not depend on the thread count.
Vector mean_activation(const ModelBundle& bundle, const TokenStream& stream, int threads = 1);

}  // namespace raretok
