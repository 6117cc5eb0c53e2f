#include "raretok/engine.hpp"

#include <algorithm>
#include <cmath>

#include "raretok/common.hpp"

namespace raretok {

namespace {

double gelu(double x) {
    constexpr double c = 0.79788456080286535588;  // sqrt(2/pi)
    return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}

Matrix layernorm_rows(const Matrix& x, const Vector& gain, const Vector& bias) {
    Matrix out(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double mu = x.row(r).mean();
        const double var = (x.row(r).array() - mu).square().mean();
        const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
        out.row(r) =
            ((x.row(r).array() - mu) * inv) * gain.transpose().array() + bias.transpose().array();
    }
    return out;
}

// Softmax over the causal prefix of each row; entries past the diagonal stay 0.
Matrix causal_softmax(const Matrix& scores) {
    const Eigen::Index p = scores.rows();
    Matrix w = Matrix::Zero(p, p);
    for (Eigen::Index r = 0; r < p; ++r) {
        const double m = scores.row(r).head(r + 1).maxCoeff();
        double z = 0.0;
        for (Eigen::Index c = 0; c <= r; ++c) {
            w(r, c) = std::exp(scores(r, c) - m);
            z += w(r, c);
        }
        w.row(r).head(r + 1) /= z;
    }
    return w;
}

void check_interventions(const ArchDescriptor& arch, const std::vector<Intervention>& ivs) {
    for (const auto& iv : ivs) {
        switch (iv.kind) {
            case Intervention::Kind::MeanAblateNeuron:
                if (iv.neuron < 0 || iv.neuron >= arch.d_mlp) {
                    fail(ErrorCode::InvalidIntervention,
                         "neuron " + std::to_string(iv.neuron) + " outside d_mlp");
                }
                if (!std::isfinite(iv.mean_value)) {
                    fail(ErrorCode::InvalidIntervention, "ablation value must be finite");
                }
                break;
            case Intervention::Kind::ZeroHead:
                if (iv.head < 0 || iv.head >= arch.n_heads) {
                    fail(ErrorCode::InvalidIntervention,
                         "head " + std::to_string(iv.head) + " outside n_heads");
                }
                [[fallthrough]];
            case Intervention::Kind::ZeroAllHeads:
                if (iv.layer < 0 || iv.layer >= arch.n_layers) {
                    fail(ErrorCode::InvalidIntervention,
                         "layer " + std::to_string(iv.layer) + " outside n_layers");
                }
                break;
        }
    }
}

}  // namespace

Intervention Intervention::mean_ablate_neuron(int neuron, double mean_value) {
    Intervention iv;
    iv.kind = Kind::MeanAblateNeuron;
    iv.neuron = neuron;
    iv.mean_value = mean_value;
    return iv;
}

Intervention Intervention::zero_head(int layer, int head) {
    Intervention iv;
    iv.kind = Kind::ZeroHead;
    iv.layer = layer;
    iv.head = head;
    return iv;
}

Intervention Intervention::zero_all_heads(int layer) {
    Intervention iv;
    iv.kind = Kind::ZeroAllHeads;
    iv.layer = layer;
    return iv;
}

ForwardTrace forward(const ModelBundle& bundle, std::span<const std::uint32_t> tokens,
                     const std::vector<Intervention>& interventions,
                     const ForwardOptions& options) {
    const ArchDescriptor& arch = bundle.arch;
    const auto p = static_cast<Eigen::Index>(tokens.size());
    if (p > arch.max_context) {
        fail(ErrorCode::ContextOverflow, std::to_string(tokens.size()) + " tokens exceed max_context " +
                                             std::to_string(arch.max_context));
    }
    check_interventions(arch, interventions);
    for (std::uint32_t id : tokens) {
        if (id >= static_cast<std::uint32_t>(arch.vocab_size)) {
            fail(ErrorCode::OutOfRangeTokenId, "token id " + std::to_string(id));
        }
    }

    const int d = arch.d_model;
    const int heads = arch.n_heads;
    const int dh = d / heads;

    const Matrix wte = bundle.matrix("embed.wte");
    Matrix x(p, d);
    for (Eigen::Index r = 0; r < p; ++r) x.row(r) = wte.row(tokens[r]);
    if (bundle.has("embed.wpe")) {
        const Matrix wpe = bundle.matrix("embed.wpe");
        x += wpe.topRows(p);
    }

    ForwardTrace trace;
    for (int l = 0; l < arch.n_layers; ++l) {
        const std::string prefix = "layer" + std::to_string(l) + ".";

        Matrix n1 = layernorm_rows(x, bundle.vector_or(prefix + "ln1.weight", d, 1.0),
                                   bundle.vector_or(prefix + "ln1.bias", d, 0.0));
        Matrix qkv = n1 * bundle.matrix(prefix + "attn.w_qkv");
        qkv.rowwise() += bundle.tensor(prefix + "attn.b_qkv").as_vector().transpose();

        Matrix context(p, d);
        for (int h = 0; h < heads; ++h) {
            const auto q = qkv.middleCols(h * dh, dh);
            const auto k = qkv.middleCols(d + h * dh, dh);
            const auto v = qkv.middleCols(2 * d + h * dh, dh);
            Matrix weights = causal_softmax(q * k.transpose() / std::sqrt(static_cast<double>(dh)));
            context.middleCols(h * dh, dh) = weights * v;
            if (options.capture_attention) trace.attn_weights[{l, h}] = std::move(weights);
        }
        for (const auto& iv : interventions) {
            if (iv.kind == Intervention::Kind::ZeroHead && iv.layer == l) {
                context.middleCols(iv.head * dh, dh).setZero();
            } else if (iv.kind == Intervention::Kind::ZeroAllHeads && iv.layer == l) {
                context.setZero();
            }
        }
        Matrix attn_out = context * bundle.matrix(prefix + "attn.w_out");
        attn_out.rowwise() += bundle.tensor(prefix + "attn.b_out").as_vector().transpose();
        x += attn_out;

        Matrix n2 = layernorm_rows(x, bundle.vector_or(prefix + "ln2.weight", d, 1.0),
                                   bundle.vector_or(prefix + "ln2.bias", d, 0.0));
        Matrix acts = n2 * bundle.matrix(prefix + "mlp.w_in").transpose();
        acts.rowwise() += bundle.tensor(prefix + "mlp.b_in").as_vector().transpose();
        acts = acts.unaryExpr([](double v) { return gelu(v); });

        const Matrix w_out = bundle.matrix(prefix + "mlp.w_out");
        Matrix mlp_out = acts * w_out.transpose();
        mlp_out.rowwise() += bundle.tensor(prefix + "mlp.b_out").as_vector().transpose();

        if (l == arch.n_layers - 1) {
            for (const auto& iv : interventions) {
                if (iv.kind != Intervention::Kind::MeanAblateNeuron) continue;
                Vector delta = Vector::Constant(p, iv.mean_value) - acts.col(iv.neuron);
                mlp_out += delta * w_out.col(iv.neuron).transpose();
                acts.col(iv.neuron).setConstant(iv.mean_value);
            }
            if (options.capture_mlp) trace.mlp_acts = std::move(acts);
        }
        x += mlp_out;
    }

    if (options.capture_residual) trace.residual = x;
    Matrix final = layernorm_rows(x, bundle.vector_or("ln_f.weight", d, 1.0),
                                  bundle.vector_or("ln_f.bias", d, 0.0));
    trace.logits = final * bundle.matrix("unembed.weight");
    return trace;
}

std::vector<double> token_loss(const ForwardTrace& trace, std::span<const std::uint32_t> tokens) {
    if (trace.logits.rows() != static_cast<Eigen::Index>(tokens.size())) {
        fail(ErrorCode::LengthMismatch, "trace has " + std::to_string(trace.logits.rows()) +
                                            " positions for " + std::to_string(tokens.size()) +
                                            " tokens");
    }
    std::vector<double> losses;
    if (tokens.size() < 2) return losses;
    losses.reserve(tokens.size() - 1);
    for (std::size_t t = 1; t < tokens.size(); ++t) {
        const auto row = trace.logits.row(static_cast<Eigen::Index>(t - 1));
        const double m = row.maxCoeff();
        const double lse = m + std::log((row.array() - m).exp().sum());
        losses.push_back(lse - row(tokens[t]));
    }
    return losses;
}

std::vector<EvalWindow> plan_windows(const TokenStream& stream, int max_context) {
    if (max_context < 1) fail(ErrorCode::ConfigError, "max_context must be positive");
    std::vector<EvalWindow> windows;
    std::size_t start = 0;
    for (std::size_t boundary : stream.doc_boundaries) {
        for (std::size_t s = start; s < boundary; s += static_cast<std::size_t>(max_context)) {
            windows.push_back({s, std::min(boundary, s + static_cast<std::size_t>(max_context))});
        }
        start = boundary;
    }
    return windows;
}

Vector mean_activation(const ModelBundle& bundle, const TokenStream& stream, int threads) {
    if (stream.size() == 0) {
        fail(ErrorCode::EmptyReferenceSet, "reference stream is empty");
    }
    const auto windows = plan_windows(stream, bundle.arch.max_context);
    std::vector<Vector> sums(windows.size());
    ForwardOptions options;
    options.capture_mlp = true;
    options.capture_attention = false;
    parallel_for(windows.size(), threads, [&](std::size_t w) {
        const auto& win = windows[w];
        std::span<const std::uint32_t> toks(stream.ids.data() + win.begin, win.end - win.begin);
        ForwardTrace trace = forward(bundle, toks, {}, options);
        Vector acc = Vector::Zero(bundle.arch.d_mlp);
        for (Eigen::Index r = 0; r < trace.mlp_acts.rows(); ++r) {
            acc += trace.mlp_acts.row(r).transpose();
        }
        sums[w] = std::move(acc);
    });
    Vector total = Vector::Zero(bundle.arch.d_mlp);
    for (const auto& s : sums) total += s;
    return total / static_cast<double>(stream.size());
}

}  // namespace raretok
