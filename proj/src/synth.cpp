#include "raretok/synth.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "raretok/common.hpp"
#include "raretok/engine.hpp"
#include "raretok/token_stats.hpp"

namespace raretok {

namespace {

constexpr double kWeightScale = 0.02;
constexpr double kPlantedInputScale = 0.25;

// Bounded draw without std::uniform_int_distribution so streams are
// reproducible across standard libraries.
std::uint64_t bounded(NormalSampler& s, std::uint64_t n) { return s.next_u64() % n; }

std::vector<std::uint32_t> shuffled_ids(std::uint32_t n, NormalSampler& s) {
    std::vector<std::uint32_t> ids(n);
    for (std::uint32_t i = 0; i < n; ++i) ids[i] = i;
    for (std::uint32_t i = n - 1; i > 0; --i) {
        std::swap(ids[i], ids[bounded(s, i + 1)]);
    }
    return ids;
}

TensorRecord gaussian_tensor(const std::string& name, const std::vector<std::int64_t>& shape,
                             NormalSampler& s, double scale, double offset = 0.0) {
    TensorRecord rec;
    rec.name = name;
    rec.dtype = Dtype::F64;
    rec.shape = shape;
    std::size_t n = 1;
    for (auto d : shape) n *= static_cast<std::size_t>(d);
    rec.fdata.resize(n);
    for (auto& v : rec.fdata) v = offset + scale * s();
    return rec;
}

TokenStream sample_zipf_stream(const PlantSpec& spec, NormalSampler& s) {
    const auto vocab = static_cast<std::uint32_t>(spec.arch.vocab_size);
    std::vector<double> cdf(vocab);
    double acc = 0.0;
    for (std::uint32_t r = 0; r < vocab; ++r) {
        acc += std::pow(static_cast<double>(r + 1), -spec.zipf_exponent);
        cdf[r] = acc;
    }
    for (auto& c : cdf) c /= acc;

    // Scatter ranks over token ids so the rare class is not a contiguous band.
    const auto rank_to_id = shuffled_ids(vocab, s);

    TokenStream stream;
    stream.vocab_size = vocab;
    stream.ids.reserve(spec.stream_length);
    std::size_t doc_end = 0;
    while (static_cast<std::int64_t>(stream.ids.size()) < spec.stream_length) {
        const std::size_t doc_len =
            std::min<std::size_t>(100 + bounded(s, 413),
                                  spec.stream_length - stream.ids.size());
        for (std::size_t i = 0; i < doc_len; ++i) {
            const double u = s.uniform();
            const auto rank = static_cast<std::size_t>(
                std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
            stream.ids.push_back(rank_to_id[std::min<std::size_t>(rank, vocab - 1)]);
        }
        doc_end += doc_len;
        stream.doc_boundaries.push_back(doc_end);
    }
    return stream;
}

TokenClassSplit split_at(const std::vector<std::int64_t>& freq, double percentile) {
    const auto curve = descending_log_frequencies(freq);
    ElbowResult elbow{static_cast<std::int64_t>(curve.size()) - 1, false};
    if (curve.size() > 2 * 51) elbow = detect_elbow(curve, 51);
    return split_classes(freq, elbow, percentile);
}

}  // namespace

void PlantSpec::validate() const {
    arch.validate();
    std::set<int> distinct(planted_neurons.begin(), planted_neurons.end());
    if (distinct.size() != planted_neurons.size()) {
        fail(ErrorCode::ConfigError, "planted neuron indices repeat");
    }
    for (int i : planted_neurons) {
        if (i < 0 || i >= arch.d_mlp) fail(ErrorCode::ConfigError, "planted neuron outside d_mlp");
    }
    if (planted_neurons.empty() && (planted_count < 1 || planted_count > arch.d_mlp)) {
        fail(ErrorCode::ConfigError, "planted_count outside [1, d_mlp]");
    }
    for (std::uint32_t t : rare_token_set) {
        if (t >= static_cast<std::uint32_t>(arch.vocab_size)) {
            fail(ErrorCode::ConfigError, "rare token id outside vocabulary");
        }
    }
    if (boost < 0.0) fail(ErrorCode::ConfigError, "boost must be >= 0");
    if (cluster_gain < 0.0 || cluster_gain >= 1.0) {
        fail(ErrorCode::ConfigError, "cluster_gain must lie in [0, 1)");
    }
    if (zipf_exponent <= 0.0) fail(ErrorCode::ConfigError, "zipf_exponent must be positive");
    if (stream_length < 2) fail(ErrorCode::ConfigError, "stream_length must be >= 2");
    if (min_rare_targets < 0) fail(ErrorCode::ConfigError, "min_rare_targets must be >= 0");
}

PlantedModel make_planted_bundle(const PlantSpec& spec) {
    spec.validate();
    NormalSampler sampler(spec.seed);
    const auto& arch = spec.arch;
    const std::int64_t d = arch.d_model;
    const std::int64_t m = arch.d_mlp;
    const std::int64_t v = arch.vocab_size;

    PlantedModel model;
    model.spec = spec;
    model.stream = sample_zipf_stream(spec, sampler);

    model.planted_neurons = spec.planted_neurons;
    if (model.planted_neurons.empty()) {
        auto pool = shuffled_ids(static_cast<std::uint32_t>(m), sampler);
        model.planted_neurons.assign(pool.begin(), pool.begin() + spec.planted_count);
        std::sort(model.planted_neurons.begin(), model.planted_neurons.end());
    }

    const auto freq = count_frequencies(model.stream);
    const auto split_narrow = split_at(freq, 0.10);
    const auto split_wide = split_at(freq, 0.20);

    model.rare_token_set = spec.rare_token_set;
    if (model.rare_token_set.empty()) {
        model.rare_token_set = split_narrow.ids_in_class(TokenClass::Rare);
    }
    {
        std::set<std::uint32_t> cluster(model.rare_token_set.begin(), model.rare_token_set.end());
        for (std::uint32_t id : split_wide.ids_in_class(TokenClass::Rare)) cluster.insert(id);
        model.cluster_tokens.assign(cluster.begin(), cluster.end());
    }

    const auto rare_ids = split_narrow.ids_in_class(TokenClass::Rare);
    std::vector<bool> is_rare(v, false);
    for (std::uint32_t id : rare_ids) is_rare[id] = true;
    for (const auto& win : plan_windows(model.stream, arch.max_context)) {
        for (std::size_t t = win.begin + 1; t < win.end; ++t) {
            if (is_rare[model.stream.ids[t]]) ++model.rare_target_positions;
        }
    }
    if (model.rare_target_positions < spec.min_rare_targets) {
        fail(ErrorCode::InfeasibleStream,
             "stream yields " + std::to_string(model.rare_target_positions) +
                 " rare-target positions, need " + std::to_string(spec.min_rare_targets));
    }

    ModelBundle& bundle = model.bundle;
    bundle.arch = arch;
    auto add = [&](TensorRecord rec) { bundle.tensors.emplace(rec.name, std::move(rec)); };

    add(gaussian_tensor("embed.wte", {v, d}, sampler, kWeightScale));
    add(gaussian_tensor("embed.wpe", {arch.max_context, d}, sampler, kWeightScale));
    for (int l = 0; l < arch.n_layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        add(gaussian_tensor(p + "attn.w_qkv", {d, 3 * d}, sampler, kWeightScale));
        add(gaussian_tensor(p + "attn.b_qkv", {3 * d}, sampler, kWeightScale));
        add(gaussian_tensor(p + "attn.w_out", {d, d}, sampler, kWeightScale));
        add(gaussian_tensor(p + "attn.b_out", {d}, sampler, kWeightScale));
        add(gaussian_tensor(p + "ln1.weight", {d}, sampler, kWeightScale, 1.0));
        add(gaussian_tensor(p + "ln1.bias", {d}, sampler, kWeightScale));
        add(gaussian_tensor(p + "mlp.w_in", {m, d}, sampler, kWeightScale));
        add(gaussian_tensor(p + "mlp.b_in", {m}, sampler, kWeightScale));
        add(gaussian_tensor(p + "mlp.w_out", {d, m}, sampler, kWeightScale));
        add(gaussian_tensor(p + "mlp.b_out", {d}, sampler, kWeightScale));
        add(gaussian_tensor(p + "ln2.weight", {d}, sampler, kWeightScale, 1.0));
        add(gaussian_tensor(p + "ln2.bias", {d}, sampler, kWeightScale));
    }
    add(gaussian_tensor("ln_f.weight", {d}, sampler, kWeightScale, 1.0));
    add(gaussian_tensor("ln_f.bias", {d}, sampler, kWeightScale));
    add(gaussian_tensor("unembed.weight", {d, v}, sampler, kWeightScale));

    // Shared rare-band component. Blending with weight sqrt(1 - g^2) keeps
    // the expected column norm equal to the untouched columns. Tokens in the
    // rare set point along +direction, the rest of the cluster along
    // -direction: the signs roughly cancel in the softmax normalizer, so a
    // planted neuron moves cluster-token logits without dragging every other
    // token's loss along.
    TensorRecord& unembed = bundle.tensors.at("unembed.weight");
    Vector direction(d);
    for (std::int64_t r = 0; r < d; ++r) direction(r) = sampler();
    direction.normalize();
    const double g = spec.cluster_gain;
    const double shared_scale = g * kWeightScale * std::sqrt(static_cast<double>(d));
    const double residual_scale = std::sqrt(1.0 - g * g);
    if (spec.boost > 0.0 && g > 0.0) {
        const std::set<std::uint32_t> rare_set(model.rare_token_set.begin(),
                                               model.rare_token_set.end());
        for (std::uint32_t id : model.cluster_tokens) {
            const double sign = rare_set.count(id) != 0 ? 1.0 : -1.0;
            for (std::int64_t r = 0; r < d; ++r) {
                double& cell = unembed.fdata[static_cast<std::size_t>(r * v + id)];
                cell = sign * shared_scale * direction(r) + residual_scale * cell;
            }
        }
    }

    if (spec.boost > 0.0) {
        Vector mean_dir = Vector::Zero(d);
        for (std::uint32_t id : model.rare_token_set) {
            for (std::int64_t r = 0; r < d; ++r) {
                mean_dir(r) += unembed.fdata[static_cast<std::size_t>(r * v + id)];
            }
        }
        mean_dir /= static_cast<double>(model.rare_token_set.size());
        const std::string last = "layer" + std::to_string(arch.n_layers - 1) + ".";
        TensorRecord& w_out = bundle.tensors.at(last + "mlp.w_out");
        for (int neuron : model.planted_neurons) {
            for (std::int64_t r = 0; r < d; ++r) {
                w_out.fdata[static_cast<std::size_t>(r * m + neuron)] = spec.boost * mean_dir(r);
            }
        }

        // Equalize how far each planted neuron swings from its mean activation:
        // the input row keeps its random direction but gets a fixed, smallish
        // norm and no bias. The flat swing makes the planted group form a flat
        // plateau instead of blending into the top of the background curve,
        // while the reduced magnitude keeps their common-token influence inside
        // the background spread.
        TensorRecord& w_in = bundle.tensors.at(last + "mlp.w_in");
        TensorRecord& b_in = bundle.tensors.at(last + "mlp.b_in");
        const double target_norm =
            kPlantedInputScale * kWeightScale * std::sqrt(static_cast<double>(d));
        for (int neuron : model.planted_neurons) {
            double sq = 0.0;
            for (std::int64_t c = 0; c < d; ++c) {
                const double w = w_in.fdata[static_cast<std::size_t>(neuron * d + c)];
                sq += w * w;
            }
            const double rescale = target_norm / std::sqrt(sq);
            for (std::int64_t c = 0; c < d; ++c) {
                w_in.fdata[static_cast<std::size_t>(neuron * d + c)] *= rescale;
            }
            b_in.fdata[static_cast<std::size_t>(neuron)] = 0.0;
        }

        // Project the cluster direction out of every background neuron's
        // output column. Background neurons then influence rare-token logits
        // only through their idiosyncratic components, which keeps the top of
        // the background curve flat instead of sprouting accidental
        // rare-aligned outliers that mask the planted plateau.
        const std::set<int> planted_set(model.planted_neurons.begin(),
                                        model.planted_neurons.end());
        for (int neuron = 0; neuron < m; ++neuron) {
            if (planted_set.count(neuron) != 0) continue;
            double dot = 0.0;
            for (std::int64_t r = 0; r < d; ++r) {
                dot += direction(r) * w_out.fdata[static_cast<std::size_t>(r * m + neuron)];
            }
            for (std::int64_t r = 0; r < d; ++r) {
                w_out.fdata[static_cast<std::size_t>(r * m + neuron)] -= dot * direction(r);
            }
        }
    }

    bundle.validate();
    return model;
}

std::string PlantedModel::manifest_json() const {
    nlohmann::ordered_json doc;
    doc["seed"] = spec.seed;
    doc["arch"] = nlohmann::ordered_json::parse(spec.arch.to_json());
    doc["boost"] = spec.boost;
    doc["cluster_gain"] = spec.cluster_gain;
    doc["zipf_exponent"] = spec.zipf_exponent;
    doc["stream_length"] = spec.stream_length;
    doc["planted_neurons"] = planted_neurons;
    doc["rare_token_set"] = rare_token_set;
    doc["cluster_token_count"] = cluster_tokens.size();
    doc["rare_target_positions"] = rare_target_positions;
    return doc.dump(2) + "\n";
}

std::string plant_spec_to_json(const PlantSpec& spec) {
    nlohmann::ordered_json doc;
    doc["arch"] = nlohmann::ordered_json::parse(spec.arch.to_json());
    doc["planted_neurons"] = spec.planted_neurons;
    doc["planted_count"] = spec.planted_count;
    doc["boost"] = spec.boost;
    doc["rare_token_set"] = spec.rare_token_set;
    doc["cluster_gain"] = spec.cluster_gain;
    doc["zipf_exponent"] = spec.zipf_exponent;
    doc["stream_length"] = spec.stream_length;
    doc["min_rare_targets"] = spec.min_rare_targets;
    doc["seed"] = spec.seed;
    return doc.dump(2) + "\n";
}

PlantSpec plant_spec_from_json(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::MalformedHeader, std::string("plant spec: ") + e.what());
    }
    if (!doc.is_object()) fail(ErrorCode::MalformedHeader, "plant spec must be a JSON object");

    PlantSpec spec;
    for (const auto& [key, value] : doc.items()) {
        try {
            if (key == "arch") {
                spec.arch = ArchDescriptor::from_json(value.dump());
            } else if (key == "planted_neurons") {
                spec.planted_neurons = value.get<std::vector<int>>();
            } else if (key == "planted_count") {
                spec.planted_count = value.get<int>();
            } else if (key == "boost") {
                spec.boost = value.get<double>();
            } else if (key == "rare_token_set") {
                spec.rare_token_set = value.get<std::vector<std::uint32_t>>();
            } else if (key == "cluster_gain") {
                spec.cluster_gain = value.get<double>();
            } else if (key == "zipf_exponent") {
                spec.zipf_exponent = value.get<double>();
            } else if (key == "stream_length") {
                spec.stream_length = value.get<std::int64_t>();
            } else if (key == "min_rare_targets") {
                spec.min_rare_targets = value.get<std::int64_t>();
            } else if (key == "seed") {
                spec.seed = value.get<std::uint64_t>();
            } else {
                fail(ErrorCode::MalformedHeader, "plant spec: unknown key '" + key + "'");
            }
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorCode::MalformedHeader, "plant spec: bad value for '" + key + "': " + e.what());
        }
    }
    spec.validate();
    return spec;
}

RegimeCurve make_regime_curve(std::int64_t plateau_n, double kappa, double tail_rate,
                              std::int64_t n, double noise, std::uint64_t seed) {
    if (n < 10) fail(ErrorCode::ConfigError, "curve needs at least 10 points");
    if (plateau_n < 0 || plateau_n >= n / 10) {
        fail(ErrorCode::ConfigError, "plateau_n must lie in [0, n/10)");
    }
    if (kappa <= 0.0 || tail_rate < 0.0 || noise < 0.0) {
        fail(ErrorCode::ConfigError, "kappa must be positive, tail_rate and noise nonnegative");
    }
    RegimeCurve curve;
    curve.plateau_n = plateau_n;
    curve.kappa = kappa;
    curve.tail_rate = tail_rate;
    curve.tail_start = (8 * n) / 10;
    curve.delta_loss.resize(n);

    for (std::int64_t r = 1; r <= n; ++r) {
        double value;
        if (r <= plateau_n) {
            value = curve.plateau_gap;
        } else if (r <= curve.tail_start) {
            value = std::pow(static_cast<double>(r), -kappa);
        } else {
            value = std::pow(static_cast<double>(curve.tail_start), -kappa) *
                    std::exp(-tail_rate * static_cast<double>(r - curve.tail_start));
        }
        curve.delta_loss[r - 1] = value;
    }
    if (noise > 0.0) {
        NormalSampler sampler(seed);
        for (auto& value : curve.delta_loss) value *= std::exp(noise * sampler());
    }
    return curve;
}

Spectrum make_pareto_spectrum(double alpha, int n, std::uint64_t seed) {
    if (alpha <= 0.0) fail(ErrorCode::ConfigError, "alpha must be positive");
    if (n < 1) fail(ErrorCode::ConfigError, "n must be positive");
    NormalSampler sampler(seed);
    std::vector<double> values(n);
    for (auto& v : values) v = std::pow(sampler.uniform_open(), -1.0 / alpha);
    std::sort(values.begin(), values.end(), std::greater<double>());
    Spectrum spectrum;
    spectrum.eigenvalues = std::move(values);
    spectrum.source_rows = n;
    spectrum.source_cols = n;
    return spectrum;
}

WeightedGraph make_block_graph(const std::vector<int>& block_sizes, double p_in, double p_out,
                               std::uint64_t seed) {
    if (block_sizes.empty()) fail(ErrorCode::ConfigError, "need at least one block");
    if (p_in < 0.0 || p_in > 1.0 || p_out < 0.0 || p_out > 1.0) {
        fail(ErrorCode::ConfigError, "edge probabilities must lie in [0, 1]");
    }
    int n = 0;
    std::vector<int> block_of;
    for (std::size_t b = 0; b < block_sizes.size(); ++b) {
        if (block_sizes[b] < 1) fail(ErrorCode::ConfigError, "block sizes must be positive");
        n += block_sizes[b];
        block_of.insert(block_of.end(), block_sizes[b], static_cast<int>(b));
    }
    NormalSampler sampler(seed);
    WeightedGraph graph;
    graph.weights = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const double p = block_of[i] == block_of[j] ? p_in : p_out;
            if (sampler.uniform() < p) {
                graph.weights(i, j) = 1.0;
                graph.weights(j, i) = 1.0;
            }
        }
    }
    return graph;
}

Matrix make_correlated_acts(int blocks, double rho, int n_neurons, std::int64_t t_samples,
                            std::uint64_t seed) {
    if (blocks < 1 || n_neurons < blocks) {
        fail(ErrorCode::ConfigError, "need at least one neuron per block");
    }
    if (rho < 0.0 || rho >= 1.0) fail(ErrorCode::ConfigError, "rho must lie in [0, 1)");
    if (t_samples < 1) fail(ErrorCode::ConfigError, "t_samples must be positive");
    NormalSampler sampler(seed);
    Matrix factors(blocks, t_samples);
    for (int b = 0; b < blocks; ++b) {
        for (std::int64_t t = 0; t < t_samples; ++t) factors(b, t) = sampler();
    }
    const double shared = std::sqrt(rho);
    const double own = std::sqrt(1.0 - rho);
    Matrix acts(n_neurons, t_samples);
    for (int i = 0; i < n_neurons; ++i) {
        const int b = static_cast<int>((static_cast<std::int64_t>(i) * blocks) / n_neurons);
        for (std::int64_t t = 0; t < t_samples; ++t) {
            acts(i, t) = shared * factors(b, t) + own * sampler();
        }
    }
    return acts;
}

}  // namespace raretok
