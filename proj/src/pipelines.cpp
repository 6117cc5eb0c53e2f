#include "raretok/pipelines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "raretok/common.hpp"

namespace raretok {

TokenStream truncate_stream(const TokenStream& stream, std::int64_t limit) {
    if (limit <= 0 || static_cast<std::size_t>(limit) >= stream.size()) return stream;
    TokenStream out;
    out.vocab_size = stream.vocab_size;
    out.ids.assign(stream.ids.begin(), stream.ids.begin() + limit);
    for (std::size_t b : stream.doc_boundaries) {
        if (b < static_cast<std::size_t>(limit)) out.doc_boundaries.push_back(b);
    }
    out.doc_boundaries.push_back(static_cast<std::size_t>(limit));
    return out;
}

namespace {

double log_sum_exp(const Eigen::Ref<const Vector>& row) {
    const double m = row.maxCoeff();
    return m + std::log((row.array() - m).exp().sum());
}

void check_group(const std::vector<int>& group, int n_rows, int min_size) {
    if (static_cast<int>(group.size()) < min_size) {
        fail(ErrorCode::GroupTooSmall, "group has " + std::to_string(group.size()) +
                                           " neurons, need at least " + std::to_string(min_size));
    }
    std::set<int> seen;
    for (int i : group) {
        if (i < 0 || i >= n_rows) fail(ErrorCode::ConfigError, "group index outside layer");
        if (!seen.insert(i).second) fail(ErrorCode::ConfigError, "group indices repeat");
    }
}

// Size-matched random groups drawn from the rows outside `group`.
std::vector<std::vector<int>> sample_baseline_groups(int n_rows, const std::vector<int>& group,
                                                     int count, std::uint64_t seed) {
    std::vector<int> pool;
    std::set<int> in_group(group.begin(), group.end());
    for (int i = 0; i < n_rows; ++i) {
        if (in_group.count(i) == 0) pool.push_back(i);
    }
    if (pool.size() < group.size()) {
        fail(ErrorCode::GroupTooSmall, "not enough neurons outside the group for baselines");
    }
    NormalSampler sampler(seed);
    std::vector<std::vector<int>> groups(count);
    for (auto& g : groups) {
        for (std::size_t i = pool.size() - 1; i > 0; --i) {
            std::swap(pool[i], pool[sampler.next_u64() % (i + 1)]);
        }
        g.assign(pool.begin(), pool.begin() + group.size());
        std::sort(g.begin(), g.end());
    }
    return groups;
}

BaselineStats baseline_stats(double group_value, std::vector<double> values) {
    BaselineStats stats;
    stats.values = std::move(values);
    stats.mean = mean(stats.values);
    stats.stddev = stats.values.size() > 1 ? std::sqrt(variance(stats.values)) : 0.0;
    if (stats.values.size() > 1) {
        stats.p_value = one_sample_t(group_value, stats.values).p;
        stats.p_defined = true;
    }
    return stats;
}

Matrix select_rows(const Matrix& m, const std::vector<int>& rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(rows[r]);
    return out;
}

struct SegmentFit {
    double slope = 0.0;
    double intercept = 0.0;
    double sse = 0.0;
    double mean_y = 0.0;
    double ss_tot = 0.0;
};

// Least-squares lines over log-log prefix sums, O(1) per segment.
class PiecewiseFitter {
public:
    explicit PiecewiseFitter(const std::vector<double>& descending) {
        const std::size_t n = descending.size();
        sx_.resize(n + 1, 0.0);
        sy_.resize(n + 1, 0.0);
        sxx_.resize(n + 1, 0.0);
        sxy_.resize(n + 1, 0.0);
        syy_.resize(n + 1, 0.0);
        for (std::size_t r = 1; r <= n; ++r) {
            const double x = std::log(static_cast<double>(r));
            const double y = std::log(descending[r - 1]);
            sx_[r] = sx_[r - 1] + x;
            sy_[r] = sy_[r - 1] + y;
            sxx_[r] = sxx_[r - 1] + x * x;
            sxy_[r] = sxy_[r - 1] + x * y;
            syy_[r] = syy_[r - 1] + y * y;
        }
    }

    // Fit over 1-based ranks [lo, hi].
    SegmentFit fit(std::size_t lo, std::size_t hi) const {
        const double n = static_cast<double>(hi - lo + 1);
        const double sx = sx_[hi] - sx_[lo - 1];
        const double sy = sy_[hi] - sy_[lo - 1];
        const double sxx = sxx_[hi] - sxx_[lo - 1];
        const double sxy = sxy_[hi] - sxy_[lo - 1];
        const double syy = syy_[hi] - syy_[lo - 1];
        SegmentFit f;
        const double denom = n * sxx - sx * sx;
        if (std::abs(denom) > 1e-12) {
            f.slope = (n * sxy - sx * sy) / denom;
        }
        f.intercept = (sy - f.slope * sx) / n;
        f.sse = std::max(0.0, syy - f.intercept * sy - f.slope * sxy);
        f.mean_y = sy / n;
        f.ss_tot = syy - sy * sy / n;
        return f;
    }

private:
    std::vector<double> sx_, sy_, sxx_, sxy_, syy_;
};

RegimeSegmentation segment_sorted(const std::vector<double>& values,
                                  const RegimeThresholds& thresholds) {
    const std::size_t n = values.size();
    if (n < 100) {
        fail(ErrorCode::InsufficientPositiveMass,
             "only " + std::to_string(n) + " positive influence values, need at least 100");
    }
    const PiecewiseFitter fitter(values);
    constexpr std::size_t kMinSegment = 3;

    std::size_t best_c1 = kMinSegment;
    std::size_t best_c2 = 2 * kMinSegment;
    double best_sse = std::numeric_limits<double>::infinity();
    for (std::size_t c1 = kMinSegment; c1 + 2 * kMinSegment <= n; ++c1) {
        const SegmentFit left = fitter.fit(1, c1);
        for (std::size_t c2 = c1 + kMinSegment; c2 + kMinSegment <= n; ++c2) {
            const double sse =
                left.sse + fitter.fit(c1 + 1, c2).sse + fitter.fit(c2 + 1, n).sse;
            if (sse < best_sse - 1e-12) {
                best_sse = sse;
                best_c1 = c1;
                best_c2 = c2;
            }
        }
    }

    const SegmentFit left = fitter.fit(1, best_c1);
    const SegmentFit middle = fitter.fit(best_c1 + 1, best_c2);
    const SegmentFit right = fitter.fit(best_c2 + 1, n);

    RegimeSegmentation seg;
    seg.thresholds = thresholds;
    seg.ranked_values = values;
    seg.slope_left = left.slope;
    seg.slope_right = right.slope;

    const bool plateau_flat = std::abs(left.slope) < thresholds.plateau_slope_max;
    const bool plateau_high = left.mean_y >= std::log(thresholds.gap_min) + middle.intercept;
    seg.plateau_end_rank = plateau_flat && plateau_high ? static_cast<std::int64_t>(best_c1) : 0;

    const bool tail_steep = std::abs(right.slope) >= thresholds.tail_ratio * std::abs(middle.slope);
    seg.powerlaw_end_rank = tail_steep ? static_cast<std::int64_t>(best_c2)
                                       : static_cast<std::int64_t>(n);

    seg.kappa = -middle.slope;
    seg.beta = middle.intercept;
    if (middle.ss_tot > 1e-12) {
        seg.r_squared = 1.0 - middle.sse / middle.ss_tot;
        seg.r_squared_defined = true;
    }
    return seg;
}

}  // namespace

ClassDeltas aggregate_sweep(const Matrix& position_abs_delta,
                            const std::vector<std::uint32_t>& targets,
                            const TokenClassSplit& split) {
    if (position_abs_delta.rows() != static_cast<Eigen::Index>(targets.size())) {
        fail(ErrorCode::LengthMismatch, "influence matrix rows do not match target count");
    }
    const Eigen::Index m = position_abs_delta.cols();
    ClassDeltas out;
    out.rare = Vector::Zero(m);
    out.common = Vector::Zero(m);
    out.all = Vector::Zero(m);
    for (Eigen::Index r = 0; r < position_abs_delta.rows(); ++r) {
        const std::uint32_t target = targets[static_cast<std::size_t>(r)];
        if (target >= split.classes.size()) {
            fail(ErrorCode::OutOfRangeTokenId, "target token " + std::to_string(target));
        }
        out.all += position_abs_delta.row(r);
        switch (split.classes[target]) {
            case TokenClass::Rare:
                out.rare += position_abs_delta.row(r);
                ++out.rare_positions;
                break;
            case TokenClass::Common:
                out.common += position_abs_delta.row(r);
                ++out.common_positions;
                break;
            case TokenClass::Excluded:
                ++out.excluded_positions;
                break;
        }
    }
    if (out.rare_positions == 0) {
        fail(ErrorCode::EmptyTokenClass, "no evaluated position targets a rare token");
    }
    if (out.common_positions == 0) {
        fail(ErrorCode::EmptyTokenClass, "no evaluated position targets a common token");
    }
    out.rare /= static_cast<double>(out.rare_positions);
    out.common /= static_cast<double>(out.common_positions);
    out.all /= static_cast<double>(position_abs_delta.rows());
    return out;
}

AblationSweepResult ablation_sweep(const ModelBundle& bundle, const TokenStream& stream,
                                   const TokenClassSplit& split, int threads) {
    bundle.validate();
    stream.validate();
    const ArchDescriptor& arch = bundle.arch;
    if (split.classes.size() != static_cast<std::size_t>(arch.vocab_size)) {
        fail(ErrorCode::ShapeMismatch, "vocabulary split does not match the model vocabulary");
    }

    const auto windows = plan_windows(stream, arch.max_context);
    std::vector<std::size_t> row_offset(windows.size() + 1, 0);
    for (std::size_t w = 0; w < windows.size(); ++w) {
        const std::size_t len = windows[w].end - windows[w].begin;
        row_offset[w + 1] = row_offset[w] + (len > 1 ? len - 1 : 0);
    }
    const auto total_rows = static_cast<Eigen::Index>(row_offset.back());
    const int m = arch.d_mlp;
    const int d = arch.d_model;

    AblationSweepResult result;
    result.position_abs_delta.resize(total_rows, m);
    result.position_target.resize(static_cast<std::size_t>(total_rows));

    const Vector nbar = mean_activation(bundle, stream, threads);

    const Vector gain = bundle.vector_or("ln_f.weight", d, 1.0);
    const Vector bias = bundle.vector_or("ln_f.bias", d, 0.0);
    const Matrix wu = bundle.matrix("unembed.weight");
    const Matrix gut = wu.transpose() * gain.asDiagonal();  // vocab x d
    const Matrix w_out =
        bundle.matrix("layer" + std::to_string(arch.n_layers - 1) + ".mlp.w_out");
    const Matrix rt = gut * w_out;  // vocab x d_mlp, column i = neuron i's logit direction
    const Vector sv = gut.rowwise().sum();
    const Vector bu = wu.transpose() * bias;
    const Vector w_sum = w_out.colwise().sum();
    const Vector w_sumsq = w_out.colwise().squaredNorm();

    ForwardOptions options;
    options.capture_mlp = true;
    options.capture_residual = true;

    parallel_for(windows.size(), threads, [&](std::size_t w) {
        const std::size_t len = windows[w].end - windows[w].begin;
        if (len < 2) return;
        std::span<const std::uint32_t> toks(stream.ids.data() + windows[w].begin, len);
        const ForwardTrace trace = forward(bundle, toks, {}, options);
        const Matrix zt = gut * trace.residual.transpose();  // vocab x positions
        const Matrix xw = trace.residual * w_out;            // positions x d_mlp
        Vector row(arch.vocab_size);
        for (std::size_t t = 0; t + 1 < len; ++t) {
            const auto ti = static_cast<Eigen::Index>(t);
            const std::uint32_t target = toks[t + 1];
            const double sum_x = trace.residual.row(ti).sum();
            const double sumsq_x = trace.residual.row(ti).squaredNorm();
            const double mu = sum_x / d;
            const double var = sumsq_x / d - mu * mu;
            row.array() = (zt.col(ti).array() - mu * sv.array()) /
                              std::sqrt(var + kLayerNormEps) +
                          bu.array();
            const double base_loss = log_sum_exp(row) - row(target);
            const std::size_t out_row = row_offset[w] + t;
            result.position_target[out_row] = target;
            for (int i = 0; i < m; ++i) {
                const double c = nbar(i) - trace.mlp_acts(ti, i);
                const double mu2 = (sum_x + c * w_sum(i)) / d;
                const double var2 =
                    (sumsq_x + 2.0 * c * xw(ti, i) + c * c * w_sumsq(i)) / d - mu2 * mu2;
                row.array() = (zt.col(ti).array() + c * rt.col(i).array() - mu2 * sv.array()) /
                                  std::sqrt(var2 + kLayerNormEps) +
                              bu.array();
                const double loss = log_sum_exp(row) - row(target);
                result.position_abs_delta(static_cast<Eigen::Index>(out_row), i) =
                    std::abs(loss - base_loss);
            }
        }
    });

    ClassDeltas deltas = aggregate_sweep(result.position_abs_delta, result.position_target, split);
    result.delta_loss_rare = std::move(deltas.rare);
    result.delta_loss_common = std::move(deltas.common);
    result.delta_loss_all = std::move(deltas.all);
    result.rare_positions = deltas.rare_positions;
    result.common_positions = deltas.common_positions;
    result.excluded_positions = deltas.excluded_positions;

    result.ranking.resize(m);
    std::iota(result.ranking.begin(), result.ranking.end(), 0);
    std::stable_sort(result.ranking.begin(), result.ranking.end(), [&](int a, int b) {
        if (result.delta_loss_rare(a) != result.delta_loss_rare(b)) {
            return result.delta_loss_rare(a) > result.delta_loss_rare(b);
        }
        return a < b;
    });
    return result;
}

RegimeSegmentation segment_curve(const std::vector<double>& values,
                                 const RegimeThresholds& thresholds) {
    std::vector<double> positive;
    positive.reserve(values.size());
    for (double v : values) {
        if (v > 0.0) positive.push_back(v);
    }
    std::sort(positive.begin(), positive.end(), std::greater<double>());
    return segment_sorted(positive, thresholds);
}

RegimeSegmentation segment_regimes(const AblationSweepResult& sweep, TokenClass token_class,
                                   const RegimeThresholds& thresholds) {
    const Vector* deltas = nullptr;
    switch (token_class) {
        case TokenClass::Rare: deltas = &sweep.delta_loss_rare; break;
        case TokenClass::Common: deltas = &sweep.delta_loss_common; break;
        case TokenClass::Excluded:
            fail(ErrorCode::ConfigError, "segmentation runs on the rare or common class");
    }
    std::vector<std::pair<double, int>> ranked;
    for (Eigen::Index i = 0; i < deltas->size(); ++i) {
        if ((*deltas)(i) > 0.0) ranked.emplace_back((*deltas)(i), static_cast<int>(i));
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<double> values;
    values.reserve(ranked.size());
    for (const auto& [v, i] : ranked) values.push_back(v);

    RegimeSegmentation seg = segment_sorted(values, thresholds);
    seg.ranked_neurons.reserve(ranked.size());
    for (const auto& [v, i] : ranked) seg.ranked_neurons.push_back(i);
    seg.plateau_set.assign(seg.ranked_neurons.begin(),
                           seg.ranked_neurons.begin() + seg.plateau_end_rank);
    return seg;
}

RareActivations collect_rare_activations(const ModelBundle& bundle, const TokenStream& stream,
                                         const TokenClassSplit& split, int threads) {
    bundle.validate();
    stream.validate();
    if (split.classes.size() != static_cast<std::size_t>(bundle.arch.vocab_size)) {
        fail(ErrorCode::ShapeMismatch, "vocabulary split does not match the model vocabulary");
    }
    const auto windows = plan_windows(stream, bundle.arch.max_context);

    std::vector<std::size_t> offsets(windows.size() + 1, 0);
    for (std::size_t w = 0; w < windows.size(); ++w) {
        std::size_t count = 0;
        for (std::size_t t = windows[w].begin; t + 1 < windows[w].end; ++t) {
            if (split.classes.at(stream.ids[t + 1]) == TokenClass::Rare) ++count;
        }
        offsets[w + 1] = offsets[w] + count;
    }

    RareActivations out;
    out.acts.resize(bundle.arch.d_mlp, static_cast<Eigen::Index>(offsets.back()));
    out.positions.resize(offsets.back());

    ForwardOptions options;
    options.capture_mlp = true;
    parallel_for(windows.size(), threads, [&](std::size_t w) {
        if (offsets[w + 1] == offsets[w]) return;
        const std::size_t len = windows[w].end - windows[w].begin;
        std::span<const std::uint32_t> toks(stream.ids.data() + windows[w].begin, len);
        const ForwardTrace trace = forward(bundle, toks, {}, options);
        std::size_t cursor = offsets[w];
        for (std::size_t t = 0; t + 1 < len; ++t) {
            if (split.classes[toks[t + 1]] != TokenClass::Rare) continue;
            out.acts.col(static_cast<Eigen::Index>(cursor)) =
                trace.mlp_acts.row(static_cast<Eigen::Index>(t)).transpose();
            out.positions[cursor] = windows[w].begin + t;
            ++cursor;
        }
    });
    return out;
}

GeometryReport geometry_from_activations(const Matrix& acts, const std::vector<int>& group,
                                         int baselines, double tau, std::uint64_t seed) {
    check_group(group, static_cast<int>(acts.rows()), 10);
    if (acts.cols() < static_cast<Eigen::Index>(20 * group.size())) {
        fail(ErrorCode::GroupTooSmall,
             "only " + std::to_string(acts.cols()) + " rare-target positions for a group of " +
                 std::to_string(group.size()) + ", need 20 per neuron");
    }

    GeometryReport report;
    report.group_size = static_cast<int>(group.size());
    report.sample_positions = acts.cols();
    report.d_eff = effective_dimension(select_rows(acts, group), tau).d_eff;
    report.d_eff_ratio = static_cast<double>(report.d_eff) / static_cast<double>(group.size());

    std::vector<double> ratios;
    for (const auto& g :
         sample_baseline_groups(static_cast<int>(acts.rows()), group, baselines, seed)) {
        const int d_eff = effective_dimension(select_rows(acts, g), tau).d_eff;
        ratios.push_back(static_cast<double>(d_eff) / static_cast<double>(g.size()));
    }
    report.baseline = baseline_stats(report.d_eff_ratio, std::move(ratios));
    return report;
}

namespace {

WeightedGraph mutual_information_graph(const Matrix& acts, const std::vector<int>& rows,
                                       int bins) {
    const int n = static_cast<int>(rows.size());
    WeightedGraph graph;
    graph.weights = Matrix::Zero(n, n);
    std::vector<std::vector<double>> series(n);
    for (int i = 0; i < n; ++i) {
        series[i].assign(acts.row(rows[i]).begin(), acts.row(rows[i]).end());
    }
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const MiResult mi = mutual_information(series[i], series[j], bins);
            const double w = mi.degenerate ? 0.0 : mi.bits;
            graph.weights(i, j) = w;
            graph.weights(j, i) = w;
        }
    }
    return graph;
}

}  // namespace

GraphReport graph_from_activations(const Matrix& acts, const std::vector<int>& group,
                                   int baselines, int bins, int restarts, double resolution,
                                   std::uint64_t seed) {
    check_group(group, static_cast<int>(acts.rows()), 10);
    GraphReport report;
    report.group_size = static_cast<int>(group.size());
    report.sample_positions = acts.cols();

    const Partition part =
        louvain(mutual_information_graph(acts, group, bins), resolution, restarts, seed);
    report.q = part.q;
    report.communities = part.community_count();
    report.mean_community_size = part.mean_community_size();

    std::vector<double> qs;
    int r = 0;
    for (const auto& g :
         sample_baseline_groups(static_cast<int>(acts.rows()), group, baselines, seed + 1)) {
        const Partition p = louvain(mutual_information_graph(acts, g, bins), resolution, restarts,
                                    seed + 101 + static_cast<std::uint64_t>(r++));
        qs.push_back(p.q);
    }
    report.baseline = baseline_stats(report.q, std::move(qs));
    return report;
}

SpectralReport spectral_from_weights(const Matrix& weight_rows, const std::vector<int>& group,
                                     int baselines, std::uint64_t seed) {
    check_group(group, static_cast<int>(weight_rows.rows()), 20);
    SpectralReport report;
    report.group_size = static_cast<int>(group.size());

    auto tail_alpha = [&](const std::vector<int>& rows) {
        const Spectrum spec = correlation_spectrum(select_rows(weight_rows, rows));
        const FixFingerResult ff = fix_finger_k(spec);
        return hill_alpha(spec, ff.k);
    };

    const HillResult hill = tail_alpha(group);
    report.alpha = hill.alpha_hill;
    report.k = hill.k;
    report.lambda_k = hill.lambda_k;
    report.degenerate = hill.degenerate;

    std::vector<double> alphas;
    for (const auto& g :
         sample_baseline_groups(static_cast<int>(weight_rows.rows()), group, baselines, seed)) {
        const HillResult h = tail_alpha(g);
        if (!h.degenerate) alphas.push_back(h.alpha_hill);
    }
    report.baseline = baseline_stats(report.alpha, std::move(alphas));
    return report;
}

GeometryReport geometry_analysis(const ModelBundle& bundle, const TokenStream& stream,
                                 const TokenClassSplit& split, const std::vector<int>& group,
                                 int baselines, double tau, std::uint64_t seed, int threads) {
    const RareActivations rare = collect_rare_activations(bundle, stream, split, threads);
    return geometry_from_activations(rare.acts, group, baselines, tau, seed);
}

GraphReport graph_analysis(const ModelBundle& bundle, const TokenStream& stream,
                           const TokenClassSplit& split, const std::vector<int>& group,
                           int baselines, int bins, int restarts, double resolution,
                           std::uint64_t seed, int threads) {
    const RareActivations rare = collect_rare_activations(bundle, stream, split, threads);
    return graph_from_activations(rare.acts, group, baselines, bins, restarts, resolution, seed);
}

namespace {

struct AttentionWindowStats {
    // per analyzed head: gini values in position order, split by target class
    std::vector<std::vector<double>> gini_rare;
    std::vector<std::vector<double>> gini_common;
    std::vector<std::vector<double>> offset_sum_rare;
    std::vector<std::vector<double>> offset_cnt_rare;
    std::vector<std::vector<double>> offset_sum_common;
    std::vector<std::vector<double>> offset_cnt_common;
};

constexpr int kOffsetSpan = 128;

Matrix group_activations(const ModelBundle& bundle, const TokenStream& stream,
                         const std::vector<EvalWindow>& windows,
                         const std::vector<std::size_t>& offsets,
                         const std::vector<bool>& rare_target, const std::vector<int>& group,
                         const std::vector<Intervention>& interventions, int threads) {
    Matrix acts(static_cast<Eigen::Index>(group.size()),
                static_cast<Eigen::Index>(offsets.back()));
    ForwardOptions options;
    options.capture_mlp = true;
    parallel_for(windows.size(), threads, [&](std::size_t w) {
        if (offsets[w + 1] == offsets[w]) return;
        const std::size_t len = windows[w].end - windows[w].begin;
        std::span<const std::uint32_t> toks(stream.ids.data() + windows[w].begin, len);
        const ForwardTrace trace = forward(bundle, toks, interventions, options);
        std::size_t cursor = offsets[w];
        for (std::size_t t = 0; t + 1 < len; ++t) {
            if (!rare_target[windows[w].begin + t]) continue;
            for (std::size_t gi = 0; gi < group.size(); ++gi) {
                acts(static_cast<Eigen::Index>(gi), static_cast<Eigen::Index>(cursor)) =
                    trace.mlp_acts(static_cast<Eigen::Index>(t), group[gi]);
            }
            ++cursor;
        }
    });
    return acts;
}

}  // namespace

AttentionReport attention_analysis(const ModelBundle& bundle, const TokenStream& stream,
                                   const TokenClassSplit& split, const std::vector<int>& group,
                                   std::uint64_t seed, int threads) {
    bundle.validate();
    stream.validate();
    const ArchDescriptor& arch = bundle.arch;
    if (arch.n_layers < 2) {
        fail(ErrorCode::TooFewLayers, "attention routing needs at least two layers");
    }
    if (split.classes.size() != static_cast<std::size_t>(arch.vocab_size)) {
        fail(ErrorCode::ShapeMismatch, "vocabulary split does not match the model vocabulary");
    }
    check_group(group, arch.d_mlp, 1);
    const std::vector<int> layers = {arch.n_layers - 2, arch.n_layers - 1};
    const int heads_per_layer = arch.n_heads;
    const int n_heads = static_cast<int>(layers.size()) * heads_per_layer;

    const auto windows = plan_windows(stream, arch.max_context);

    // Head statistics pass: per-position attention concentration and the
    // distance profile of each head, split by target class.
    std::vector<AttentionWindowStats> per_window(windows.size());
    ForwardOptions options;
    options.capture_mlp = false;
    options.capture_attention = true;
    parallel_for(windows.size(), threads, [&](std::size_t w) {
        const std::size_t len = windows[w].end - windows[w].begin;
        if (len < 3) return;  // gini needs at least two keys, so queries start at t = 1
        std::span<const std::uint32_t> toks(stream.ids.data() + windows[w].begin, len);
        const ForwardTrace trace = forward(bundle, toks, {}, options);
        AttentionWindowStats& stats = per_window[w];
        stats.gini_rare.resize(n_heads);
        stats.gini_common.resize(n_heads);
        stats.offset_sum_rare.assign(n_heads, std::vector<double>(kOffsetSpan, 0.0));
        stats.offset_cnt_rare.assign(n_heads, std::vector<double>(kOffsetSpan, 0.0));
        stats.offset_sum_common.assign(n_heads, std::vector<double>(kOffsetSpan, 0.0));
        stats.offset_cnt_common.assign(n_heads, std::vector<double>(kOffsetSpan, 0.0));
        std::vector<double> weights;
        for (int li = 0; li < static_cast<int>(layers.size()); ++li) {
            for (int h = 0; h < heads_per_layer; ++h) {
                const Matrix& attn = trace.attn_weights.at({layers[li], h});
                const int head_index = li * heads_per_layer + h;
                for (std::size_t t = 1; t + 1 < len; ++t) {
                    const TokenClass cls = split.classes[toks[t + 1]];
                    if (cls == TokenClass::Excluded) continue;
                    const auto ti = static_cast<Eigen::Index>(t);
                    weights.assign(attn.row(ti).begin(), attn.row(ti).begin() + t + 1);
                    const double g = gini(weights);
                    auto& ginis =
                        cls == TokenClass::Rare ? stats.gini_rare : stats.gini_common;
                    auto& sums = cls == TokenClass::Rare ? stats.offset_sum_rare
                                                         : stats.offset_sum_common;
                    auto& counts = cls == TokenClass::Rare ? stats.offset_cnt_rare
                                                           : stats.offset_cnt_common;
                    ginis[head_index].push_back(g);
                    const int max_offset = std::min<int>(kOffsetSpan - 1, static_cast<int>(t));
                    for (int o = 0; o <= max_offset; ++o) {
                        sums[head_index][o] += attn(ti, ti - o);
                        counts[head_index][o] += 1.0;
                    }
                }
            }
        }
    });

    AttentionReport report;
    std::vector<double> spearman_values;
    for (int li = 0; li < static_cast<int>(layers.size()); ++li) {
        for (int h = 0; h < heads_per_layer; ++h) {
            const int head_index = li * heads_per_layer + h;
            std::vector<double> rare, common;
            std::vector<double> sum_r(kOffsetSpan, 0.0), cnt_r(kOffsetSpan, 0.0);
            std::vector<double> sum_c(kOffsetSpan, 0.0), cnt_c(kOffsetSpan, 0.0);
            for (const auto& stats : per_window) {
                if (stats.gini_rare.empty()) continue;
                rare.insert(rare.end(), stats.gini_rare[head_index].begin(),
                            stats.gini_rare[head_index].end());
                common.insert(common.end(), stats.gini_common[head_index].begin(),
                              stats.gini_common[head_index].end());
                for (int o = 0; o < kOffsetSpan; ++o) {
                    sum_r[o] += stats.offset_sum_rare[head_index][o];
                    cnt_r[o] += stats.offset_cnt_rare[head_index][o];
                    sum_c[o] += stats.offset_sum_common[head_index][o];
                    cnt_c[o] += stats.offset_cnt_common[head_index][o];
                }
            }
            if (rare.size() < 2 || common.size() < 2) {
                fail(ErrorCode::EmptyTokenClass,
                     "not enough classified query positions for attention statistics");
            }
            AttentionHeadReport head;
            head.layer = layers[li];
            head.head = h;
            head.gini_rare_mean = mean(rare);
            head.gini_rare_std = std::sqrt(variance(rare));
            head.gini_common_mean = mean(common);
            head.gini_common_std = std::sqrt(variance(common));
            const WelchResult welch = welch_t(rare, common);
            head.welch_t = welch.t;
            head.welch_p = welch.p;

            std::vector<double> profile_rare, profile_common;
            for (int o = 0; o < kOffsetSpan; ++o) {
                if (cnt_r[o] > 0.0 && cnt_c[o] > 0.0) {
                    profile_rare.push_back(sum_r[o] / cnt_r[o]);
                    profile_common.push_back(sum_c[o] / cnt_c[o]);
                }
            }
            if (profile_rare.size() >= 3) {
                if (const auto rho = spearman(profile_rare, profile_common)) {
                    head.spearman_r = *rho;
                    head.spearman_defined = true;
                    spearman_values.push_back(*rho);
                }
            }
            report.heads.push_back(head);
        }
    }
    if (!spearman_values.empty()) {
        report.spearman_mean = mean(spearman_values);
        report.spearman_std =
            spearman_values.size() > 1 ? std::sqrt(variance(spearman_values)) : 0.0;
    }

    // Impact pass: relative change of the group's rare-position activations
    // under head zeroing.
    std::vector<bool> rare_target(stream.size(), false);
    std::vector<std::size_t> offsets(windows.size() + 1, 0);
    std::int64_t rare_positions = 0, common_positions = 0;
    for (std::size_t w = 0; w < windows.size(); ++w) {
        std::size_t count = 0;
        for (std::size_t t = windows[w].begin; t + 1 < windows[w].end; ++t) {
            const TokenClass cls = split.classes.at(stream.ids[t + 1]);
            if (cls == TokenClass::Rare) {
                rare_target[t] = true;
                ++count;
                ++rare_positions;
            } else if (cls == TokenClass::Common) {
                ++common_positions;
            }
        }
        offsets[w + 1] = offsets[w] + count;
    }
    report.rare_positions = rare_positions;
    report.common_positions = common_positions;
    if (offsets.back() == 0) {
        fail(ErrorCode::EmptyTokenClass, "no rare-target positions for impact measurement");
    }

    const Matrix base =
        group_activations(bundle, stream, windows, offsets, rare_target, group, {}, threads);
    const double base_norm = base.norm();
    if (base_norm == 0.0) {
        fail(ErrorCode::ZeroVariance, "group activations vanish at rare-target positions");
    }

    std::vector<AttentionImpact> single(n_heads);
    for (int li = 0; li < static_cast<int>(layers.size()); ++li) {
        for (int h = 0; h < heads_per_layer; ++h) {
            const Matrix ablated =
                group_activations(bundle, stream, windows, offsets, rare_target, group,
                                  {Intervention::zero_head(layers[li], h)}, threads);
            AttentionImpact& imp = single[li * heads_per_layer + h];
            imp.kind = "head";
            imp.layer = layers[li];
            imp.head = h;
            imp.impact = (base - ablated).norm() / base_norm;
        }
    }
    for (std::size_t i = 0; i < single.size(); ++i) {
        report.heads[i].impact = single[i].impact;
    }

    const auto max_it = std::max_element(single.begin(), single.end(),
                                         [](const auto& a, const auto& b) {
                                             if (a.impact != b.impact) return a.impact < b.impact;
                                             return std::pair(b.layer, b.head) <
                                                    std::pair(a.layer, a.head);
                                         });
    AttentionImpact max_head = *max_it;
    max_head.kind = "max_head";
    report.impacts.push_back(max_head);

    NormalSampler sampler(seed);
    AttentionImpact random_head = single[sampler.next_u64() % single.size()];
    random_head.kind = "random_head";
    report.impacts.push_back(random_head);

    for (int layer : layers) {
        const Matrix ablated =
            group_activations(bundle, stream, windows, offsets, rare_target, group,
                              {Intervention::zero_all_heads(layer)}, threads);
        AttentionImpact imp;
        imp.kind = "all_heads";
        imp.layer = layer;
        imp.head = -1;
        imp.impact = (base - ablated).norm() / base_norm;
        report.impacts.push_back(imp);
    }
    return report;
}

SpectralReport spectral_analysis(const ModelBundle& bundle, const std::vector<int>& group,
                                 int baselines, bool use_w_out, std::uint64_t seed) {
    bundle.validate();
    const ArchDescriptor& arch = bundle.arch;
    const std::string name = "layer" + std::to_string(arch.n_layers - 1) +
                             (use_w_out ? ".mlp.w_out" : ".mlp.w_in");
    Matrix rows = bundle.matrix(name);
    if (use_w_out) rows.transposeInPlace();  // columns of w_out are per-neuron vectors
    SpectralReport report = spectral_from_weights(rows, group, baselines, seed);
    report.weight_source = use_w_out ? "w_out" : "w_in";
    return report;
}

void PipelineConfig::validate() const {
    if (!(percentile > 0.0 && percentile < 1.0)) {
        fail(ErrorCode::ConfigError, "percentile must lie in (0, 1)");
    }
    if (elbow_window < 1) fail(ErrorCode::ConfigError, "elbow window must be positive");
    if (!(tau > 0.0 && tau <= 1.0)) fail(ErrorCode::ConfigError, "tau must lie in (0, 1]");
    if (bins < 2) fail(ErrorCode::ConfigError, "bins must be at least 2");
    if (baselines < 10) fail(ErrorCode::ConfigError, "need at least 10 baseline groups");
    if (restarts < 1) fail(ErrorCode::ConfigError, "restarts must be positive");
    if (resolution <= 0.0) fail(ErrorCode::ConfigError, "resolution must be positive");
    if (regimes.plateau_slope_max <= 0.0 || regimes.gap_min < 1.0 || regimes.tail_ratio < 1.0) {
        fail(ErrorCode::ConfigError, "regime thresholds out of range");
    }
    if (threads < 0) fail(ErrorCode::ConfigError, "threads must be >= 0");
    if (eval_tokens < 0) fail(ErrorCode::ConfigError, "eval_tokens must be >= 0");
}

FullRunResult run_full_pipeline(const ModelBundle& bundle, const TokenStream& stream,
                                const PipelineConfig& config, const TokenStream* count_stream) {
    config.validate();
    bundle.validate();
    stream.validate();

    auto tag = [](const char* stage, const Error& e) -> void {
        fail(e.code(), std::string(stage) + ": " + e.detail());
    };

    FullRunResult out;
    out.config = config;

    const TokenStream eval = truncate_stream(stream, config.eval_tokens);
    out.evaluated_tokens = static_cast<std::int64_t>(eval.size());
    const TokenStream& counting = count_stream != nullptr ? *count_stream : stream;

    try {
        const auto freq = count_frequencies(counting);
        const auto curve = descending_log_frequencies(freq);
        const ElbowResult elbow = detect_elbow(curve, config.elbow_window);
        out.split = split_classes(freq, elbow, config.percentile);
    } catch (const Error& e) {
        tag("freq", e);
    }

    try {
        out.sweep = ablation_sweep(bundle, eval, out.split, config.threads);
    } catch (const Error& e) {
        tag("sweep", e);
    }

    try {
        out.regimes_rare = segment_regimes(out.sweep, TokenClass::Rare, config.regimes);
        out.regimes_common = segment_regimes(out.sweep, TokenClass::Common, config.regimes);
    } catch (const Error& e) {
        tag("regimes", e);
    }

    const std::vector<int>& group = out.regimes_rare.plateau_set;
    auto skip = [&](const char* analysis, const std::string& reason) {
        out.skipped.push_back(std::string(analysis) + ": " + reason);
        out.partial = true;
    };
    auto skippable = [](const Error& e) {
        return e.code() == ErrorCode::GroupTooSmall || e.code() == ErrorCode::TooFewLayers;
    };

    const bool any_group_analysis =
        config.run_geometry || config.run_graph || config.run_attention;
    std::optional<RareActivations> rare_acts;
    if (!group.empty() && any_group_analysis) {
        try {
            rare_acts = collect_rare_activations(bundle, eval, out.split, config.threads);
        } catch (const Error& e) {
            tag("activations", e);
        }
    }

    if (!config.run_geometry) {
        skip("geometry", "disabled");
    } else if (group.empty()) {
        skip("geometry", "no plateau detected");
    } else {
        try {
            out.geometry = geometry_from_activations(rare_acts->acts, group, config.baselines,
                                                     config.tau, config.seed + 1);
        } catch (const Error& e) {
            if (!skippable(e)) tag("geometry", e);
            skip("geometry", e.detail());
        }
    }

    if (!config.run_graph) {
        skip("graph", "disabled");
    } else if (group.empty()) {
        skip("graph", "no plateau detected");
    } else {
        try {
            out.graph = graph_from_activations(rare_acts->acts, group, config.baselines,
                                               config.bins, config.restarts, config.resolution,
                                               config.seed + 2);
        } catch (const Error& e) {
            if (!skippable(e)) tag("graph", e);
            skip("graph", e.detail());
        }
    }

    if (!config.run_attention) {
        skip("attention", "disabled");
    } else if (group.empty()) {
        skip("attention", "no plateau detected");
    } else {
        try {
            out.attention =
                attention_analysis(bundle, eval, out.split, group, config.seed + 3, config.threads);
        } catch (const Error& e) {
            if (!skippable(e)) tag("attention", e);
            skip("attention", e.detail());
        }
    }

    if (!config.run_spectral) {
        skip("spectral", "disabled");
    } else if (group.empty()) {
        skip("spectral", "no plateau detected");
    } else {
        try {
            out.spectral = spectral_analysis(bundle, group, config.baselines,
                                             config.spectral_use_w_out, config.seed + 4);
        } catch (const Error& e) {
            if (!skippable(e)) tag("spectral", e);
            skip("spectral", e.detail());
        }
    }

    return out;
}

}  // namespace raretok
