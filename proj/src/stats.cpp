#include "raretok/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace raretok {

double mean(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double variance(std::span<const double> v) {
    if (v.size() < 2) return 0.0;
    double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

double pearson(std::span<const double> x, std::span<const double> y) {
    double mx = mean(x), my = mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    return sxy / std::sqrt(sxx * syy);
}

double gini(std::span<const double> weights, bool bias_corrected) {
    if (weights.empty()) fail(ErrorCode::AllZeroWeights, "empty weight vector");
    double total = 0.0;
    for (double w : weights) {
        if (w < 0.0 || !std::isfinite(w)) fail(ErrorCode::NonPositiveValue, "weights must be finite and >= 0");
        total += w;
    }
    if (total <= 0.0) fail(ErrorCode::AllZeroWeights, "weights sum to zero");
    std::vector<double> sorted(weights.begin(), weights.end());
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        double rank = static_cast<double>(i + 1); // ascending, 1-based
        acc += (n + 1.0 - rank) / n * (sorted[i] / total);
    }
    double g = 1.0 - 2.0 * acc;
    if (bias_corrected) g += 1.0 / n;
    return g;
}

std::vector<double> midranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        double shared = 0.5 * static_cast<double>(i + j) + 1.0; // average of 1-based ranks i+1..j+1
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
        i = j + 1;
    }
    return ranks;
}

std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) fail(ErrorCode::LengthMismatch, "spearman inputs");
    if (x.size() < 3) fail(ErrorCode::DegenerateSample, "spearman needs >= 3 points");
    auto rx = midranks(x);
    auto ry = midranks(y);
    if (variance(rx) == 0.0 || variance(ry) == 0.0) return std::nullopt;
    return pearson(rx, ry);
}

// Lentz's algorithm for the continued fraction of the incomplete beta.
static double betacf(double a, double b, double x) {
    const int max_iter = 300;
    const double eps = 3e-16;
    const double fpmin = 1e-300;
    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < fpmin) d = fpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) break;
    }
    return h;
}

double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                      a * std::log(x) + b * std::log1p(-x);
    double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * betacf(a, b, x) / a;
    }
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double df) {
    if (!std::isfinite(t)) return 0.0;
    if (df <= 0.0) fail(ErrorCode::DegenerateSample, "degrees of freedom must be positive");
    double x = df / (df + t * t);
    return incomplete_beta(0.5 * df, 0.5, x);
}

WelchResult welch_t(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2) fail(ErrorCode::DegenerateSample, "welch_t needs >= 2 per sample");
    double va = variance(a), vb = variance(b);
    if (va == 0.0 && vb == 0.0) {
        if (mean(a) == mean(b)) return {0.0, static_cast<double>(a.size() + b.size() - 2), 1.0};
        fail(ErrorCode::DegenerateSample, "both samples constant with different means");
    }
    double na = static_cast<double>(a.size());
    double nb = static_cast<double>(b.size());
    double se2 = va / na + vb / nb;
    double t = (mean(a) - mean(b)) / std::sqrt(se2);
    double df = se2 * se2 /
                ((va / na) * (va / na) / (na - 1.0) + (vb / nb) * (vb / nb) / (nb - 1.0));
    return {t, df, student_t_two_sided_p(t, df)};
}

WelchResult one_sample_t(double value, std::span<const double> sample) {
    if (sample.size() < 2) fail(ErrorCode::DegenerateSample, "baseline sample too small");
    double v = variance(sample);
    if (v == 0.0) {
        if (value == mean(sample)) return {0.0, static_cast<double>(sample.size() - 1), 1.0};
        fail(ErrorCode::DegenerateSample, "constant baseline sample");
    }
    double n = static_cast<double>(sample.size());
    double t = (value - mean(sample)) / std::sqrt(v / n);
    double df = n - 1.0;
    return {t, df, student_t_two_sided_p(t, df)};
}

// Equal-frequency bin index per sample: sort once, walk ranks. Ties are
// split across bins in index order, which keeps the assignment a pure
// function of the value vector.
static std::vector<int> quantile_bins(std::span<const double> v, int bins) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<int> bin(n);
    for (std::size_t r = 0; r < n; ++r) {
        int b = static_cast<int>((r * static_cast<std::size_t>(bins)) / n);
        bin[order[r]] = std::min(b, bins - 1);
    }
    return bin;
}

MiResult mutual_information(std::span<const double> x, std::span<const double> y, int bins) {
    if (x.size() != y.size()) fail(ErrorCode::LengthMismatch, "mutual_information inputs");
    if (bins < 2) fail(ErrorCode::ConfigError, "bins must be >= 2");
    const std::size_t n = x.size();
    if (n < static_cast<std::size_t>(10 * bins))
        fail(ErrorCode::DegenerateSample, "need >= 10*bins samples");
    auto is_constant = [](std::span<const double> v) {
        for (double e : v)
            if (e != v[0]) return false;
        return true;
    };
    if (is_constant(x) || is_constant(y)) return {0.0, true};

    auto bx = quantile_bins(x, bins);
    auto by = quantile_bins(y, bins);
    std::vector<double> joint(static_cast<std::size_t>(bins) * bins, 0.0);
    std::vector<double> px(bins, 0.0), py(bins, 0.0);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        joint[static_cast<std::size_t>(bx[i]) * bins + by[i]] += inv_n;
        px[bx[i]] += inv_n;
        py[by[i]] += inv_n;
    }
    // Terms are added as transpose pairs so MI(x, y) and MI(y, x) accumulate
    // in the same order and agree bit for bit.
    auto term = [&](int i, int j) {
        double p = joint[static_cast<std::size_t>(i) * bins + j];
        return p > 0.0 ? p * std::log2(p / (px[i] * py[j])) : 0.0;
    };
    double mi = 0.0;
    for (int i = 0; i < bins; ++i) {
        mi += term(i, i);
        for (int j = i + 1; j < bins; ++j) mi += term(i, j) + term(j, i);
    }
    return {std::max(0.0, mi), false};
}

}  // namespace raretok
