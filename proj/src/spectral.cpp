#include "raretok/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

namespace raretok {

std::size_t Spectrum::positive_count() const {
    std::size_t n = 0;
    for (double e : eigenvalues)
        if (e > 0.0) ++n;
    return n;
}

static std::vector<double> clamp_sort_desc(Vector eig) {
    std::vector<double> out(eig.data(), eig.data() + eig.size());
    for (double& e : out)
        if (e < 0.0) e = 0.0; // round-off negatives from PSD inputs
    std::sort(out.begin(), out.end(), std::greater<double>());
    return out;
}

Spectrum correlation_spectrum(const Matrix& w) {
    if (w.rows() == 0 || w.cols() == 0) fail(ErrorCode::SpectrumTooSmall, "empty matrix");
    Matrix gram = (w * w.transpose()) / static_cast<double>(w.cols());
    Eigen::SelfAdjointEigenSolver<Matrix> solver(gram, Eigen::EigenvaluesOnly);
    Spectrum spec;
    spec.eigenvalues = clamp_sort_desc(solver.eigenvalues());
    spec.source_rows = w.rows();
    spec.source_cols = w.cols();
    return spec;
}

Spectrum symmetric_spectrum(const Matrix& sym) {
    Eigen::SelfAdjointEigenSolver<Matrix> solver(sym, Eigen::EigenvaluesOnly);
    Spectrum spec;
    spec.eigenvalues = clamp_sort_desc(solver.eigenvalues());
    spec.source_rows = sym.rows();
    spec.source_cols = sym.cols();
    return spec;
}

int effective_dimension_from_eigenvalues(std::span<const double> eigenvalues, double tau) {
    double total = 0.0;
    for (double e : eigenvalues) total += std::max(0.0, e);
    if (total <= 0.0) fail(ErrorCode::ZeroVariance, "all eigenvalues zero");
    std::vector<double> sorted(eigenvalues.begin(), eigenvalues.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<double>());
    double acc = 0.0;
    for (std::size_t d = 0; d < sorted.size(); ++d) {
        acc += std::max(0.0, sorted[d]);
        if (acc / total >= tau) return static_cast<int>(d + 1);
    }
    return static_cast<int>(sorted.size());
}

EffectiveDimension effective_dimension(const Matrix& acts, double tau) {
    if (acts.rows() == 0 || acts.cols() < 2) fail(ErrorCode::ZeroVariance, "need >= 2 samples");
    if (!acts.allFinite()) fail(ErrorCode::NonFiniteValue, "activation matrix has non-finite entries");
    Matrix centered = acts.colwise() - acts.rowwise().mean();
    Matrix cov = (centered * centered.transpose()) / static_cast<double>(acts.cols() - 1);
    Eigen::SelfAdjointEigenSolver<Matrix> solver(cov, Eigen::EigenvaluesOnly);
    EffectiveDimension result;
    result.eigenvalues = clamp_sort_desc(solver.eigenvalues());
    result.d_eff = effective_dimension_from_eigenvalues(result.eigenvalues, tau);
    return result;
}

LogLogFit loglog_fit(std::span<const double> ranked_values, std::size_t lo, std::size_t hi) {
    if (lo < 1 || hi > ranked_values.size() || hi < lo)
        fail(ErrorCode::ConfigError, "loglog_fit range out of bounds");
    if (hi - lo + 1 < 2) fail(ErrorCode::ConfigError, "loglog_fit needs >= 2 points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    const double n = static_cast<double>(hi - lo + 1);
    for (std::size_t r = lo; r <= hi; ++r) {
        double v = ranked_values[r - 1];
        if (!(v > 0.0)) fail(ErrorCode::NonPositiveValue, "value at rank " + std::to_string(r));
        double x = std::log(static_cast<double>(r));
        double y = std::log(v);
        sx += x; sy += y; sxx += x * x; sxy += x * y; syy += y * y;
    }
    double denom = n * sxx - sx * sx;
    LogLogFit fit;
    if (denom == 0.0) fail(ErrorCode::ConfigError, "degenerate rank range");
    double slope = (n * sxy - sx * sy) / denom;
    double intercept = (sy - slope * sx) / n;
    fit.kappa = -slope;
    fit.beta = intercept;
    double ss_tot = syy - sy * sy / n;
    if (ss_tot <= 0.0) {
        fit.r_squared = 0.0;
        fit.r_squared_defined = false;
    } else {
        double ss_res = 0.0;
        for (std::size_t r = lo; r <= hi; ++r) {
            double x = std::log(static_cast<double>(r));
            double y = std::log(ranked_values[r - 1]);
            double e = y - (intercept + slope * x);
            ss_res += e * e;
        }
        fit.r_squared = 1.0 - ss_res / ss_tot;
        fit.r_squared_defined = true;
    }
    return fit;
}

FixFingerResult fix_finger_k(const Spectrum& spec) {
    std::vector<double> logs;
    logs.reserve(spec.eigenvalues.size());
    for (double e : spec.eigenvalues)
        if (e > 0.0) logs.push_back(std::log(e));
    const std::size_t n = logs.size();
    if (n < 20) fail(ErrorCode::SpectrumTooSmall, "fix-finger needs >= 20 positive eigenvalues");
    std::sort(logs.begin(), logs.end());

    auto clamp_k = [&](std::size_t k) {
        std::size_t hi = std::max<std::size_t>(5, n / 2);
        return std::min(std::max<std::size_t>(5, k), hi);
    };

    double q1 = logs[(n - 1) / 4];
    double q3 = logs[(3 * (n - 1)) / 4];
    double iqr = q3 - q1;
    double lo = logs.front(), hi = logs.back();
    FixFingerResult result;
    if (iqr <= 0.0 || hi <= lo) {
        // spectrum concentrated on one value, no usable density peak
        result.k = clamp_k(5);
        result.lambda_threshold = std::exp(hi);
        result.degenerate = true;
        return result;
    }
    double width = 2.0 * iqr * std::pow(static_cast<double>(n), -1.0 / 3.0);
    std::size_t nbins = static_cast<std::size_t>(std::ceil((hi - lo) / width));
    nbins = std::min<std::size_t>(std::max<std::size_t>(nbins, 1), 4096);
    std::vector<std::size_t> counts(nbins, 0);
    for (double v : logs) {
        auto b = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(nbins));
        counts[std::min(b, nbins - 1)]++;
    }
    std::size_t best = 0;
    for (std::size_t b = 1; b < nbins; ++b)
        if (counts[b] > counts[best]) best = b;
    double center = lo + (static_cast<double>(best) + 0.5) * (hi - lo) / static_cast<double>(nbins);
    double lambda_peak = std::exp(center);
    std::size_t k = 0;
    for (double e : spec.eigenvalues)
        if (e >= lambda_peak) ++k;
    result.k = clamp_k(k);
    result.lambda_threshold = lambda_peak;
    result.degenerate = false;
    return result;
}

HillResult hill_alpha(const Spectrum& spec, std::size_t k) {
    const auto& eig = spec.eigenvalues;
    if (k < 2) fail(ErrorCode::DegenerateTail, "hill_alpha needs k >= 2");
    if (k > eig.size()) fail(ErrorCode::SpectrumTooSmall, "k exceeds spectrum size");
    double lambda_k = eig[k - 1];
    if (!(lambda_k > 0.0)) fail(ErrorCode::DegenerateTail, "threshold eigenvalue must be positive");
    double acc = 0.0;
    for (std::size_t i = 0; i < k; ++i) acc += std::log(eig[i] / lambda_k);
    HillResult result;
    result.k = k;
    result.lambda_k = lambda_k;
    if (acc <= 0.0) {
        result.alpha_hill = std::numeric_limits<double>::infinity();
        result.degenerate = true;
        return result;
    }
    result.alpha_hill = static_cast<double>(k) / acc;
    result.degenerate = false;
    return result;
}

}  // namespace raretok
