#pragma once

#include <span>
#include <vector>

#include "raretok/common.hpp"

namespace raretok {

// Eigenvalues sorted descending; round-off negatives above -1e-10 clamp to 0.
struct Spectrum {
    std::vector<double> eigenvalues;
    std::int64_t source_rows = 0;
    std::int64_t source_cols = 0;

    std::size_t positive_count() const;
};

// Spectrum of the scaled Gram matrix (1/cols) * W * W^T.
Spectrum correlation_spectrum(const Matrix& w);
// Eigenvalues of an arbitrary symmetric PSD matrix, clamped and sorted.
Spectrum symmetric_spectrum(const Matrix& sym);

struct EffectiveDimension {
    int d_eff = 0;
    std::vector<double> eigenvalues; // covariance spectrum, descending
};

// Smallest d with cumulative variance ratio >= tau over the covariance of
// the row vectors (rows = units, cols = samples; rows centered over samples).
EffectiveDimension effective_dimension(const Matrix& acts, double tau = 0.95);
int effective_dimension_from_eigenvalues(std::span<const double> eigenvalues, double tau = 0.95);

struct LogLogFit {
    double kappa = 0.0; // decay exponent, positive for decreasing curves
    double beta = 0.0;  // intercept at rank 1
    double r_squared = 0.0;
    bool r_squared_defined = true;
};

// Least squares of log(value) against log(rank) over 1-based ranks [lo, hi].
LogLogFit loglog_fit(std::span<const double> ranked_values, std::size_t lo, std::size_t hi);

struct FixFingerResult {
    std::size_t k = 0;
    double lambda_threshold = 0.0; // density-peak eigenvalue
    bool degenerate = false;
};

// Tail size selection: histogram the log-eigenvalues with Freedman-Diaconis
// bins, take the modal bin's center as the threshold, count eigenvalues at
// or above it, clamp to [5, n/2].
FixFingerResult fix_finger_k(const Spectrum& spec);

struct HillResult {
    double alpha_hill = 0.0;
    std::size_t k = 0;
    double lambda_k = 0.0; // k-th largest eigenvalue
    bool degenerate = false; // all top-k equal; alpha reported as +inf
};

// Hill tail-index over the top-k eigenvalues (descending order).
HillResult hill_alpha(const Spectrum& spec, std::size_t k);

}  // namespace raretok
