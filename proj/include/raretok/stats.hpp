#pragma once

#include <optional>
#include <span>
#include <vector>

#include "raretok/common.hpp"

namespace raretok {

// Attention concentration: the sorted-ascending weighted-sum form
//   1 - 2 * sum_i ((n+1-i)/n) * w_sorted[i]
// over weights normalized to sum 1. Uniform weights give -1/n; the
// corrected variant shifts by +1/n so uniform maps to 0.
double gini(std::span<const double> weights, bool bias_corrected = false);

// Rank correlation with mid-rank (average) tie handling. Returns nullopt
// when either input is constant.
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);

std::vector<double> midranks(std::span<const double> values);

struct WelchResult {
    double t = 0.0;
    double df = 0.0;
    double p = 1.0; // two-sided
};

// Welch's unequal-variance t statistic with Satterthwaite degrees of freedom.
WelchResult welch_t(std::span<const double> a, std::span<const double> b);

// One-sample t of `value` against the mean of `sample`; used for
// group-vs-baseline significance where the group statistic is a single number.
WelchResult one_sample_t(double value, std::span<const double> sample);

struct MiResult {
    double bits = 0.0;
    bool degenerate = false; // constant input, binning undefined
};

// Plug-in mutual information over a B x B equal-frequency joint histogram.
MiResult mutual_information(std::span<const double> x, std::span<const double> y, int bins = 16);

// Regularized incomplete beta I_x(a, b) via the Lentz continued fraction.
double incomplete_beta(double a, double b, double x);
// Two-sided p-value of a Student-t statistic.
double student_t_two_sided_p(double t, double df);

double mean(std::span<const double> v);
double variance(std::span<const double> v); // sample variance (n-1)
double pearson(std::span<const double> x, std::span<const double> y);

}  // namespace raretok
