#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "cfloop/data.hpp"

namespace cfloop {

// All distance functions expect normalized instances (see normalize()).
// Categorical features use the overlap metric: 0 if equal, 1 otherwise.

/// sum_i w_i |x_i - c_i| / sum_i w_i
[[nodiscard]] double proximity(const Instance& x, const Instance& cand, const FeatureWeights& weights,
                               const FeatureSchema& schema);
/// Number of features with |x_i - c_i| > epsilon.
[[nodiscard]] std::size_t changed_count(const Instance& x, const Instance& cand, double epsilon,
                                        const FeatureSchema& schema);
/// changed_count / d
[[nodiscard]] double sparsity(const Instance& x, const Instance& cand, double epsilon, const FeatureSchema& schema);

struct RunMetrics {
    double elapsed_ms = 0.0;
    std::size_t generations = 0;
    bool found = false;
    std::optional<double> proximity;  // present iff found
    std::optional<double> sparsity;
};

struct Summary {
    double mean = 0.0;
    double std = 0.0;  // sample, n-1 denominator; 0 when n = 1
};

/// Throws EmptyInput on an empty sample.
[[nodiscard]] Summary summarize(std::span<const double> values);

struct AggregateStats {
    std::size_t n = 0;
    double cf_rate = 0.0;  // percent of runs with found = true
    Summary elapsed_ms;
    Summary generations;
    // over found runs only; absent when none were found
    std::optional<Summary> proximity;
    std::optional<Summary> sparsity;
};

/// Throws EmptyInput on an empty list.
[[nodiscard]] AggregateStats aggregate(std::span<const RunMetrics> runs);

/// Regularized incomplete beta I_x(a, b) by continued fraction.
[[nodiscard]] double incomplete_beta(double a, double b, double x);
/// P(|T| >= |t|) for Student's t with `df` degrees of freedom (df may be fractional).
[[nodiscard]] double student_t_two_sided(double t, double df);

/// Two-sided Welch t-test p-value. Requires |a|, |b| >= 2 (InvalidArgument
/// otherwise). When both samples have zero variance the result is 1 for
/// equal means and 0 for different means.
[[nodiscard]] double welch_t_test(std::span<const double> a, std::span<const double> b);

}  // namespace cfloop
