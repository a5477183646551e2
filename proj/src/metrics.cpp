#include "cfloop/metrics.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "cfloop/error.hpp"

namespace cfloop {

namespace {

double distance(const FeatureSpec& spec, double a, double b) {
    if (spec.is_categorical()) return a == b ? 0.0 : 1.0;
    return std::abs(a - b);
}

void check_sizes(const Instance& x, const Instance& cand, const FeatureSchema& schema) {
    if (x.size() != schema.size() || cand.size() != schema.size())
        throw Error(ErrorCode::SchemaMismatch, fmt::format("expected {} features", schema.size()));
}

// Lentz's method for the continued fraction of I_x(a, b).
double beta_fraction(double a, double b, double x) {
    constexpr int kMaxIter = 500;
    constexpr double kEps = 1e-16;
    constexpr double kTiny = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace

double proximity(const Instance& x, const Instance& cand, const FeatureWeights& weights, const FeatureSchema& schema) {
    check_sizes(x, cand, schema);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < schema.size(); ++i) {
        num += weights[i] * distance(schema[i], x[i], cand[i]);
        den += weights[i];
    }
    if (!(den > 0.0)) throw Error(ErrorCode::InvalidArgument, "feature weights sum to zero");
    return num / den;
}

std::size_t changed_count(const Instance& x, const Instance& cand, double epsilon, const FeatureSchema& schema) {
    check_sizes(x, cand, schema);
    std::size_t n = 0;
    for (std::size_t i = 0; i < schema.size(); ++i)
        if (distance(schema[i], x[i], cand[i]) > epsilon) ++n;
    return n;
}

double sparsity(const Instance& x, const Instance& cand, double epsilon, const FeatureSchema& schema) {
    return static_cast<double>(changed_count(x, cand, epsilon, schema)) / static_cast<double>(schema.size());
}

Summary summarize(std::span<const double> values) {
    if (values.empty()) throw Error(ErrorCode::EmptyInput, "cannot summarize an empty sample");
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    if (values.size() == 1) return {mean, 0.0};
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / (n - 1.0))};
}

AggregateStats aggregate(std::span<const RunMetrics> runs) {
    if (runs.empty()) throw Error(ErrorCode::EmptyInput, "cannot aggregate zero runs");
    AggregateStats out;
    out.n = runs.size();
    std::vector<double> elapsed, gens, prox, spars;
    std::size_t found = 0;
    for (const auto& r : runs) {
        elapsed.push_back(r.elapsed_ms);
        gens.push_back(static_cast<double>(r.generations));
        if (!r.found) continue;
        ++found;
        if (r.proximity) prox.push_back(*r.proximity);
        if (r.sparsity) spars.push_back(*r.sparsity);
    }
    out.cf_rate = 100.0 * static_cast<double>(found) / static_cast<double>(runs.size());
    out.elapsed_ms = summarize(elapsed);
    out.generations = summarize(gens);
    if (!prox.empty()) out.proximity = summarize(prox);
    if (!spars.empty()) out.sparsity = summarize(spars);
    return out;
}

double incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw Error(ErrorCode::InvalidArgument, "incomplete beta needs a, b > 0");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double front =
        std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x));
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_fraction(a, b, x) / a;
    return 1.0 - front * beta_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided(double t, double df) {
    if (!(df > 0.0)) throw Error(ErrorCode::InvalidArgument, "degrees of freedom must be positive");
    if (std::isinf(t)) return 0.0;
    return incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
}

double welch_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2)
        throw Error(ErrorCode::InvalidArgument, "Welch t-test needs at least two observations per sample");
    const auto sa = summarize(a), sb = summarize(b);
    const double va = sa.std * sa.std / static_cast<double>(a.size());
    const double vb = sb.std * sb.std / static_cast<double>(b.size());
    const double se2 = va + vb;
    if (se2 == 0.0) return sa.mean == sb.mean ? 1.0 : 0.0;
    const double t = (sa.mean - sb.mean) / std::sqrt(se2);
    const double df = se2 * se2 / (va * va / static_cast<double>(a.size() - 1) +
                                   vb * vb / static_cast<double>(b.size() - 1));
    return student_t_two_sided(t, df);
}

}  // namespace cfloop
