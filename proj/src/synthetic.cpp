#include "cfloop/synthetic.hpp"

#include <algorithm>
#include <limits>
#include <random>

#include <fmt/format.h>

#include "cfloop/error.hpp"
#include "cfloop/rng.hpp"

namespace cfloop {

namespace {

FeatureSchema numeric_schema(std::size_t d, const std::vector<Instance>& rows, std::string name) {
    std::vector<FeatureSpec> specs;
    for (std::size_t i = 0; i < d; ++i) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (const auto& r : rows) {
            lo = std::min(lo, r[i]);
            hi = std::max(hi, r[i]);
        }
        specs.push_back({fmt::format("f{}", i), FeatureKind::Numeric, lo, hi, {}});
    }
    return FeatureSchema(std::move(specs), "label", std::move(name));
}

}  // namespace

Dataset make_blobs(std::size_t n, std::size_t d, std::uint64_t seed, double delta) {
    if (n < 2 || d < 1) throw Error(ErrorCode::InvalidArgument, "blobs need n >= 2 and d >= 1");
    Rng rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Dataset ds;
    for (std::size_t r = 0; r < n; ++r) {
        const int label = r < n / 2 ? 0 : 1;
        const double centre = label == 0 ? -delta : delta;
        Instance x{std::vector<double>(d)};
        for (std::size_t i = 0; i < d; ++i) x[i] = centre + gauss(rng);
        ds.rows.push_back(std::move(x));
        ds.labels.push_back(label);
    }
    ds.schema = numeric_schema(d, ds.rows, "blobs");
    return ds;
}

Dataset make_xor(std::size_t n, std::uint64_t seed) {
    if (n < 2) throw Error(ErrorCode::InvalidArgument, "xor data needs n >= 2");
    Rng rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Dataset ds;
    for (std::size_t r = 0; r < n; ++r) {
        Instance x{u(rng), u(rng)};
        ds.labels.push_back((x[0] > 0.0) != (x[1] > 0.0) ? 1 : 0);
        ds.rows.push_back(std::move(x));
    }
    ds.schema = numeric_schema(2, ds.rows, "xor");
    return ds;
}

}  // namespace cfloop
