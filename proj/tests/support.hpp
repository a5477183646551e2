#pragma once

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "cfloop/constraints.hpp"
#include "cfloop/data.hpp"
#include "cfloop/model.hpp"
#include "cfloop/rng.hpp"
#include "cfloop/session.hpp"

namespace testing {

using namespace cfloop;

inline FeatureSchema numeric_schema(std::size_t d, double lo = 0.0, double hi = 1.0) {
    std::vector<FeatureSpec> specs;
    for (std::size_t i = 0; i < d; ++i) specs.push_back({"x" + std::to_string(i), FeatureKind::Numeric, lo, hi, {}});
    return FeatureSchema(std::move(specs), "y", "numeric");
}

// 3 numeric features with different ranges + 2 categorical ones
inline FeatureSchema mixed_schema() {
    return FeatureSchema({{"income", FeatureKind::Numeric, 0.0, 100.0, {}},
                          {"color", FeatureKind::Categorical, 0, 0, {"red", "green", "blue"}},
                          {"age", FeatureKind::Numeric, 18.0, 90.0, {}},
                          {"owner", FeatureKind::Categorical, 0, 0, {"no", "yes"}},
                          {"score", FeatureKind::Numeric, -5.0, 5.0, {}}},
                         "y", "mixed");
}

inline Instance random_instance(const FeatureSchema& schema, Rng& rng) {
    Instance x{std::vector<double>(schema.size())};
    for (std::size_t i = 0; i < schema.size(); ++i) {
        const auto& f = schema[i];
        if (f.is_numeric())
            x[i] = std::uniform_real_distribution<double>(f.lo, f.hi)(rng);
        else
            x[i] = static_cast<double>(std::uniform_int_distribution<std::size_t>(0, f.categories.size() - 1)(rng));
    }
    return x;
}

inline Constraint random_constraint(const FeatureSpec& f, Rng& rng) {
    if (f.is_categorical()) return Immutable{};
    switch (std::uniform_int_distribution<int>(0, 2)(rng)) {
        case 0: return Immutable{};
        case 1: {
            double a = std::uniform_real_distribution<double>(f.lo, f.hi)(rng);
            double b = std::uniform_real_distribution<double>(f.lo, f.hi)(rng);
            if (a > b) std::swap(a, b);
            return Range{a, b};
        }
        default:
            return Direction{std::uniform_int_distribution<int>(0, 1)(rng) ? Sense::IncreaseOnly : Sense::DecreaseOnly};
    }
}

/// Each feature constrained with probability p.
inline ConstraintSet random_constraints(const FeatureSchema& schema, Rng& rng, double p = 0.5) {
    ConstraintSet c;
    for (std::size_t i = 0; i < schema.size(); ++i)
        if (std::bernoulli_distribution(p)(rng))
            c = apply_update(c, ConstraintUpdate::add(i, random_constraint(schema[i], rng)), schema);
    return c;
}

/// Rows drawn uniformly, labelled by the model itself.
inline Dataset labelled_by(const FeatureSchema& schema, const Classifier& model, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    Dataset ds;
    ds.schema = schema;
    for (std::size_t r = 0; r < n; ++r) {
        auto x = random_instance(schema, rng);
        ds.labels.push_back(model.predict(x));
        ds.rows.push_back(std::move(x));
    }
    return ds;
}

/// d numeric features on [0,1]; positive iff x0 >= threshold.
struct ThresholdSetup {
    FeatureSchema schema;
    std::shared_ptr<const ThresholdModel> model;
    std::shared_ptr<const ExplainContext> context;
};

inline ThresholdSetup threshold_setup(std::size_t d = 1, double threshold = 0.5, std::size_t n = 400,
                                      std::uint64_t seed = 3) {
    ThresholdSetup s;
    s.schema = numeric_schema(d);
    s.model = std::make_shared<const ThresholdModel>(d, 0, threshold);
    s.context = std::make_shared<const ExplainContext>(labelled_by(s.schema, *s.model, n, seed), s.model);
    return s;
}

}  // namespace testing
