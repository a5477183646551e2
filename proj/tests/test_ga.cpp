#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include <boost/math/distributions/chi_squared.hpp>

#include "cfloop/error.hpp"
#include "cfloop/ga.hpp"
#include "cfloop/metrics.hpp"
#include "support.hpp"

using namespace cfloop;

namespace {

// straight transcription of the objective, no shared helpers
double objective_oracle(const Instance& xn, const Instance& cn, const std::vector<double>& w,
                        const FeatureSchema& schema, bool flip, const GaParams& p) {
    double num = 0.0, den = 0.0, count = 0.0;
    for (std::size_t i = 0; i < xn.size(); ++i) {
        const double diff = schema[i].is_numeric() ? std::abs(xn[i] - cn[i]) : (xn[i] == cn[i] ? 0.0 : 1.0);
        num += w[i] * diff;
        den += w[i];
        count += diff > p.epsilon ? 1.0 : 0.0;
    }
    return -p.lambda1 * (num / den) - p.lambda2 * count + p.lambda3 * (flip ? p.alpha : -p.beta);
}

double chi_square_p(const std::vector<double>& observed, const std::vector<double>& expected) {
    double stat = 0.0;
    for (std::size_t i = 0; i < observed.size(); ++i)
        stat += (observed[i] - expected[i]) * (observed[i] - expected[i]) / expected[i];
    boost::math::chi_squared dist(static_cast<double>(observed.size() - 1));
    return boost::math::cdf(boost::math::complement(dist, stat));
}

FeatureWeights unit_weights(std::size_t d) { return FeatureWeights{std::vector<double>(d, 1.0)}; }

}  // namespace

TEST_CASE("GaParams validation and JSON") {
    GaParams p;
    CHECK_NOTHROW(p.validate());
    auto bad = p;
    bad.population_size = 1;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = p;
    bad.crossover_rate = 1.5;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = p;
    bad.epsilon = 0.0;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = p;
    bad.alpha = 0.0;
    CHECK_THROWS_AS(bad.validate(), Error);

    p.population_size = 12;
    p.selection = SelectionMethod::Tournament;
    p.tournament_k = 3;
    const auto back = params_from_json(params_to_json(p));
    CHECK(params_to_json(back) == params_to_json(p));
    CHECK(params_from_json(nlohmann::json::parse(R"({"lambda1": 0.5})")).lambda1 == 0.5);
    CHECK_THROWS_AS((void)params_from_json(nlohmann::json::parse(R"({"lambda9": 0.5})")), Error);
}

TEST_CASE("l_pred") {
    ThresholdModel m(1, 0, 0.5);
    GaParams p;
    CHECK(l_pred(m, Instance{0.3}, Instance{0.3}, p) == -1.0);
    CHECK(l_pred(m, Instance{0.3}, Instance{0.7}, p) == 1.0);
    p.alpha = 2.0;
    p.beta = 0.5;
    CHECK(l_pred(m, Instance{0.3}, Instance{0.4}, p) == -0.5);
    CHECK(l_pred(m, Instance{0.3}, Instance{0.9}, p) == 2.0);
}

TEST_CASE("fitness examples") {
    const auto schema = testing::numeric_schema(2);
    const auto w = unit_weights(2);
    const GaParams p;
    ThresholdModel flips(2, 0, 0.5);
    ThresholdModel never(2, 0, 2.0);
    const Instance x{0.0, 0.0};
    CHECK(fitness(x, x, w, schema, flips, p) == doctest::Approx(-1.0));
    CHECK(fitness(x, Instance{1.0, 0.0}, w, schema, flips, p) == doctest::Approx(0.7));
    CHECK(fitness(x, Instance{1.0, 0.0}, w, schema, never, p) == doctest::Approx(-1.3));
}

TEST_CASE("fitness matches the oracle and decomposes into metric terms") {
    const auto schema = testing::mixed_schema();
    ThresholdModel model(schema.size(), 0, 50.0);
    Rng rng(99);
    GaParams p;
    std::size_t flips = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        p.lambda1 = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        p.lambda2 = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        std::vector<double> wv(schema.size());
        for (auto& v : wv) v = std::uniform_real_distribution<double>(0.01, 5.0)(rng);
        const FeatureWeights w{wv};
        const auto x = testing::random_instance(schema, rng);
        auto cand = testing::random_instance(schema, rng);
        if (trial % 4 == 0) cand[3] = x[3];  // exercise the categorical overlap == 0 path
        const bool flip = model.predict(cand) != model.predict(x);
        flips += flip;

        const double got = fitness(x, cand, w, schema, model, p);
        const auto xn = normalize(x, schema), cn = normalize(cand, schema);
        CHECK(std::abs(got - objective_oracle(xn, cn, wv, schema, flip, p)) < 1e-9);

        const double decomposed = -p.lambda1 * proximity(xn, cn, w, schema) -
                                  p.lambda2 * static_cast<double>(changed_count(xn, cn, p.epsilon, schema)) +
                                  p.lambda3 * l_pred(model, x, cand, p);
        CHECK(std::abs(got - decomposed) < 1e-9);

        SearchProblem problem(schema, model, w, x);
        const auto c = problem.evaluate(cand, p);
        CHECK(c.fitness == got);
        CHECK(c.flips == flip);
    }
    CHECK(flips > 100);
    CHECK(flips < 900);
}

TEST_CASE("with lambda2 = 0 a closer flipping candidate never scores lower") {
    const auto schema = testing::mixed_schema();
    ThresholdModel model(schema.size(), 0, 50.0);
    Rng rng(5);
    GaParams p;
    p.lambda2 = 0.0;
    const FeatureWeights w{{2.0, 1.0, 0.5, 1.0, 3.0}};
    for (int trial = 0; trial < 1000; ++trial) {
        auto x = testing::random_instance(schema, rng);
        x[0] = std::uniform_real_distribution<double>(0.0, 49.0)(rng);
        auto a = testing::random_instance(schema, rng), b = testing::random_instance(schema, rng);
        a[0] = std::uniform_real_distribution<double>(50.0, 100.0)(rng);
        b[0] = std::uniform_real_distribution<double>(50.0, 100.0)(rng);
        const auto xn = normalize(x, schema);
        const double da = proximity(xn, normalize(a, schema), w, schema);
        const double db = proximity(xn, normalize(b, schema), w, schema);
        const double fa = fitness(x, a, w, schema, model, p), fb = fitness(x, b, w, schema, model, p);
        if (da < db) CHECK(fa >= fb);
        if (db < da) CHECK(fb >= fa);
    }
}

TEST_CASE("SUS: equal fitness selects every member exactly once") {
    Rng rng(1);
    for (std::size_t m : {1u, 2u, 7u, 50u}) {
        const std::vector<double> f(m, -0.3);
        for (int rep = 0; rep < 50; ++rep) {
            auto sel = sus_select(f, m, rng);
            std::sort(sel.begin(), sel.end());
            std::vector<std::size_t> all(m);
            std::iota(all.begin(), all.end(), std::size_t{0});
            CHECK(sel == all);
        }
    }
}

TEST_CASE("SUS: fitness is shifted by the minimum before shares are taken") {
    // min 0.2 is subtracted, leaving (0.3, 0.1, 1e-9): shares 0.75 / 0.25 / ~0
    const std::vector<double> f{0.5, 0.3, 0.2, 0.0};
    Rng rng(2024);
    std::vector<double> counts(3, 0.0);
    const int trials = 10000;
    for (int t = 0; t < trials; ++t) {
        const auto sel = sus_select(std::span(f).first(3), 10, rng);
        REQUIRE(sel.size() == 10);
        for (auto i : sel) counts[i] += 1;
    }
    const std::vector<double> expected{trials * 10 * 0.75, trials * 10 * 0.25, 0.0};
    CHECK(counts[0] == doctest::Approx(expected[0]).epsilon(0.01));
    CHECK(counts[1] == doctest::Approx(expected[1]).epsilon(0.01));
    CHECK(counts[2] == 0.0);
}

TEST_CASE("SUS: chi-square on shares 0.5/0.3/0.2") {
    // fitness 0.5, 0.3, 0.2 plus a zero-fitness member so the shift keeps the
    // shares of the first three at 0.5/0.3/0.2 of their total
    const std::vector<double> f{0.5, 0.3, 0.2, 0.0};
    Rng rng(7);
    std::vector<double> per_member(4, 0.0);
    const int trials = 10000;
    for (int t = 0; t < trials; ++t)
        for (auto i : sus_select(f, 10, rng)) per_member[i] += 1;
    CHECK(per_member[3] == 0.0);  // share 1e-9 of 1.0
    const std::vector<double> obs(per_member.begin(), per_member.begin() + 3);
    const std::vector<double> exp{5.0 * trials, 3.0 * trials, 2.0 * trials};
    CHECK(chi_square_p(obs, exp) > 0.01);
}

TEST_CASE("SUS: n = 1 picks proportionally to the share") {
    const std::vector<double> f{0.5, 0.3, 0.2, 0.0};
    Rng rng(8);
    std::vector<double> counts(4, 0.0);
    const int trials = 20000;
    for (int t = 0; t < trials; ++t) counts[sus_select(f, 1, rng).at(0)] += 1;
    CHECK(counts[3] == 0.0);
    CHECK(chi_square_p({counts[0], counts[1], counts[2]}, {0.5 * trials, 0.3 * trials, 0.2 * trials}) > 0.01);
}

TEST_CASE("tournament selection") {
    Rng rng(3);
    const std::vector<double> f{0.1, 0.9, 0.4, 0.9, -2.0, 0.3};
    const std::size_t m = f.size();

    SUBCASE("k = population size always returns the best, lowest index on ties") {
        for (auto i : tournament_select(f, 500, m, rng)) CHECK(i == 1);
    }
    SUBCASE("k = 1 is uniform") {
        std::vector<double> counts(m, 0.0);
        const int n = 60000;
        for (auto i : tournament_select(f, n, 1, rng)) counts[i] += 1;
        CHECK(chi_square_p(counts, std::vector<double>(m, static_cast<double>(n) / m)) > 0.01);
    }
    SUBCASE("k = 2 matches enumeration over all pairs") {
        std::vector<double> prob(m, 0.0);
        double pairs = 0.0;
        for (std::size_t a = 0; a < m; ++a)
            for (std::size_t b = a + 1; b < m; ++b) {
                const std::size_t w = f[b] > f[a] ? b : a;  // a < b, so ties go to a
                prob[w] += 1.0;
                pairs += 1.0;
            }
        const int n = 60000;
        std::vector<double> counts(m, 0.0);
        for (auto i : tournament_select(f, n, 2, rng)) counts[i] += 1;
        std::vector<double> obs, exp;
        for (std::size_t i = 0; i < m; ++i) {
            if (prob[i] == 0.0) {
                CHECK(counts[i] == 0.0);
                continue;
            }
            obs.push_back(counts[i]);
            exp.push_back(prob[i] / pairs * n);
        }
        CHECK(chi_square_p(obs, exp) > 0.01);
    }
    CHECK_THROWS_AS((void)tournament_select(f, 1, m + 1, rng), Error);
}

TEST_CASE("crossover") {
    Rng rng(4);
    const Instance a{1.0, 2.0, 3.0}, b{-1.0, -2.0, -3.0};
    for (int t = 0; t < 100; ++t) {
        auto [c1, c2] = crossover(a, b, 0.0, rng);
        CHECK(c1 == a);
        CHECK(c2 == b);
        auto [s1, s2] = crossover(a, a, 1.0, rng);
        CHECK(s1 == a);
        CHECK(s2 == a);
    }
    // every child value comes from one parent and the pair is complementary;
    // all 8 swap masks on d = 3 show up
    std::set<std::vector<bool>> masks;
    for (int t = 0; t < 2000; ++t) {
        auto [c1, c2] = crossover(a, b, 1.0, rng);
        std::vector<bool> mask;
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK((c1[i] == a[i] || c1[i] == b[i]));
            CHECK((c2[i] == (c1[i] == a[i] ? b[i] : a[i])));
            mask.push_back(c1[i] == b[i]);
        }
        masks.insert(mask);
    }
    CHECK(masks.size() == 8);
}

TEST_CASE("mutation") {
    Rng rng(6);
    GaParams p;
    SUBCASE("rate 0 leaves the candidate unchanged") {
        p.mutation_rate = 0.0;
        const auto schema = testing::mixed_schema();
        for (int t = 0; t < 100; ++t) {
            const auto c = testing::random_instance(schema, rng);
            CHECK(perturb(c, schema, p, rng) == c);
        }
    }
    SUBCASE("Gaussian step has sd = scale in normalized units") {
        p.mutation_rate = 1.0;
        p.mutation_scale = 0.1;
        const auto schema = testing::numeric_schema(1, -100.0, 100.0);  // wide: clamping is negligible
        double s = 0.0, ss = 0.0;
        const int n = 10000;
        for (int t = 0; t < n; ++t) {
            const double d = (perturb(Instance{0.0}, schema, p, rng)[0] - 0.0) / 200.0;
            s += d;
            ss += d * d;
        }
        const double mean = s / n;
        const double sd = std::sqrt((ss - n * mean * mean) / (n - 1));
        CHECK(sd == doctest::Approx(0.1).epsilon(0.1));
        CHECK(std::abs(mean) < 0.01);
    }
    SUBCASE("categorical mutation always moves to another category") {
        p.mutation_rate = 1.0;
        const auto schema = FeatureSchema({{"c", FeatureKind::Categorical, 0, 0, {"a", "b", "c"}}}, "y");
        std::map<double, int> seen;
        for (int t = 0; t < 3000; ++t) {
            const double v = perturb(Instance{1.0}, schema, p, rng)[0];
            CHECK(v != 1.0);
            seen[v]++;
        }
        CHECK(seen.size() == 2);
    }
    SUBCASE("values stay inside the schema domain") {
        p.mutation_rate = 1.0;
        p.mutation_scale = 2.0;
        const auto schema = testing::mixed_schema();
        for (int t = 0; t < 1000; ++t) {
            const auto c = perturb(testing::random_instance(schema, rng), schema, p, rng);
            CHECK_NOTHROW(schema.validate(c));
            for (std::size_t i = 0; i < schema.size(); ++i)
                if (schema[i].is_numeric()) CHECK((c[i] >= schema[i].lo && c[i] <= schema[i].hi));
        }
    }
    SUBCASE("mutate respects Immutable") {
        p.mutation_rate = 1.0;
        const auto schema = testing::mixed_schema();
        const auto x = testing::random_instance(schema, rng);
        ConstraintSet c = apply_update({}, ConstraintUpdate::add(2, Immutable{}), schema);
        c = apply_update(c, ConstraintUpdate::add(1, Immutable{}), schema);
        for (int t = 0; t < 500; ++t) {
            const auto m = mutate(x, x, c, schema, p, rng);
            CHECK(m[2] == x[2]);
            CHECK(m[1] == x[1]);
        }
    }
}

TEST_CASE("init_synthetic") {
    Rng rng(10);
    GaParams p;
    const auto schema = testing::numeric_schema(4);
    const Instance x{0.5, 0.5, 0.5, 0.5};
    SUBCASE("rate 0 gives copies of x") {
        p.mutation_rate = 0.0;
        const auto pop = init_synthetic(x, schema, {}, p, rng);
        CHECK(pop.size() == p.population_size);
        for (const auto& m : pop.members) CHECK(m.genome == x);
    }
    SUBCASE("Range bounds every member") {
        p.mutation_rate = 1.0;
        p.mutation_scale = 0.5;
        const auto c = apply_update({}, ConstraintUpdate::add(1, Range{0.45, 0.55}), schema);
        for (const auto& m : init_synthetic(x, schema, c, p, rng).members) {
            CHECK(m.genome[1] >= 0.45);
            CHECK(m.genome[1] <= 0.55);
        }
    }
    SUBCASE("fraction of perturbed features tracks the rate") {
        p.mutation_rate = 0.5;
        p.population_size = 10000;
        const auto pop = init_synthetic(x, schema, {}, p, rng);
        double changed = 0.0;
        for (const auto& m : pop.members)
            for (std::size_t i = 0; i < 4; ++i) changed += m.genome[i] != x[i];
        CHECK(std::abs(changed / (4.0 * 10000) - 0.5) < 0.02);
        // uniform offsets within +-scale of the range
        for (const auto& m : pop.members)
            for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(m.genome[i] - x[i]) <= p.mutation_scale + 1e-12);
    }
}

TEST_CASE("init_knn") {
    const auto setup = testing::threshold_setup(3);
    const auto& index = setup.context->index(1);
    Rng rng(12);
    GaParams p;
    const Instance x{0.2, 0.4, 0.6};
    SUBCASE("no constraints and k = population size: neighbours verbatim") {
        const auto pop = init_knn(x, index, {}, setup.schema, p, rng);
        const auto nn = index.query(x, p.population_size);
        REQUIRE(pop.size() == nn.size());
        for (std::size_t i = 0; i < nn.size(); ++i) CHECK(pop.members[i].genome == index.payload(nn[i].id));
    }
    SUBCASE("Immutable(f0) pins every member") {
        const auto c = apply_update({}, ConstraintUpdate::add(0, Immutable{}), setup.schema);
        for (const auto& m : init_knn(x, index, c, setup.schema, p, rng).members) CHECK(m.genome[0] == x[0]);
    }
    SUBCASE("k = 5, population 10: first five are distinct neighbours") {
        p.knn_k = 5;
        p.population_size = 10;
        const auto c = apply_update({}, ConstraintUpdate::add(2, Direction{Sense::IncreaseOnly}), setup.schema);
        const auto pop = init_knn(x, index, c, setup.schema, p, rng);
        REQUIRE(pop.size() == 10);
        const auto nn = index.query(x, 5);
        for (std::size_t i = 0; i < 5; ++i) CHECK(pop.members[i].genome == repair(x, index.payload(nn[i].id), c));
        for (const auto& m : pop.members) CHECK(is_feasible(x, m.genome, c));
    }
}

TEST_CASE("evolve finds the decision boundary of a 1-D threshold model") {
    const auto setup = testing::threshold_setup(1);
    GaParams p;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed);
        const Instance x{0.3};
        SearchProblem problem(setup.schema, *setup.model, setup.context->weights(), x);
        const auto pop = init_knn(x, setup.context->index(1), {}, setup.schema, p, rng);
        const auto [res, fin] = evolve(problem, pop, {}, p, rng);
        REQUIRE(res.success);
        CHECK(res.best->genome[0] >= 0.5);
        CHECK(res.best->genome[0] <= 0.5 + 3 * p.mutation_scale);
        CHECK(fin.size() == p.population_size);
        CHECK(res.generations_run >= 1);
        CHECK(res.generations_run <= p.max_generations);
    }
}

TEST_CASE("evolve without a reachable flip runs to max_generations") {
    const auto setup = testing::threshold_setup(2);
    GaParams p;
    p.max_generations = 20;
    Rng rng(1);
    const Instance x{0.3, 0.3};
    const auto c = apply_update({}, ConstraintUpdate::add(0, Immutable{}), setup.schema);
    SearchProblem problem(setup.schema, *setup.model, setup.context->weights(), x);
    const auto pop = init_knn(x, setup.context->index(1), c, setup.schema, p, rng);
    const auto [res, fin] = evolve(problem, pop, c, p, rng);
    CHECK_FALSE(res.success);
    CHECK_FALSE(res.best.has_value());
    CHECK(res.generations_run == 20);
    for (const auto& m : fin.members) CHECK(m.genome[0] == x[0]);
}

TEST_CASE("evolve stops quickly once a boundary candidate is present") {
    const auto setup = testing::threshold_setup(1);
    GaParams p;
    p.patience = 1;
    Rng rng(2);
    const Instance x{0.3};
    SearchProblem problem(setup.schema, *setup.model, setup.context->weights(), x);
    Population pop;
    pop.members.assign(p.population_size, Candidate{Instance{0.5}, 0.0, false});
    const auto [res, fin] = evolve(problem, pop, {}, p, rng);
    CHECK(res.success);
    CHECK(res.generations_run <= p.patience + 1);
}

TEST_CASE("evolve: elitism, feasibility closure and determinism") {
    const auto schema = testing::mixed_schema();
    auto model = std::make_shared<const ThresholdModel>(schema.size(), 0, 50.0);
    const auto ctx = std::make_shared<const ExplainContext>(testing::labelled_by(schema, *model, 300, 4), model);
    Rng crng(31);
    for (int trial = 0; trial < 20; ++trial) {
        auto x = testing::random_instance(schema, crng);
        x[0] = std::uniform_real_distribution<double>(0.0, 49.0)(crng);
        const auto c = testing::random_constraints(schema, crng, 0.4);
        GaParams p;
        p.population_size = 20;
        p.selection = trial % 2 ? SelectionMethod::Tournament : SelectionMethod::Sus;
        SearchProblem problem(schema, *model, ctx->weights(), x);

        Rng rng(trial);
        auto pop = init_knn(x, ctx->index(1), c, schema, p, rng);
        auto step = p;
        step.max_generations = 1;
        double best = -1e300;
        for (int g = 0; g < 15; ++g) {
            auto [res, next] = evolve(problem, pop, c, step, rng);
            pop = std::move(next);
            const double b = std::max_element(pop.members.begin(), pop.members.end(), [](auto& l, auto& r) {
                                 return l.fitness < r.fitness;
                             })->fitness;
            CHECK(b >= best);
            best = b;
            CHECK(pop.size() == p.population_size);
            for (const auto& m : pop.members) {
                CHECK(is_feasible(x, m.genome, c));
                CHECK_NOTHROW(schema.validate(m.genome));
            }
            if (res.success) CHECK(is_feasible(x, res.best->genome, c));
        }

        Rng r1(trial * 7 + 1), r2(trial * 7 + 1);
        const auto p0 = init_knn(x, ctx->index(1), c, schema, p, r1);
        const auto p0b = init_knn(x, ctx->index(1), c, schema, p, r2);
        CHECK(p0 == p0b);
        const auto [a, fa] = evolve(problem, p0, c, p, r1);
        const auto [b, fb] = evolve(problem, p0b, c, p, r2);
        CHECK(a.best == b.best);
        CHECK(a.generations_run == b.generations_run);
        CHECK(a.success == b.success);
        CHECK(fa == fb);
    }
}
