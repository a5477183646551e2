#include <doctest.h>

#include <cmath>

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/beta.hpp>

#include "cfloop/error.hpp"
#include "cfloop/metrics.hpp"
#include "support.hpp"

using namespace cfloop;

namespace {

double boost_welch(const std::vector<double>& a, const std::vector<double>& b) {
    auto mv = [](const std::vector<double>& v) {
        double m = 0.0;
        for (double x : v) m += x;
        m /= v.size();
        double s = 0.0;
        for (double x : v) s += (x - m) * (x - m);
        return std::pair{m, s / (v.size() - 1)};
    };
    const auto [ma, va] = mv(a);
    const auto [mb, vb] = mv(b);
    const double na = a.size(), nb = b.size();
    const double se2 = va / na + vb / nb;
    const double t = (ma - mb) / std::sqrt(se2);
    const double df = se2 * se2 / ((va / na) * (va / na) / (na - 1) + (vb / nb) * (vb / nb) / (nb - 1));
    boost::math::students_t dist(df);
    return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

}  // namespace

TEST_CASE("proximity") {
    const auto schema = testing::numeric_schema(2);
    CHECK(proximity(Instance{0.3, 0.7}, Instance{0.3, 0.7}, FeatureWeights{{1, 3}}, schema) == 0.0);
    CHECK(proximity(Instance{0.0, 0.5}, Instance{0.4, 0.5}, FeatureWeights{{1, 3}}, schema) == doctest::Approx(0.1));
    const auto one = testing::numeric_schema(1);
    CHECK(proximity(Instance{0.2}, Instance{0.9}, FeatureWeights{{5}}, one) == doctest::Approx(0.7));

    const auto mixed = testing::mixed_schema();
    // categorical features count 1 when different
    CHECK(proximity(Instance{0, 0, 0, 0, 0}, Instance{0, 2, 0, 1, 0}, FeatureWeights{{1, 1, 1, 1, 1}}, mixed) ==
          doctest::Approx(0.4));
}

TEST_CASE("sparsity") {
    const auto schema = testing::numeric_schema(4);
    const Instance x{0.1, 0.2, 0.3, 0.4};
    CHECK(sparsity(x, x, 1e-5, schema) == 0.0);
    CHECK(sparsity(x, Instance{0.1, 0.25, 0.3, 0.4}, 1e-5, schema) == 0.25);
    CHECK(sparsity(x, Instance{0.1 + 0.5e-5, 0.2, 0.3, 0.4}, 1e-5, schema) == 0.0);
    CHECK(changed_count(x, Instance{0.9, 0.9, 0.9, 0.4}, 1e-5, schema) == 3);
}

TEST_CASE("proximity and sparsity are symmetric and translation invariant") {
    const auto schema = testing::numeric_schema(5, -10.0, 10.0);
    Rng rng(3);
    const FeatureWeights w{{1.0, 0.5, 2.0, 3.0, 0.1}};
    for (int t = 0; t < 500; ++t) {
        const auto a = testing::random_instance(schema, rng), b = testing::random_instance(schema, rng);
        CHECK(proximity(a, b, w, schema) == doctest::Approx(proximity(b, a, w, schema)));
        CHECK(sparsity(a, b, 1e-5, schema) == sparsity(b, a, 1e-5, schema));
        Instance sa = a, sb = b;
        const double shift = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
        for (std::size_t i = 0; i < 5; ++i) {
            sa[i] += shift;
            sb[i] += shift;
        }
        CHECK(proximity(sa, sb, w, schema) == doctest::Approx(proximity(a, b, w, schema)));
        CHECK(sparsity(sa, sb, 1e-5, schema) == sparsity(a, b, 1e-5, schema));
        CHECK(proximity(a, b, w, schema) >= 0.0);
        const double s = sparsity(a, b, 1e-5, schema);
        CHECK((s >= 0.0 && s <= 1.0));
    }
}

TEST_CASE("summarize and aggregate") {
    const double one[] = {4.0};
    CHECK(summarize(one).mean == 4.0);
    CHECK(summarize(one).std == 0.0);
    const double three[] = {1.0, 2.0, 3.0};
    CHECK(summarize(three).mean == doctest::Approx(2.0));
    CHECK(summarize(three).std == doctest::Approx(1.0));
    CHECK_THROWS_AS((void)summarize(std::span<const double>{}), Error);

    std::vector<RunMetrics> runs{{10.0, 4, true, 0.2, 0.5}, {20.0, 6, false, {}, {}}, {30.0, 8, true, 0.4, 0.25}};
    const auto s = aggregate(runs);
    CHECK(s.n == 3);
    CHECK(s.cf_rate == doctest::Approx(200.0 / 3.0));
    CHECK(s.elapsed_ms.mean == doctest::Approx(20.0));
    CHECK(s.elapsed_ms.std == doctest::Approx(10.0));
    CHECK(s.generations.mean == doctest::Approx(6.0));
    REQUIRE(s.proximity);
    CHECK(s.proximity->mean == doctest::Approx(0.3));
    CHECK(s.sparsity->mean == doctest::Approx(0.375));

    std::vector<RunMetrics> none{{1.0, 2, false, {}, {}}};
    const auto z = aggregate(none);
    CHECK(z.cf_rate == 0.0);
    CHECK_FALSE(z.proximity);
    CHECK_FALSE(z.sparsity);
    CHECK_THROWS_AS((void)aggregate(std::span<const RunMetrics>{}), Error);
}

TEST_CASE("incomplete beta and Student t against Boost") {
    for (double a : {0.5, 1.0, 2.5, 7.0})
        for (double b : {0.5, 1.0, 3.0, 10.0})
            for (double x : {0.0, 0.01, 0.3, 0.5, 0.9, 1.0})
                CHECK(incomplete_beta(a, b, x) == doctest::Approx(boost::math::ibeta(a, b, x)).epsilon(1e-10));
    for (double df : {1.0, 2.0, 3.7, 8.0, 30.5, 200.0})
        for (double t : {0.0, 0.1, 1.0, 2.0, 5.0, -3.0}) {
            boost::math::students_t dist(df);
            const double want = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
            CHECK(std::abs(student_t_two_sided(t, df) - want) < 1e-9);
        }
}

TEST_CASE("Welch t-test") {
    const std::vector<double> a{1, 2, 3, 4, 5}, b{2, 3, 4, 5, 6};
    CHECK(std::abs(welch_t_test(a, b) - 0.34659350708733416) < 1e-6);
    CHECK(welch_t_test(a, b) == welch_t_test(b, a));
    CHECK(welch_t_test(a, a) == 1.0);
    const std::vector<double> zeros(5, 0.0), ones(5, 1.0);
    CHECK(welch_t_test(zeros, ones) == 0.0);
    CHECK(welch_t_test(ones, ones) == 1.0);
    CHECK_THROWS_AS((void)welch_t_test(std::vector<double>{1.0}, b), Error);

    Rng rng(9);
    for (int t = 0; t < 200; ++t) {
        const std::size_t na = 2 + t % 7, nb = 2 + (t / 7) % 5;
        std::vector<double> x(na), y(nb);
        std::normal_distribution<double> n1(0.0, 1.0), n2(0.5, 2.0);
        for (auto& v : x) v = n1(rng);
        for (auto& v : y) v = n2(rng);
        const double p = welch_t_test(x, y);
        CHECK(std::abs(p - boost_welch(x, y)) < 1e-6);
        CHECK(p == welch_t_test(y, x));
        CHECK((p >= 0.0 && p <= 1.0));
    }
}
