// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [--only N,M,...] [--allow-fail N,M,...]
//
// Exit status is nonzero when a criterion fails that is not listed in
// --allow-fail. Allowed failures are still printed as FAIL.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include <boost/math/distributions/chi_squared.hpp>

#include "cfloop/bench.hpp"
#include "cfloop/constraints.hpp"
#include "cfloop/data.hpp"
#include "cfloop/ga.hpp"
#include "cfloop/kd_index.hpp"
#include "cfloop/metrics.hpp"
#include "cfloop/model.hpp"
#include "cfloop/session.hpp"
#include "cfloop/synthetic.hpp"
#include "support.hpp"

using namespace cfloop;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// income >= 50 is favorable; the categorical features do not matter
std::shared_ptr<const ExplainContext> mixed_context() {
    const auto schema = testing::mixed_schema();
    auto model = std::make_shared<const ThresholdModel>(schema.size(), 0, 50.0);
    return std::make_shared<const ExplainContext>(testing::labelled_by(schema, *model, 600, 11), model);
}

ConstraintUpdate random_update(const ConstraintSet& c, const FeatureSchema& schema, Rng& rng) {
    const auto i = std::uniform_int_distribution<std::size_t>(0, schema.size() - 1)(rng);
    if (!c.contains(i)) return ConstraintUpdate::add(i, testing::random_constraint(schema[i], rng));
    if (std::bernoulli_distribution(0.5)(rng)) return ConstraintUpdate::remove(i);
    return ConstraintUpdate::modify(i, testing::random_constraint(schema[i], rng));
}

Outcome feasibility_closure() {
    const auto ctx = mixed_context();
    const auto& schema = ctx->schema();
    Rng rng(101);
    GaParams params;
    params.population_size = 10;
    params.knn_k = 10;
    params.mutation_rate = 0.5;
    params.mutation_scale = 0.5;
    std::size_t trials = 0, violations = 0;
    auto check_pop = [&](const Instance& x, const ConstraintSet& c, const Population& pop) {
        for (const auto& m : pop.members) violations += !is_feasible(x, m.genome, c);
    };
    auto negative_instance = [&] {
        auto x = testing::random_instance(schema, rng);
        x[0] = std::uniform_real_distribution<double>(0.0, 49.0)(rng);
        return x;
    };
    for (int t = 0; t < 10'000; ++t, ++trials) {
        const auto x = negative_instance();
        const auto c = testing::random_constraints(schema, rng, 0.6);
        switch (t % 4) {
            case 0: {
                const auto init = t % 8 == 0 ? InitMethod::Knn : InitMethod::Synthetic;
                check_pop(x, c, initial_population(*ctx, x, c, params, init, rng));
                break;
            }
            case 1: {
                const auto start = repair(x, testing::random_instance(schema, rng), c);
                violations += !is_feasible(x, mutate(start, x, c, schema, params, rng), c);
                break;
            }
            case 2: {
                const auto a = repair(x, testing::random_instance(schema, rng), c);
                const auto b = repair(x, testing::random_instance(schema, rng), c);
                auto [ca, cb] = crossover(a, b, 1.0, rng);
                violations += !is_feasible(x, repair(x, ca, c), c);
                violations += !is_feasible(x, repair(x, cb, c), c);
                break;
            }
            default: {
                GaParams p = params;
                p.seed = static_cast<std::uint64_t>(t);
                const auto strategy = t % 8 == 3 ? WarmStartStrategy::FixViolators : WarmStartStrategy::RandomRestart;
                const auto s = start_session(ctx, x, c, p, InitMethod::Knn, strategy);
                UpdateBatch batch;
                ConstraintSet next = s.constraints;
                for (int k = 0; k < 3; ++k) {
                    auto u = random_update(next, schema, rng);
                    next = apply_update(next, u, schema);
                    batch.push_back(u);
                }
                const auto updated = update_constraints(s, batch);
                violations += !(updated.constraints == next);
                check_pop(x, updated.constraints, updated.population);
                break;
            }
        }
    }
    return {violations == 0, fmt("%zu trials, %zu infeasible", trials, violations)};
}

// Independent evaluation straight from the definition.
double oracle_fitness(const Instance& x, const Instance& c, const FeatureWeights& w, const FeatureSchema& s,
                      const Classifier& m, const GaParams& p) {
    double num = 0.0, den = 0.0;
    int changed = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double d = s[i].is_categorical() ? (x[i] == c[i] ? 0.0 : 1.0)
                                               : std::abs(x[i] - c[i]) / (s[i].hi - s[i].lo);
        num += w[i] * d;
        den += w[i];
        changed += d > p.epsilon;
    }
    return -p.lambda1 * num / den - p.lambda2 * changed +
           p.lambda3 * (m.predict(x) != m.predict(c) ? p.alpha : -p.beta);
}

Outcome fitness_oracle() {
    const auto schema = testing::mixed_schema();
    const ThresholdModel model(schema.size(), 0, 50.0);
    Rng rng(202);
    std::size_t flips = 0, mismatches = 0;
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
        GaParams p;
        p.lambda1 = std::uniform_real_distribution<double>(0.0, 2.0)(rng);
        p.lambda2 = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        p.lambda3 = std::uniform_real_distribution<double>(0.0, 2.0)(rng);
        p.alpha = std::uniform_real_distribution<double>(0.1, 2.0)(rng);
        p.beta = std::uniform_real_distribution<double>(0.1, 2.0)(rng);
        FeatureWeights w{std::vector<double>(schema.size())};
        for (auto& v : w.w) v = std::uniform_real_distribution<double>(0.05, 5.0)(rng);
        const auto x = testing::random_instance(schema, rng);
        auto c = testing::random_instance(schema, rng);
        for (std::size_t i = 0; i < schema.size(); ++i)
            if (std::bernoulli_distribution(0.3)(rng)) c[i] = x[i];
        const double want = oracle_fitness(x, c, w, schema, model, p);
        const double got = fitness(x, c, w, schema, model, p);
        const auto via_problem = SearchProblem(schema, model, w, x).evaluate(c, p);
        const double err = std::max(std::abs(got - want), std::abs(via_problem.fitness - want));
        worst = std::max(worst, err);
        mismatches += err > 1e-9;
        flips += model.predict(x) != model.predict(c);
    }
    const bool both = flips > 0 && flips < 1000;
    return {mismatches == 0 && both,
            fmt("1000 pairs (%zu flip, %zu no flip), max error %.2e", flips, 1000 - flips, worst)};
}

Outcome kd_correctness() {
    const auto schema = testing::mixed_schema();
    Rng rng(303);
    std::vector<Instance> pts;
    for (int i = 0; i < 1000; ++i) pts.push_back(testing::random_instance(schema, rng));
    // a few exact duplicates to exercise tie order
    for (int i = 0; i < 20; ++i) pts[500 + i] = pts[i];
    const KdIndex index(schema, pts);
    std::size_t bad = 0;
    for (int q = 0; q < 100; ++q) {
        const auto x = q % 10 == 0 ? pts[q] : testing::random_instance(schema, rng);
        const std::size_t k = 1 + q * 7 % 60;
        const auto qp = index.project(x);
        std::vector<std::pair<double, std::size_t>> all;
        for (std::size_t id = 0; id < index.size(); ++id) {
            const auto p = index.point(id);
            double s = 0.0;
            for (std::size_t j = 0; j < p.size(); ++j) s += (p[j] - qp[j]) * (p[j] - qp[j]);
            all.emplace_back(s, id);
        }
        std::sort(all.begin(), all.end());
        const auto got = index.query(x, k);
        bool ok = got.size() == k;
        for (std::size_t j = 0; ok && j < k; ++j)
            ok = got[j].id == all[j].second && std::abs(got[j].distance - std::sqrt(all[j].first)) < 1e-12;
        bad += !ok;
    }
    return {bad == 0, fmt("100 queries over 1000 points, %zu mismatched", bad)};
}

Outcome sus_distribution() {
    // shifted by the minimum, {0.5, 0.3, 0.2, 0} gives shares 0.5 / 0.3 / 0.2 / ~0
    const std::vector<double> f{0.7, 0.5, 0.4, 0.2};
    Rng rng(404);
    std::array<double, 4> counts{};
    for (int t = 0; t < 1000; ++t)
        for (auto i : sus_select(f, 10, rng)) counts[i] += 1;
    const double total = 10'000;
    const double expected[] = {0.5 * total, 0.3 * total, 0.2 * total};
    double chi2 = 0.0;
    for (int i = 0; i < 3; ++i) chi2 += (counts[i] - expected[i]) * (counts[i] - expected[i]) / expected[i];
    const double p = boost::math::cdf(boost::math::complement(boost::math::chi_squared(2.0), chi2));

    bool once = true;
    for (std::size_t m : {1, 2, 7, 50}) {
        const std::vector<double> flat(m, 0.25);
        for (int t = 0; t < 100 && once; ++t) {
            auto sel = sus_select(flat, m, rng);
            std::sort(sel.begin(), sel.end());
            for (std::size_t i = 0; i < m; ++i) once = once && sel[i] == i;
        }
    }
    return {p > 0.01 && counts[3] == 0 && once,
            fmt("counts %.0f/%.0f/%.0f/%.0f, chi2 p=%.4f, exactly-once %s", counts[0], counts[1], counts[2], counts[3],
                p, once ? "yes" : "no")};
}

struct Blobs {
    Workspace ws;
    Scenario sc;
};

const Blobs& blobs() {
    static const Blobs b = [] {
        auto full = make_blobs(2000, 8, 7);
        TrainOptions t;
        t.seed = 1;
        t.split_seed = 1;
        auto report = cmd_train(full, t);
        auto ws = make_workspace(std::move(full), report.model, t.split_ratio, t.split_seed);
        auto sc = load_scenario(std::filesystem::path(CFLOOP_DATA_DIR) / "scenarios/blobs_ird.json", ws.full.schema);
        return Blobs{std::move(ws), std::move(sc)};
    }();
    return b;
}

BenchOptions bench_defaults() {
    BenchOptions o;
    o.workers = default_workers();
    return o;
}

const ArmSummary& arm(const CommandOutput& out, std::string_view label) {
    for (const auto& a : out.summaries)
        if (a.label == label) return a;
    throw std::runtime_error("missing arm " + std::string(label));
}

Outcome baseline_vs_incremental() {
    const auto& b = blobs();
    const auto out = cmd_explain(b.ws, b.sc, {UpdateMethod::Baseline, UpdateMethod::Incremental}, bench_defaults());
    const auto& base = arm(out, "baseline");
    const auto& inc = arm(out, "incremental");
    std::size_t faster = 0;
    for (std::size_t r = 0; r < base.time_ms.size(); ++r) faster += inc.time_ms[r] < base.time_ms[r];
    const double cf_b = base.cf_summary.mean, cf_i = inc.cf_summary.mean;
    const bool pass = faster == base.time_ms.size() && base.time_ms.size() == 5 && cf_b >= cf_i && cf_b >= 70.0 &&
                      cf_i >= 70.0 && out.errors.empty();
    return {pass, fmt("%zu instances; incremental faster on %zu/5 seeds (%.1f vs %.1f ms); CF%% baseline %.2f, "
                      "incremental %.2f",
                      base.instances, faster, inc.time_summary.mean, base.time_summary.mean, cf_b, cf_i)};
}

Outcome fix_vs_random() {
    const auto& b = blobs();
    const auto out = cmd_warmstart_ablation(b.ws, b.sc, bench_defaults());
    const auto& fix = arm(out, "fix");
    const auto& rnd = arm(out, "random");
    std::size_t faster = 0;
    for (std::size_t r = 0; r < fix.time_ms.size(); ++r) faster += fix.time_ms[r] < rnd.time_ms[r];
    const bool have_prox = fix.proximity_summary && rnd.proximity_summary;
    const double pf = have_prox ? fix.proximity_summary->mean : NAN;
    const double pr = have_prox ? rnd.proximity_summary->mean : NAN;
    const auto& p = out.pvalues;
    const bool emitted = p && p->time && p->gens && p->cf_rate && p->proximity && p->sparsity;
    return {faster >= 4 && have_prox && pf <= pr && emitted,
            fmt("fix faster on %zu/5 seeds (%.1f vs %.1f ms); proximity fix %.4f, random %.4f; p-values %s", faster,
                fix.time_summary.mean, rnd.time_summary.mean, pf, pr, emitted ? "emitted" : "missing")};
}

Outcome orderings() {
    const auto& b = blobs();
    const auto target = final_constraints(b.sc, b.ws.full.schema);
    bool equal = true;
    for (const auto& o : constraint_orderings(target)) {
        ConstraintSet c;
        for (const auto& batch : o.sequence) c = apply_batch(c, batch, b.ws.full.schema);
        equal = equal && c == target;
    }
    const auto out = cmd_ordering(b.ws, b.sc, bench_defaults());
    double lo = 100.0, hi = 0.0;
    std::string rates;
    for (const auto& a : out.summaries) {
        lo = std::min(lo, a.cf_summary.mean);
        hi = std::max(hi, a.cf_summary.mean);
        rates += fmt(" %s=%.2f", a.label.c_str(), a.cf_summary.mean);
    }
    return {equal && out.summaries.size() == 3 && hi - lo <= 5.0,
            fmt("final sets %s; CF%%%s; spread %.2f pp", equal ? "equal" : "differ", rates.c_str(), hi - lo)};
}

Outcome german_end_to_end() {
    const std::filesystem::path dir = std::filesystem::path(CFLOOP_DATA_DIR) / "german_credit";
    auto full = load_dataset(dir / "german_credit.csv", dir / "german_credit.schema.json");
    TrainOptions t;
    t.seed = 1;
    t.split_seed = 1;
    auto report = cmd_train(full, t);
    auto ws = make_workspace(std::move(full), report.model, t.split_ratio, t.split_seed);
    auto sc = load_scenario(std::filesystem::path(CFLOOP_DATA_DIR) / "scenarios/german_immutable.json", ws.full.schema);
    const auto out = cmd_explain(ws, sc, {UpdateMethod::Baseline}, bench_defaults());
    const double cf = arm(out, "baseline").cf_summary.mean;
    const bool pass = std::abs(report.test_accuracy - 0.75) <= 0.05 && cf >= 90.0 && out.errors.empty();
    return {pass, fmt("test accuracy %.3f, %zu negatives, baseline CF%% %.2f", report.test_accuracy, ws.negatives.size(),
                      cf)};
}

Outcome determinism() {
    const auto& b = blobs();
    BenchOptions o = bench_defaults();
    o.timing = false;
    o.max_instances = 25;
    Scenario sc = b.sc;
    sc.runs = 2;
    auto all = [&](unsigned workers) {
        BenchOptions w = o;
        w.workers = workers;
        return cmd_explain(b.ws, sc, {UpdateMethod::Baseline, UpdateMethod::Incremental}, w).csv +
               cmd_warmstart_ablation(b.ws, sc, w).csv + cmd_ordering(b.ws, sc, w).csv +
               cmd_single_constraint(b.ws, 6, SingleConstraintOptions{.runs = 2, .seed = 3}, w).csv;
    };
    const auto first = all(o.workers), second = all(o.workers), serial = all(1);
    const bool pass = first == second && first == serial && !first.empty();
    return {pass, fmt("%zu CSV bytes; rerun %s, single worker %s", first.size(), first == second ? "identical" : "differs",
                      first == serial ? "identical" : "differs")};
}

Outcome welch() {
    const std::vector<double> a{1, 2, 3, 4, 5}, b{2, 3, 4, 5, 6};
    const double p = welch_t_test(a, b);
    const bool sym = p == welch_t_test(b, a);
    const bool same = welch_t_test(a, a) == 1.0 && welch_t_test(std::vector<double>(4, 2.0), std::vector<double>(3, 2.0)) == 1.0;
    return {std::abs(p - 0.3466) <= 1e-3 && sym && same,
            fmt("p=%.6f (reference 0.3466), symmetric %s, identical samples %s", p, sym ? "yes" : "no",
                same ? "p=1" : "wrong")};
}

std::set<int> parse_list(const std::string& s) {
    std::set<int> out;
    std::stringstream ss(s);
    for (std::string tok; std::getline(ss, tok, ',');)
        if (!tok.empty()) out.insert(std::stoi(tok));
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> only, allowed;
    for (int i = 1; i + 1 < argc; i += 2) {
        const std::string flag = argv[i];
        if (flag == "--only") only = parse_list(argv[i + 1]);
        else if (flag == "--allow-fail") allowed = parse_list(argv[i + 1]);
        else {
            std::fprintf(stderr, "usage: acceptance [--only N,...] [--allow-fail N,...]\n");
            return 2;
        }
    }
    const std::map<int, std::pair<const char*, std::function<Outcome()>>> criteria{
        {1, {"feasibility closure", feasibility_closure}},
        {2, {"fitness oracle", fitness_oracle}},
        {3, {"kd-index vs linear scan", kd_correctness}},
        {4, {"SUS distribution", sus_distribution}},
        {5, {"baseline vs incremental (blobs)", baseline_vs_incremental}},
        {6, {"fix violators vs random restart (blobs)", fix_vs_random}},
        {7, {"constraint orderings (blobs)", orderings}},
        {8, {"German Credit end to end", german_end_to_end}},
        {9, {"deterministic CSV", determinism}},
        {10, {"Welch t-test", welch}},
    };
    int blocking = 0;
    for (const auto& [id, c] : criteria) {
        if (!only.empty() && !only.contains(id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("[%s] %2d %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, c.first, o.detail.c_str(), secs);
        std::fflush(stdout);
        if (!o.pass && !allowed.contains(id)) ++blocking;
    }
    return blocking == 0 ? 0 : 1;
}
