#include "cfloop/ga.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "cfloop/error.hpp"

namespace cfloop {

using nlohmann::json;

void GaParams::validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidArgument, msg); };
    auto prob = [&](double v, const char* name) {
        if (!(v >= 0.0 && v <= 1.0)) fail(fmt::format("{} must lie in [0, 1], got {}", name, v));
    };
    if (population_size < 2) fail("population_size must be at least 2");
    if (knn_k < 1) fail("knn_k must be at least 1");
    if (patience < 1) fail("patience must be at least 1");
    prob(crossover_rate, "crossover_rate");
    prob(mutation_rate, "mutation_rate");
    if (!(mutation_scale >= 0.0) || !std::isfinite(mutation_scale)) fail("mutation_scale must be non-negative");
    for (double l : {lambda1, lambda2, lambda3})
        if (!(l >= 0.0) || !std::isfinite(l)) fail("lambda weights must be non-negative");
    if (!(alpha > 0.0) || !(beta > 0.0)) fail("alpha and beta must be positive");
    if (!(epsilon > 0.0)) fail("epsilon must be positive");
    if (selection == SelectionMethod::Tournament && (tournament_k < 2 || tournament_k > population_size))
        fail(fmt::format("tournament_k must lie in [2, {}]", population_size));
}

json params_to_json(const GaParams& p) {
    return {{"population_size", p.population_size},
            {"knn_k", p.knn_k},
            {"max_generations", p.max_generations},
            {"patience", p.patience},
            {"crossover_rate", p.crossover_rate},
            {"mutation_rate", p.mutation_rate},
            {"mutation_scale", p.mutation_scale},
            {"lambda1", p.lambda1},
            {"lambda2", p.lambda2},
            {"lambda3", p.lambda3},
            {"alpha", p.alpha},
            {"beta", p.beta},
            {"epsilon", p.epsilon},
            {"selection", p.selection == SelectionMethod::Sus ? "sus" : "tournament"},
            {"tournament_k", p.tournament_k},
            {"seed", p.seed}};
}

GaParams params_from_json(const json& j, GaParams base) {
    if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "GA parameters must be a JSON object");
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "population_size") base.population_size = v.get<std::size_t>();
            else if (key == "knn_k") base.knn_k = v.get<std::size_t>();
            else if (key == "max_generations") base.max_generations = v.get<std::size_t>();
            else if (key == "patience") base.patience = v.get<std::size_t>();
            else if (key == "crossover_rate") base.crossover_rate = v.get<double>();
            else if (key == "mutation_rate") base.mutation_rate = v.get<double>();
            else if (key == "mutation_scale") base.mutation_scale = v.get<double>();
            else if (key == "lambda1") base.lambda1 = v.get<double>();
            else if (key == "lambda2") base.lambda2 = v.get<double>();
            else if (key == "lambda3") base.lambda3 = v.get<double>();
            else if (key == "alpha") base.alpha = v.get<double>();
            else if (key == "beta") base.beta = v.get<double>();
            else if (key == "epsilon") base.epsilon = v.get<double>();
            else if (key == "tournament_k") base.tournament_k = v.get<std::size_t>();
            else if (key == "seed") base.seed = v.get<std::uint64_t>();
            else if (key == "selection") {
                const auto s = v.get<std::string>();
                if (s == "sus") base.selection = SelectionMethod::Sus;
                else if (s == "tournament") base.selection = SelectionMethod::Tournament;
                else throw Error(ErrorCode::InvalidArgument, fmt::format("unknown selection method '{}'", s));
            } else {
                throw Error(ErrorCode::InvalidArgument, fmt::format("unknown GA parameter '{}'", key));
            }
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("malformed GA parameters: {}", e.what()));
    }
    base.validate();
    return base;
}

namespace {

// Per-feature |x_i - c_i| in normalized space; overlap metric on categories.
double feature_distance(const FeatureSpec& spec, double a, double b) {
    if (spec.is_categorical()) return a == b ? 0.0 : 1.0;
    return std::abs(a - b);
}

double fitness_normalized(const Instance& xn, const Instance& cn, const FeatureSchema& schema,
                          const FeatureWeights& weights, double weight_total, bool flips, const GaParams& p) {
    double weighted = 0.0;
    double changed = 0.0;
    for (std::size_t i = 0; i < schema.size(); ++i) {
        const double d = feature_distance(schema[i], xn[i], cn[i]);
        weighted += weights[i] * d;
        if (d > p.epsilon) changed += 1.0;
    }
    const double pred = flips ? p.alpha : -p.beta;
    return -p.lambda1 * (weighted / weight_total) - p.lambda2 * changed + p.lambda3 * pred;
}

void check_weights(const FeatureWeights& w, const FeatureSchema& schema) {
    if (w.size() != schema.size())
        throw Error(ErrorCode::SchemaMismatch,
                    fmt::format("{} weights for {} features", w.size(), schema.size()));
    if (!(w.total() > 0.0)) throw Error(ErrorCode::InvalidArgument, "feature weights sum to zero");
}

double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

bool coin(Rng& rng, double p) {
    if (p <= 0.0) return false;
    if (p >= 1.0) return true;
    return uniform01(rng) < p;
}

double span_of(const FeatureSpec& spec) { return spec.hi - spec.lo; }

std::size_t best_member(const Population& pop) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < pop.members.size(); ++i)
        if (pop.members[i].fitness > pop.members[best].fitness) best = i;
    return best;
}

}  // namespace

SearchProblem::SearchProblem(const FeatureSchema& schema, const Classifier& model, FeatureWeights weights, Instance x)
    : schema_(&schema), model_(&model), weights_(std::move(weights)), x_(std::move(x)) {
    schema.validate(x_);
    check_weights(weights_, schema);
    x_norm_ = normalize(x_, schema);
    weight_total_ = weights_.total();
    x_label_ = model.predict(x_);
}

Candidate SearchProblem::evaluate(Instance genome, const GaParams& params) const {
    const bool flips = model_->predict(genome) != x_label_;
    const Instance cn = normalize(genome, *schema_);
    const double f = fitness_normalized(x_norm_, cn, *schema_, weights_, weight_total_, flips, params);
    return {std::move(genome), f, flips};
}

double l_pred(const Classifier& model, const Instance& x, const Instance& cand, const GaParams& params) {
    return model.predict(cand) != model.predict(x) ? params.alpha : -params.beta;
}

double fitness(const Instance& x, const Instance& cand, const FeatureWeights& weights, const FeatureSchema& schema,
               const Classifier& model, const GaParams& params) {
    check_weights(weights, schema);
    const bool flips = model.predict(cand) != model.predict(x);
    return fitness_normalized(normalize(x, schema), normalize(cand, schema), schema, weights, weights.total(), flips,
                              params);
}

Instance perturb(Instance cand, const FeatureSchema& schema, const GaParams& params, Rng& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t i = 0; i < schema.size(); ++i) {
        if (!coin(rng, params.mutation_rate)) continue;
        const auto& spec = schema[i];
        if (spec.is_numeric()) {
            const double step = gauss(rng) * params.mutation_scale * span_of(spec);
            cand[i] = std::clamp(cand[i] + step, spec.lo, spec.hi);
        } else if (spec.categories.size() > 1) {
            // uniform over the other categories
            const auto current = static_cast<std::size_t>(cand[i]);
            auto pick = std::uniform_int_distribution<std::size_t>(0, spec.categories.size() - 2)(rng);
            if (pick >= current) ++pick;
            cand[i] = static_cast<double>(pick);
        }
    }
    return cand;
}

Instance mutate(Instance cand, const Instance& x, const ConstraintSet& constraints, const FeatureSchema& schema,
                const GaParams& params, Rng& rng) {
    return repair(x, perturb(std::move(cand), schema, params, rng), constraints);
}

std::pair<Instance, Instance> crossover(const Instance& a, const Instance& b, double rate, Rng& rng) {
    if (a.size() != b.size()) throw Error(ErrorCode::SchemaMismatch, "crossover of genomes with different lengths");
    std::pair<Instance, Instance> out{a, b};
    if (!coin(rng, rate)) return out;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (coin(rng, 0.5)) std::swap(out.first[i], out.second[i]);
    return out;
}

Population init_knn(const Instance& x, const KdIndex& index, const ConstraintSet& constraints,
                    const FeatureSchema& schema, const GaParams& params, Rng& rng) {
    if (index.empty()) throw Error(ErrorCode::NoOppositeClass, "neighbour index is empty");
    const auto neighbors = index.query(x, std::min(params.knn_k, params.population_size));
    Population pop;
    pop.members.reserve(params.population_size);
    for (const auto& n : neighbors) pop.members.push_back({repair(x, index.payload(n.id), constraints), 0.0, false});
    // pad by cycling over the neighbours with fresh mutations
    for (std::size_t i = 0; pop.members.size() < params.population_size; ++i) {
        const auto& src = index.payload(neighbors[i % neighbors.size()].id);
        pop.members.push_back({mutate(src, x, constraints, schema, params, rng), 0.0, false});
    }
    return pop;
}

Population init_synthetic(const Instance& x, const FeatureSchema& schema, const ConstraintSet& constraints,
                          const GaParams& params, Rng& rng) {
    schema.validate(x);
    Population pop;
    pop.members.reserve(params.population_size);
    for (std::size_t m = 0; m < params.population_size; ++m) {
        Instance g = x;
        for (std::size_t i = 0; i < schema.size(); ++i) {
            if (!coin(rng, params.mutation_rate)) continue;
            const auto& spec = schema[i];
            if (spec.is_numeric()) {
                const double off = std::uniform_real_distribution<double>(-params.mutation_scale,
                                                                          params.mutation_scale)(rng);
                g[i] = std::clamp(g[i] + off * span_of(spec), spec.lo, spec.hi);
            } else {
                g[i] = static_cast<double>(
                    std::uniform_int_distribution<std::size_t>(0, spec.categories.size() - 1)(rng));
            }
        }
        pop.members.push_back({repair(x, std::move(g), constraints), 0.0, false});
    }
    return pop;
}

std::vector<std::size_t> sus_select(std::span<const double> fitness, std::size_t n, Rng& rng) {
    if (fitness.empty()) throw Error(ErrorCode::EmptyInput, "selection from an empty population");
    if (n == 0) return {};
    const auto [lo_it, hi_it] = std::minmax_element(fitness.begin(), fitness.end());
    const std::size_t m = fitness.size();

    // expected selection counts, summing to n
    std::vector<double> expected(m);
    if (*lo_it == *hi_it) {
        std::fill(expected.begin(), expected.end(), static_cast<double>(n) / static_cast<double>(m));
    } else {
        const double shift = *lo_it - kSelectionShift;
        double total = 0.0;
        for (std::size_t i = 0; i < m; ++i) total += fitness[i] - shift;
        for (std::size_t i = 0; i < m; ++i)
            expected[i] = (fitness[i] - shift) / total * static_cast<double>(n);
    }

    const double start = uniform01(rng);
    std::vector<std::size_t> out;
    out.reserve(n);
    std::size_t i = 0;
    double cum = expected[0];
    for (std::size_t j = 0; j < n; ++j) {
        const double pointer = start + static_cast<double>(j);
        while (pointer >= cum && i + 1 < m) cum += expected[++i];
        out.push_back(i);
    }
    return out;
}

std::vector<std::size_t> tournament_select(std::span<const double> fitness, std::size_t n, std::size_t k, Rng& rng) {
    if (fitness.empty()) throw Error(ErrorCode::EmptyInput, "selection from an empty population");
    const std::size_t m = fitness.size();
    if (k < 1 || k > m) throw Error(ErrorCode::InvalidArgument, "tournament size must be in [1, population size]");
    // partial Fisher-Yates over a persistent permutation: each round draws a
    // uniform k-subset without resetting the array
    std::vector<std::size_t> perm(m);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::vector<std::size_t> out;
    out.reserve(n);
    for (std::size_t j = 0; j < n; ++j) {
        std::size_t best = m;
        for (std::size_t t = 0; t < k; ++t) {
            const std::size_t r = std::uniform_int_distribution<std::size_t>(t, m - 1)(rng);
            std::swap(perm[t], perm[r]);
            const std::size_t c = perm[t];
            if (best == m || fitness[c] > fitness[best] || (fitness[c] == fitness[best] && c < best)) best = c;
        }
        out.push_back(best);
    }
    return out;
}

std::pair<SearchResult, Population> evolve(const SearchProblem& problem, Population population,
                                           const ConstraintSet& constraints, const GaParams& params, Rng& rng) {
    const auto t0 = std::chrono::steady_clock::now();
    params.validate();
    if (population.members.empty()) throw Error(ErrorCode::EmptyInput, "cannot evolve an empty population");
    const auto& x = problem.x();
    const auto& schema = problem.schema();
    const std::size_t size = population.members.size();

    for (auto& m : population.members) m = problem.evaluate(std::move(m.genome), params);

    std::optional<Candidate> best_flip;
    auto track = [&](const Population& pop) {
        for (const auto& m : pop.members)
            if (m.flips && (!best_flip || m.fitness > best_flip->fitness)) best_flip = m;
    };
    track(population);

    SearchResult result;
    std::size_t stall = 0;
    std::vector<double> fit(size);
    while (result.generations_run < params.max_generations) {
        for (std::size_t i = 0; i < size; ++i) fit[i] = population.members[i].fitness;
        const std::size_t elite = best_member(population);
        const double elite_fitness = fit[elite];

        const std::size_t n_children = size - 1;
        const std::size_t n_parents = n_children + (n_children % 2);
        const auto parents = params.selection == SelectionMethod::Sus
                                 ? sus_select(fit, n_parents, rng)
                                 : tournament_select(fit, n_parents, params.tournament_k, rng);

        Population next;
        next.generation = population.generation + 1;
        next.members.reserve(size);
        next.members.push_back(population.members[elite]);
        for (std::size_t p = 0; p + 1 < parents.size() && next.members.size() < size; p += 2) {
            auto [c1, c2] = crossover(population.members[parents[p]].genome,
                                      population.members[parents[p + 1]].genome, params.crossover_rate, rng);
            for (auto* c : {&c1, &c2}) {
                if (next.members.size() >= size) break;
                next.members.push_back(problem.evaluate(mutate(std::move(*c), x, constraints, schema, params, rng),
                                                        params));
            }
        }
        population = std::move(next);
        ++result.generations_run;
        track(population);

        const bool improved = population.members[best_member(population)].fitness > elite_fitness + kImprovementTolerance;
        if (best_flip) {
            stall = improved ? 0 : stall + 1;
            if (stall >= params.patience) break;
        }
    }

    result.best = best_flip;
    result.success = best_flip.has_value() && is_feasible(x, best_flip->genome, constraints);
    result.elapsed = std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - t0);
    return {std::move(result), std::move(population)};
}

}  // namespace cfloop
