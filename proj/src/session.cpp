#include "cfloop/session.hpp"

#include <chrono>

#include <fmt/format.h>

#include "cfloop/error.hpp"

namespace cfloop {

std::string_view to_string(InitMethod m) noexcept { return m == InitMethod::Knn ? "knn" : "synthetic"; }

std::string_view to_string(WarmStartStrategy s) noexcept {
    return s == WarmStartStrategy::FixViolators ? "fix" : "random";
}

std::string_view to_string(UpdateMethod m) noexcept { return m == UpdateMethod::Baseline ? "baseline" : "incremental"; }

std::string_view to_string(SessionStatus s) noexcept {
    switch (s) {
        case SessionStatus::Active: return "active";
        case SessionStatus::Accepted: return "accepted";
        case SessionStatus::Exhausted: return "exhausted";
    }
    return "?";
}

InitMethod parse_init_method(std::string_view s) {
    if (s == "knn") return InitMethod::Knn;
    if (s == "synthetic") return InitMethod::Synthetic;
    throw Error(ErrorCode::InvalidArgument, fmt::format("unknown init method '{}' (knn|synthetic)", s));
}

WarmStartStrategy parse_strategy(std::string_view s) {
    if (s == "fix") return WarmStartStrategy::FixViolators;
    if (s == "random") return WarmStartStrategy::RandomRestart;
    throw Error(ErrorCode::InvalidArgument, fmt::format("unknown warm-start strategy '{}' (fix|random)", s));
}

UpdateMethod parse_method(std::string_view s) {
    if (s == "baseline") return UpdateMethod::Baseline;
    if (s == "incremental") return UpdateMethod::Incremental;
    throw Error(ErrorCode::InvalidArgument, fmt::format("unknown method '{}' (baseline|incremental)", s));
}

ExplainContext::ExplainContext(Dataset train, std::shared_ptr<const Classifier> model)
    : train_(std::move(train)), model_(std::move(model)) {
    if (!model_) throw Error(ErrorCode::InvalidArgument, "explain context needs a model");
    if (train_.empty()) throw Error(ErrorCode::EmptyInput, "explain context needs training rows");
    if (model_->num_features() != train_.schema.size())
        throw Error(ErrorCode::SchemaMismatch, fmt::format("model expects {} features, dataset has {}",
                                                           model_->num_features(), train_.schema.size()));
    weights_ = compute_weights(normalize(train_));
    for (int cls = 0; cls < 2; ++cls) {
        try {
            indexes_[static_cast<std::size_t>(cls)] = build_kd_index(train_, *model_, cls);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::NoOppositeClass) throw;
        }
    }
}

const KdIndex& ExplainContext::index(int cls) const {
    if (cls < 0 || cls > 1) throw Error(ErrorCode::InvalidArgument, "class must be 0 or 1");
    const auto& idx = indexes_[static_cast<std::size_t>(cls)];
    if (!idx) throw Error(ErrorCode::NoOppositeClass, fmt::format("no training row is predicted as class {}", cls));
    return *idx;
}

Population initial_population(const ExplainContext& ctx, const Instance& x, const ConstraintSet& constraints,
                              const GaParams& params, InitMethod init, Rng& rng) {
    if (init == InitMethod::Synthetic) return init_synthetic(x, ctx.schema(), constraints, params, rng);
    const int target = 1 - ctx.model().predict(x);
    return init_knn(x, ctx.index(target), constraints, ctx.schema(), params, rng);
}

Population warm_start(const Population& pop, const Instance& x, const ConstraintSet& constraints,
                      const FeatureSchema& schema, const GaParams& params, WarmStartStrategy strategy, Rng& rng) {
    if (strategy == WarmStartStrategy::RandomRestart) {
        auto fresh = init_synthetic(x, schema, constraints, params, rng);
        fresh.generation = pop.generation;
        return fresh;
    }
    Population out = pop;
    for (auto& m : out.members)
        if (!is_feasible(x, m.genome, constraints)) m.genome = repair(x, std::move(m.genome), constraints);
    return out;
}

SessionState start_session(std::shared_ptr<const ExplainContext> context, Instance x, ConstraintSet initial,
                           GaParams params, InitMethod init, WarmStartStrategy strategy) {
    if (!context) throw Error(ErrorCode::InvalidArgument, "session needs an explain context");
    params.validate();
    const auto& schema = context->schema();
    schema.validate(x);
    for (const auto& [feature, c] : initial) validate_constraint(feature, c, schema);
    if (context->model().predict(x) == kFavorableClass)
        throw Error(ErrorCode::FavorableInstance, "instance already receives the favorable prediction");

    SessionState s;
    s.rng.seed(params.seed);
    s.population = initial_population(*context, x, initial, params, init, s.rng);
    s.context = std::move(context);
    s.instance = std::move(x);
    s.constraints = std::move(initial);
    s.params = params;
    s.init = init;
    s.strategy = strategy;
    return s;
}

namespace {

void require_active(const SessionState& s, std::string_view op) {
    if (s.status != SessionStatus::Active)
        throw Error(ErrorCode::InvalidState, fmt::format("cannot {} a session that is {}", op, to_string(s.status)));
}

}  // namespace

std::pair<SearchResult, SessionState> propose(const SessionState& s) {
    require_active(s, "propose on");
    SessionState next = s;
    const SearchProblem problem(next.context->schema(), next.context->model(), next.context->weights(), next.instance);
    auto [result, pop] = evolve(problem, std::move(next.population), next.constraints, next.params, next.rng);
    next.population = std::move(pop);
    next.history.push_back({next.iteration, next.constraints, result});
    return {std::move(result), std::move(next)};
}

SessionState update_constraints(const SessionState& s, const UpdateBatch& batch) {
    require_active(s, "update constraints of");
    SessionState next = s;
    next.constraints = apply_batch(s.constraints, batch, s.context->schema());
    next.population =
        warm_start(s.population, s.instance, next.constraints, s.context->schema(), s.params, s.strategy, next.rng);
    ++next.iteration;
    return next;
}

SessionState update_constraints(const SessionState& s, const ConstraintUpdate& update) {
    return update_constraints(s, UpdateBatch{update});
}

SessionState accept(const SessionState& s) {
    require_active(s, "accept");
    if (s.history.empty()) throw Error(ErrorCode::InvalidState, "nothing has been proposed yet");
    const auto& last = s.history.back();
    if (!last.result.success) throw Error(ErrorCode::InvalidState, "the latest proposal found no counterfactual");
    if (last.iteration != s.iteration)
        throw Error(ErrorCode::InvalidState, "constraints changed since the latest proposal");
    SessionState next = s;
    next.status = SessionStatus::Accepted;
    next.accepted = last.result.best;
    return next;
}

SessionState close_session(const SessionState& s) {
    require_active(s, "close");
    SessionState next = s;
    next.status = SessionStatus::Exhausted;
    return next;
}

RunMetrics step_metrics(const ExplainContext& ctx, const Instance& x, const SearchResult& result, double elapsed_ms,
                        const GaParams& params) {
    RunMetrics m;
    m.elapsed_ms = elapsed_ms;
    m.generations = result.generations_run;
    m.found = result.success;
    if (result.success) {
        const auto xn = normalize(x, ctx.schema());
        const auto cn = normalize(result.best->genome, ctx.schema());
        m.proximity = proximity(xn, cn, ctx.weights(), ctx.schema());
        m.sparsity = sparsity(xn, cn, params.epsilon, ctx.schema());
    }
    return m;
}

std::vector<StepOutcome> run_sequence(std::shared_ptr<const ExplainContext> context, const Instance& x,
                                      const std::vector<UpdateBatch>& sequence, const GaParams& params,
                                      UpdateMethod method, WarmStartStrategy strategy, InitMethod init) {
    using clock = std::chrono::steady_clock;
    auto ms_since = [](clock::time_point t0) {
        return std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    };
    const auto& ctx = *context;
    const std::size_t steps = std::max<std::size_t>(1, sequence.size());
    std::vector<StepOutcome> out;
    out.reserve(steps);

    if (method == UpdateMethod::Baseline) {
        params.validate();
        const SearchProblem problem(ctx.schema(), ctx.model(), ctx.weights(), x);
        if (ctx.model().predict(x) == kFavorableClass)
            throw Error(ErrorCode::FavorableInstance, "instance already receives the favorable prediction");
        Rng rng(params.seed);
        ConstraintSet constraints;
        for (std::size_t step = 0; step < steps; ++step) {
            const auto t0 = clock::now();
            if (!sequence.empty()) constraints = apply_batch(constraints, sequence[step], ctx.schema());
            auto pop = initial_population(ctx, x, constraints, params, init, rng);
            auto [result, final_pop] = evolve(problem, std::move(pop), constraints, params, rng);
            const double ms = ms_since(t0);
            out.push_back({constraints, result, step_metrics(ctx, x, result, ms, params)});
        }
        return out;
    }

    auto t0 = clock::now();
    const ConstraintSet c0 = sequence.empty() ? ConstraintSet{} : apply_batch({}, sequence.front(), ctx.schema());
    SessionState s = start_session(context, x, c0, params, init, strategy);
    for (std::size_t step = 0; step < steps; ++step) {
        if (step > 0) {
            t0 = clock::now();
            s = update_constraints(s, sequence[step]);
        }
        auto [result, next] = propose(s);
        const double ms = ms_since(t0);
        s = std::move(next);
        out.push_back({s.constraints, result, step_metrics(ctx, x, result, ms, params)});
    }
    return out;
}

}  // namespace cfloop
