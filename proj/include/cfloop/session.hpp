#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include "cfloop/constraints.hpp"
#include "cfloop/data.hpp"
#include "cfloop/ga.hpp"
#include "cfloop/kd_index.hpp"
#include "cfloop/metrics.hpp"
#include "cfloop/model.hpp"

namespace cfloop {

inline constexpr int kFavorableClass = 1;

enum class InitMethod { Knn, Synthetic };
enum class WarmStartStrategy { FixViolators, RandomRestart };
enum class UpdateMethod { Baseline, Incremental };
enum class SessionStatus { Active, Accepted, Exhausted };

std::string_view to_string(InitMethod m) noexcept;
std::string_view to_string(WarmStartStrategy s) noexcept;
std::string_view to_string(UpdateMethod m) noexcept;
std::string_view to_string(SessionStatus s) noexcept;
InitMethod parse_init_method(std::string_view s);
WarmStartStrategy parse_strategy(std::string_view s);
UpdateMethod parse_method(std::string_view s);

/// Read-only state shared by every explanation against one model and
/// training set: the schema, the model, proximity weights (computed on the
/// normalized training rows) and one neighbour index per predicted class.
class ExplainContext {
public:
    ExplainContext(Dataset train, std::shared_ptr<const Classifier> model);

    [[nodiscard]] const FeatureSchema& schema() const noexcept { return train_.schema; }
    [[nodiscard]] const Classifier& model() const noexcept { return *model_; }
    [[nodiscard]] const std::shared_ptr<const Classifier>& model_ptr() const noexcept { return model_; }
    [[nodiscard]] const Dataset& train() const noexcept { return train_; }
    [[nodiscard]] const FeatureWeights& weights() const noexcept { return weights_; }
    /// Throws NoOppositeClass when no training row is predicted as `cls`.
    [[nodiscard]] const KdIndex& index(int cls) const;

private:
    Dataset train_;
    std::shared_ptr<const Classifier> model_;
    FeatureWeights weights_;
    std::array<std::optional<KdIndex>, 2> indexes_;
};

struct HistoryEntry {
    std::size_t iteration = 0;      // constraint-set version the search ran under
    ConstraintSet constraints;
    SearchResult result;
};

/// Value-semantic session state. Operations return a new state and leave
/// their input untouched, so callers can keep snapshots.
struct SessionState {
    std::shared_ptr<const ExplainContext> context;
    Instance instance;
    ConstraintSet constraints;
    Population population;
    std::size_t iteration = 0;  // number of constraint updates applied
    std::vector<HistoryEntry> history;
    SessionStatus status = SessionStatus::Active;
    std::optional<Candidate> accepted;
    GaParams params;
    InitMethod init = InitMethod::Knn;
    WarmStartStrategy strategy = WarmStartStrategy::FixViolators;
    Rng rng;
};

/// Errors: FavorableInstance when the model already predicts the favorable
/// class for x; NoOppositeClass when knn init has nothing to draw from;
/// constraint errors for an invalid C_0.
[[nodiscard]] SessionState start_session(std::shared_ptr<const ExplainContext> context, Instance x,
                                         ConstraintSet initial, GaParams params, InitMethod init,
                                         WarmStartStrategy strategy);

/// Evolves the current population and appends the result to history.
/// InvalidState unless Active.
[[nodiscard]] std::pair<SearchResult, SessionState> propose(const SessionState& s);

/// Applies the batch atomically, then warm-starts the population.
[[nodiscard]] SessionState update_constraints(const SessionState& s, const UpdateBatch& batch);
[[nodiscard]] SessionState update_constraints(const SessionState& s, const ConstraintUpdate& update);

/// Requires the latest proposal to have succeeded under the current
/// constraint set. InvalidState otherwise.
[[nodiscard]] SessionState accept(const SessionState& s);

/// Ends an Active session without an accepted counterfactual.
[[nodiscard]] SessionState close_session(const SessionState& s);

/// Warm start of a population under a new constraint set.
[[nodiscard]] Population warm_start(const Population& pop, const Instance& x, const ConstraintSet& constraints,
                                    const FeatureSchema& schema, const GaParams& params, WarmStartStrategy strategy,
                                    Rng& rng);

/// Initial population for x under C.
[[nodiscard]] Population initial_population(const ExplainContext& ctx, const Instance& x,
                                            const ConstraintSet& constraints, const GaParams& params, InitMethod init,
                                            Rng& rng);

/// Metrics of one search step: proximity and sparsity are taken on the
/// best candidate in normalized space.
[[nodiscard]] RunMetrics step_metrics(const ExplainContext& ctx, const Instance& x, const SearchResult& result,
                                      double elapsed_ms, const GaParams& params);

struct StepOutcome {
    ConstraintSet constraints;
    SearchResult result;
    RunMetrics metrics;
};

/// Scripted user: the first batch forms C_0, each further batch is one
/// update followed by a proposal. Baseline re-initializes from scratch under
/// the cumulative constraint set at every step; Incremental warm-starts the
/// previous population. Step elapsed time covers initialization or warm
/// start plus the search. The random stream is seeded from params.seed.
[[nodiscard]] std::vector<StepOutcome> run_sequence(std::shared_ptr<const ExplainContext> context, const Instance& x,
                                                    const std::vector<UpdateBatch>& sequence, const GaParams& params,
                                                    UpdateMethod method, WarmStartStrategy strategy,
                                                    InitMethod init = InitMethod::Knn);

}  // namespace cfloop
