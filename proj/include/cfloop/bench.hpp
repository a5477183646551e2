#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cfloop/constraints.hpp"
#include "cfloop/data.hpp"
#include "cfloop/ga.hpp"
#include "cfloop/metrics.hpp"
#include "cfloop/model.hpp"
#include "cfloop/session.hpp"

namespace cfloop {

inline constexpr double kDefaultSplitRatio = 0.8;
inline constexpr std::size_t kDefaultMaxInstances = 500;

/// A scripted constraint sequence plus how to run it.
struct Scenario {
    std::string name;
    std::string dataset;
    UpdateMethod method = UpdateMethod::Incremental;
    WarmStartStrategy strategy = WarmStartStrategy::FixViolators;
    std::size_t runs = 5;
    std::uint64_t seed = 0;
    std::vector<UpdateBatch> sequence;
    std::optional<nlohmann::json> params;  // GA parameter overrides
};

/// {"name", "dataset"?, "method"?, "strategy"?, "runs"?, "seed"?, "params"?,
///  "sequence": [[update, ...], ...]} with updates in the constraint wire format.
[[nodiscard]] Scenario parse_scenario(const nlohmann::json& j, const FeatureSchema& schema);
[[nodiscard]] Scenario load_scenario(const std::filesystem::path& path, const FeatureSchema& schema);

/// Constraint set after every batch of the sequence has been applied.
[[nodiscard]] ConstraintSet final_constraints(const Scenario& s, const FeatureSchema& schema);

/// Loaded dataset and model with the train/test partition the model was
/// trained on, and the explain context over the training part.
struct Workspace {
    Dataset full;
    Dataset train;
    Dataset test;
    std::shared_ptr<const Classifier> model;
    std::shared_ptr<const ExplainContext> context;
    std::vector<std::size_t> negatives;  // test-row indices predicted unfavorable

    [[nodiscard]] const std::string& name() const noexcept { return full.schema.name(); }
};

/// Uses the split recorded in the model metadata, else the given defaults.
[[nodiscard]] Workspace make_workspace(Dataset full, std::shared_ptr<const Classifier> model,
                                       double default_ratio = kDefaultSplitRatio, std::uint64_t default_seed = 0);
[[nodiscard]] Workspace open_workspace(const std::filesystem::path& csv, const std::filesystem::path& schema,
                                       const std::filesystem::path& model);

struct BenchOptions {
    std::optional<std::size_t> max_instances = kDefaultMaxInstances;  // nullopt: all negatives
    unsigned workers = 0;  // 0: CFLOOP_WORKERS or hardware concurrency
    bool timing = true;    // false writes elapsed_ms as 0 so output is byte-stable
    GaParams params;
    InitMethod init = InitMethod::Knn;
};

/// Worker count from CFLOOP_WORKERS, falling back to hardware concurrency.
[[nodiscard]] unsigned default_workers();

/// Negative test instances to explain, subsampled with `seed` when capped.
[[nodiscard]] std::vector<std::size_t> select_instances(const Workspace& ws, const BenchOptions& opts,
                                                        std::uint64_t seed);

/// One CSV row: one search step of one (arm, run, instance).
struct StepRecord {
    std::string dataset;
    std::string method;  // arm label
    std::uint64_t seed = 0;  // run seed: scenario seed + run index
    std::size_t instance_id = 0;
    std::size_t step = 0;
    RunMetrics metrics;

    friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

struct Arm {
    std::string label;
    std::vector<UpdateBatch> sequence;
    UpdateMethod method = UpdateMethod::Incremental;
    WarmStartStrategy strategy = WarmStartStrategy::FixViolators;
};

struct BenchRun {
    std::vector<StepRecord> records;  // sorted by (arm, seed, instance, step)
    std::vector<std::string> errors;
};

/// Runs every arm for runs x instances. The GA seed of (run r, instance i)
/// is derive_seed({seed + r, i}) for every arm, so arms share seeds.
[[nodiscard]] BenchRun run_arms(const Workspace& ws, const std::vector<Arm>& arms,
                                const std::vector<std::size_t>& instances, std::size_t runs, std::uint64_t seed,
                                const BenchOptions& opts);

inline constexpr std::string_view kMetricsHeader =
    "dataset,method,seed,instance_id,step,elapsed_ms,generations,found,proximity,sparsity";

[[nodiscard]] std::string metrics_csv(const std::vector<StepRecord>& records);
[[nodiscard]] std::vector<StepRecord> parse_metrics_csv(std::string_view text);

/// Aggregates of one arm. Each (run, instance) contributes its sequence
/// totals: time summed over steps, generations per step and cumulative,
/// and found/proximity/sparsity of the final step. Per run these are
/// averaged over instances (proximity/sparsity over found instances); the
/// summaries are mean and std across runs.
struct ArmSummary {
    std::string label;
    std::size_t runs = 0;
    std::size_t instances = 0;
    std::vector<double> time_ms, gens, gens_cum, cf_rate, proximity, sparsity;  // per-run samples
    Summary time_summary, gens_summary, gens_cum_summary, cf_summary;
    std::optional<Summary> proximity_summary, sparsity_summary;
};

[[nodiscard]] std::vector<ArmSummary> summarize_arms(const std::vector<StepRecord>& records,
                                                     const std::vector<std::string>& labels);

/// Markdown table: Method | Time (ms) | Gens | Gens (cum.) | CFs (%) | Proximity | Sparsity.
[[nodiscard]] std::string markdown_table(const std::vector<ArmSummary>& arms, bool with_gens = true);

struct PValues {
    std::optional<double> time, gens, cf_rate, proximity, sparsity;
};
/// Welch p-values over the per-run samples; absent when either side has
/// fewer than two samples.
[[nodiscard]] PValues compare_arms(const ArmSummary& a, const ArmSummary& b);
[[nodiscard]] std::string pvalue_table(const ArmSummary& a, const ArmSummary& b, const PValues& p);

struct CommandOutput {
    std::string csv;
    std::string markdown;
    std::vector<ArmSummary> summaries;
    std::vector<std::string> errors;
    std::optional<PValues> pvalues;  // warmstart only
};

struct TrainOptions {
    double split_ratio = kDefaultSplitRatio;
    std::uint64_t split_seed = 0;
    std::uint64_t seed = 0;
    ForestParams forest;
    unsigned workers = 0;
};

struct TrainReport {
    std::shared_ptr<RandomForestModel> model;
    std::size_t rows = 0, categorical = 0, numeric = 0, train_rows = 0, test_rows = 0, negatives = 0;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    std::string markdown;
};

[[nodiscard]] TrainReport cmd_train(const Dataset& full, const TrainOptions& opts);

/// One table row per method over all selected negatives x runs.
[[nodiscard]] CommandOutput cmd_explain(const Workspace& ws, const Scenario& sc, const std::vector<UpdateMethod>& methods,
                                        const BenchOptions& opts);
/// Incremental search with FixViolators and RandomRestart on shared seeds,
/// plus Welch p-values per metric.
[[nodiscard]] CommandOutput cmd_warmstart_ablation(const Workspace& ws, const Scenario& sc, const BenchOptions& opts);
/// I->R->D, R->I->D and D->I->R orderings of the scenario's final constraint
/// set, one batch per constraint type.
[[nodiscard]] CommandOutput cmd_ordering(const Workspace& ws, const Scenario& sc, const BenchOptions& opts);

struct SingleConstraintOptions {
    std::optional<Range> range;  // default: middle half of the feature domain
    Sense sense = Sense::IncreaseOnly;
    std::size_t runs = 5;
    std::uint64_t seed = 0;
    UpdateMethod method = UpdateMethod::Incremental;
};

/// Unconstrained reference row plus Immutable-, Range- and Direction-only
/// rows on the same numeric feature.
[[nodiscard]] CommandOutput cmd_single_constraint(const Workspace& ws, std::size_t feature,
                                                  const SingleConstraintOptions& sc, const BenchOptions& opts);

/// The three orderings used by cmd_ordering, exposed for tests.
struct Ordering {
    std::string label;
    std::vector<UpdateBatch> sequence;
};
[[nodiscard]] std::vector<Ordering> constraint_orderings(const ConstraintSet& pool);

}  // namespace cfloop
