#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cfloop/constraints.hpp"
#include "cfloop/data.hpp"
#include "cfloop/kd_index.hpp"
#include "cfloop/model.hpp"
#include "cfloop/rng.hpp"

namespace cfloop {

enum class SelectionMethod { Sus, Tournament };

struct GaParams {
    std::size_t population_size = 50;
    std::size_t knn_k = 50;
    std::size_t max_generations = 50;
    std::size_t patience = 3;
    double crossover_rate = 0.8;
    double mutation_rate = 0.2;   // per feature
    double mutation_scale = 0.1;  // fraction of the feature's normalized range
    double lambda1 = 0.2;         // proximity
    double lambda2 = 0.2;         // sparsity
    double lambda3 = 1.0;         // prediction
    double alpha = 1.0;           // reward for a flip
    double beta = 1.0;            // penalty otherwise
    double epsilon = 1e-5;        // changed-feature threshold, normalized units
    SelectionMethod selection = SelectionMethod::Sus;
    std::size_t tournament_k = 2;
    std::uint64_t seed = 0;

    /// Throws InvalidArgument on any violated invariant.
    void validate() const;
};

[[nodiscard]] nlohmann::json params_to_json(const GaParams& p);
/// Overlays the keys present in `j` onto `base`; unknown keys are rejected.
[[nodiscard]] GaParams params_from_json(const nlohmann::json& j, GaParams base = {});

struct Candidate {
    Instance genome;
    double fitness = 0.0;
    bool flips = false;

    friend bool operator==(const Candidate&, const Candidate&) = default;
};

struct Population {
    std::vector<Candidate> members;
    std::size_t generation = 0;

    [[nodiscard]] std::size_t size() const noexcept { return members.size(); }
    friend bool operator==(const Population&, const Population&) = default;
};

struct SearchResult {
    std::optional<Candidate> best;
    std::size_t generations_run = 0;
    bool success = false;
    std::chrono::nanoseconds elapsed{0};
};

/// The fixed context of one explanation: the instance under explanation and
/// everything its candidates are scored against. Holds non-owning pointers;
/// the schema and model must outlive it.
class SearchProblem {
public:
    SearchProblem(const FeatureSchema& schema, const Classifier& model, FeatureWeights weights, Instance x);

    [[nodiscard]] const FeatureSchema& schema() const noexcept { return *schema_; }
    [[nodiscard]] const Classifier& model() const noexcept { return *model_; }
    [[nodiscard]] const FeatureWeights& weights() const noexcept { return weights_; }
    [[nodiscard]] const Instance& x() const noexcept { return x_; }
    [[nodiscard]] const Instance& x_normalized() const noexcept { return x_norm_; }
    [[nodiscard]] int x_label() const noexcept { return x_label_; }

    [[nodiscard]] Candidate evaluate(Instance genome, const GaParams& params) const;

private:
    const FeatureSchema* schema_;
    const Classifier* model_;
    FeatureWeights weights_;
    Instance x_;
    Instance x_norm_;
    double weight_total_;
    int x_label_;
};

/// alpha when the model's decision on `cand` differs from `x`, else -beta.
[[nodiscard]] double l_pred(const Classifier& model, const Instance& x, const Instance& cand, const GaParams& params);

/// -lambda1 * weighted mean |diff| - lambda2 * #(|diff| > eps) + lambda3 * l_pred,
/// differences taken in normalized space with the overlap metric on
/// categorical features. Higher is better.
[[nodiscard]] double fitness(const Instance& x, const Instance& cand, const FeatureWeights& weights,
                             const FeatureSchema& schema, const Classifier& model, const GaParams& params);

/// Nearest opposite-class neighbours of x, repaired under C, padded with
/// mutated copies up to population_size.
[[nodiscard]] Population init_knn(const Instance& x, const KdIndex& index, const ConstraintSet& constraints,
                                  const FeatureSchema& schema, const GaParams& params, Rng& rng);

/// Copies of x with uniform perturbations (numeric: +-mutation_scale of the
/// range; categorical: uniform resample), repaired under C.
[[nodiscard]] Population init_synthetic(const Instance& x, const FeatureSchema& schema,
                                        const ConstraintSet& constraints, const GaParams& params, Rng& rng);

/// Stochastic universal sampling. Returns indices into `fitness`. Values are
/// shifted by (min - 1e-9) before shares are taken.
[[nodiscard]] std::vector<std::size_t> sus_select(std::span<const double> fitness, std::size_t n, Rng& rng);

/// Each pick is the argmax of k distinct members drawn uniformly; ties go
/// to the lower index. k = population size always yields the global best.
[[nodiscard]] std::vector<std::size_t> tournament_select(std::span<const double> fitness, std::size_t n,
                                                         std::size_t k, Rng& rng);

/// Uniform crossover applied with probability `rate`; each feature is
/// swapped independently with probability 1/2.
[[nodiscard]] std::pair<Instance, Instance> crossover(const Instance& a, const Instance& b, double rate, Rng& rng);

/// Mutation without repair. Numeric: Gaussian noise with sd mutation_scale
/// times the feature range, clamped to the schema domain. Categorical:
/// uniform pick among the other categories.
[[nodiscard]] Instance perturb(Instance cand, const FeatureSchema& schema, const GaParams& params, Rng& rng);

/// perturb followed by repair(x, ., C); the result is always feasible.
[[nodiscard]] Instance mutate(Instance cand, const Instance& x, const ConstraintSet& constraints,
                              const FeatureSchema& schema, const GaParams& params, Rng& rng);

/// Runs generations of evaluate -> select -> crossover/mutate/repair with
/// keep-best-1 elitism. Once a flipping candidate exists, stops after
/// `patience` generations without a best-fitness gain above 1e-9; otherwise
/// runs to max_generations. Returns the best flipping candidate seen and the
/// final population for warm starts.
[[nodiscard]] std::pair<SearchResult, Population> evolve(const SearchProblem& problem, Population population,
                                                         const ConstraintSet& constraints, const GaParams& params,
                                                         Rng& rng);

inline constexpr double kImprovementTolerance = 1e-9;
inline constexpr double kSelectionShift = 1e-9;

}  // namespace cfloop
