#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cfloop/data.hpp"

namespace cfloop {

struct ModelMetadata {
    std::uint64_t training_seed = 0;
    // train/test split used when the model was trained, so downstream
    // commands can rebuild the same partitions
    std::optional<double> split_ratio;
    std::optional<std::uint64_t> split_seed;
};

/// Black-box binary classifier. Implementations are immutable after
/// construction, so predict() is reentrant.
class Classifier {
public:
    virtual ~Classifier() = default;

    /// Throws SchemaMismatch when `x` does not have num_features() values.
    [[nodiscard]] virtual int predict(const Instance& x) const = 0;
    [[nodiscard]] virtual std::string_view kind() const = 0;
    [[nodiscard]] virtual std::size_t num_features() const = 0;
    [[nodiscard]] virtual nlohmann::json to_json() const = 0;

    ModelMetadata metadata;

protected:
    void check_arity(const Instance& x) const;
};

/// predict(x) = 1 iff (x[feature] >= threshold) xor inverted.
class ThresholdModel final : public Classifier {
public:
    ThresholdModel(std::size_t num_features, std::size_t feature, double threshold, bool inverted = false);

    [[nodiscard]] int predict(const Instance& x) const override;
    [[nodiscard]] std::string_view kind() const override { return "threshold"; }
    [[nodiscard]] std::size_t num_features() const override { return num_features_; }
    [[nodiscard]] nlohmann::json to_json() const override;

    [[nodiscard]] std::size_t feature() const noexcept { return feature_; }
    [[nodiscard]] double threshold() const noexcept { return threshold_; }
    [[nodiscard]] bool inverted() const noexcept { return inverted_; }

private:
    std::size_t num_features_;
    std::size_t feature_;
    double threshold_;
    bool inverted_;
};

enum class SplitKind { Less, Equal };

// Flat node storage. Internal nodes route to `left` when
// x[feature] < value (Less) or x[feature] == value (Equal).
struct TreeNode {
    int feature = -1;
    SplitKind split = SplitKind::Less;
    double value = 0.0;
    int left = -1;
    int right = -1;
    int label = 0;

    [[nodiscard]] bool is_leaf() const noexcept { return feature < 0; }
};

class DecisionTree {
public:
    DecisionTree() = default;
    explicit DecisionTree(std::vector<TreeNode> nodes);

    [[nodiscard]] int predict(const Instance& x) const;
    [[nodiscard]] const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
    [[nodiscard]] std::size_t depth() const;

    /// Nested {feature, split, value, left, right} / {label} objects.
    [[nodiscard]] nlohmann::json to_json() const;
    static DecisionTree from_json(const nlohmann::json& j, std::size_t num_features);

private:
    std::vector<TreeNode> nodes_;
};

struct ForestParams {
    std::size_t num_trees = 100;
    std::size_t max_depth = 8;
    std::size_t min_leaf = 2;
    // fraction of features tried per split; unset means sqrt(d)
    std::optional<double> feature_fraction;
    bool bootstrap = true;
};

class RandomForestModel final : public Classifier {
public:
    RandomForestModel(std::size_t num_features, std::vector<DecisionTree> trees, ForestParams params = {});

    /// Majority vote; ties go to class 0.
    [[nodiscard]] int predict(const Instance& x) const override;
    [[nodiscard]] std::string_view kind() const override { return "random_forest"; }
    [[nodiscard]] std::size_t num_features() const override { return num_features_; }
    [[nodiscard]] nlohmann::json to_json() const override;

    [[nodiscard]] std::vector<int> votes(const Instance& x) const;
    [[nodiscard]] const std::vector<DecisionTree>& trees() const noexcept { return trees_; }
    [[nodiscard]] const ForestParams& params() const noexcept { return params_; }

private:
    std::size_t num_features_;
    std::vector<DecisionTree> trees_;
    ForestParams params_;
};

/// CART with Gini impurity, bootstrap rows and per-split feature sampling.
/// Each tree draws from its own stream derived from `seed`, so the result
/// does not depend on how trees are scheduled across workers.
std::unique_ptr<RandomForestModel> train_random_forest(const Dataset& train, const ForestParams& params,
                                                       std::uint64_t seed, unsigned workers = 1);

[[nodiscard]] double accuracy(const Classifier& model, const Dataset& ds);

/// Test rows predicted as class 0, original order preserved.
std::vector<Instance> negatives(const Classifier& model, const Dataset& test);
std::vector<std::size_t> negative_indices(const Classifier& model, const Dataset& test);

inline constexpr int kModelFormatVersion = 1;

void save_model(const Classifier& model, const std::filesystem::path& path);
std::shared_ptr<Classifier> load_model(const std::filesystem::path& path);
std::shared_ptr<Classifier> model_from_json(const nlohmann::json& j);
nlohmann::json model_to_json(const Classifier& model);

}  // namespace cfloop
