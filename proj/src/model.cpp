#include "cfloop/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "cfloop/error.hpp"
#include "cfloop/rng.hpp"

namespace cfloop {

using nlohmann::json;

void Classifier::check_arity(const Instance& x) const {
    if (x.size() != num_features())
        throw Error(ErrorCode::SchemaMismatch,
                    fmt::format("model expects {} features, instance has {}", num_features(), x.size()));
}

// ---------------------------------------------------------------------------
// ThresholdModel

ThresholdModel::ThresholdModel(std::size_t num_features, std::size_t feature, double threshold, bool inverted)
    : num_features_(num_features), feature_(feature), threshold_(threshold), inverted_(inverted) {
    if (feature >= num_features)
        throw Error(ErrorCode::InvalidArgument, "threshold feature index out of range");
}

int ThresholdModel::predict(const Instance& x) const {
    check_arity(x);
    const bool above = x[feature_] >= threshold_;
    return (above != inverted_) ? 1 : 0;
}

json ThresholdModel::to_json() const {
    return {{"feature", feature_}, {"threshold", threshold_}, {"inverted", inverted_}};
}

// ---------------------------------------------------------------------------
// DecisionTree

DecisionTree::DecisionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {
    if (nodes_.empty()) throw Error(ErrorCode::InvalidArgument, "a tree needs at least one node");
    const int n = static_cast<int>(nodes_.size());
    for (const auto& node : nodes_) {
        if (node.is_leaf()) continue;
        if (node.left <= 0 || node.left >= n || node.right <= 0 || node.right >= n)
            throw Error(ErrorCode::InvalidArgument, "tree node has a dangling child");
    }
}

int DecisionTree::predict(const Instance& x) const {
    std::size_t at = 0;
    while (!nodes_[at].is_leaf()) {
        const auto& node = nodes_[at];
        const double v = x[static_cast<std::size_t>(node.feature)];
        const bool go_left = node.split == SplitKind::Less ? v < node.value : v == node.value;
        at = static_cast<std::size_t>(go_left ? node.left : node.right);
    }
    return nodes_[at].label;
}

std::size_t DecisionTree::depth() const {
    std::vector<std::pair<int, std::size_t>> stack{{0, 0}};
    std::size_t best = 0;
    while (!stack.empty()) {
        auto [at, d] = stack.back();
        stack.pop_back();
        best = std::max(best, d);
        const auto& node = nodes_[static_cast<std::size_t>(at)];
        if (!node.is_leaf()) {
            stack.emplace_back(node.left, d + 1);
            stack.emplace_back(node.right, d + 1);
        }
    }
    return best;
}

namespace {

json node_to_json(const std::vector<TreeNode>& nodes, int at) {
    const auto& node = nodes[static_cast<std::size_t>(at)];
    if (node.is_leaf()) return {{"label", node.label}};
    return {{"feature", node.feature},
            {"split", node.split == SplitKind::Less ? "lt" : "eq"},
            {"value", node.value},
            {"left", node_to_json(nodes, node.left)},
            {"right", node_to_json(nodes, node.right)}};
}

int node_from_json(const json& j, std::size_t num_features, std::vector<TreeNode>& out, std::size_t depth) {
    if (depth > 256) throw Error(ErrorCode::CorruptModel, "tree nesting too deep");
    const int at = static_cast<int>(out.size());
    out.emplace_back();
    if (j.contains("label")) {
        const int label = j.at("label").get<int>();
        if (label != 0 && label != 1) throw Error(ErrorCode::CorruptModel, "leaf label must be 0 or 1");
        out[static_cast<std::size_t>(at)].label = label;
        return at;
    }
    TreeNode node;
    const auto feature = j.at("feature").get<long long>();
    if (feature < 0 || static_cast<std::size_t>(feature) >= num_features)
        throw Error(ErrorCode::CorruptModel, "split feature out of range");
    node.feature = static_cast<int>(feature);
    const auto split = j.at("split").get<std::string>();
    if (split == "lt")
        node.split = SplitKind::Less;
    else if (split == "eq")
        node.split = SplitKind::Equal;
    else
        throw Error(ErrorCode::CorruptModel, fmt::format("unknown split kind '{}'", split));
    node.value = j.at("value").get<double>();
    node.left = node_from_json(j.at("left"), num_features, out, depth + 1);
    node.right = node_from_json(j.at("right"), num_features, out, depth + 1);
    out[static_cast<std::size_t>(at)] = node;
    return at;
}

}  // namespace

json DecisionTree::to_json() const { return node_to_json(nodes_, 0); }

DecisionTree DecisionTree::from_json(const json& j, std::size_t num_features) {
    std::vector<TreeNode> nodes;
    node_from_json(j, num_features, nodes, 0);
    return DecisionTree(std::move(nodes));
}

// ---------------------------------------------------------------------------
// RandomForestModel

RandomForestModel::RandomForestModel(std::size_t num_features, std::vector<DecisionTree> trees, ForestParams params)
    : num_features_(num_features), trees_(std::move(trees)), params_(params) {
    if (trees_.empty()) throw Error(ErrorCode::InvalidArgument, "a forest needs at least one tree");
}

int RandomForestModel::predict(const Instance& x) const {
    check_arity(x);
    std::size_t ones = 0;
    for (const auto& tree : trees_) ones += static_cast<std::size_t>(tree.predict(x));
    return 2 * ones > trees_.size() ? 1 : 0;
}

std::vector<int> RandomForestModel::votes(const Instance& x) const {
    check_arity(x);
    std::vector<int> out;
    out.reserve(trees_.size());
    for (const auto& tree : trees_) out.push_back(tree.predict(x));
    return out;
}

json RandomForestModel::to_json() const {
    json trees = json::array();
    for (const auto& t : trees_) trees.push_back(t.to_json());
    json params{{"num_trees", params_.num_trees},
                {"max_depth", params_.max_depth},
                {"min_leaf", params_.min_leaf},
                {"bootstrap", params_.bootstrap}};
    if (params_.feature_fraction) params["feature_fraction"] = *params_.feature_fraction;
    return {{"params", std::move(params)}, {"trees", std::move(trees)}};
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct SplitChoice {
    int feature = -1;
    SplitKind kind = SplitKind::Less;
    double value = 0.0;
    double score = -1.0;  // sum over children of (c0^2 + c1^2) / n; larger is purer
};

class TreeBuilder {
public:
    TreeBuilder(const Dataset& ds, const ForestParams& params, std::size_t mtry, Rng rng)
        : ds_(ds), params_(params), mtry_(mtry), rng_(std::move(rng)) {}

    DecisionTree build(std::vector<std::size_t> rows) {
        nodes_.clear();
        grow(rows, 0);
        return DecisionTree(std::move(nodes_));
    }

private:
    static int majority(std::size_t ones, std::size_t total) { return 2 * ones > total ? 1 : 0; }

    std::size_t count_ones(const std::vector<std::size_t>& rows) const {
        std::size_t ones = 0;
        for (auto r : rows) ones += static_cast<std::size_t>(ds_.labels[r]);
        return ones;
    }

    int grow(std::vector<std::size_t>& rows, std::size_t depth) {
        const int at = static_cast<int>(nodes_.size());
        nodes_.emplace_back();
        const std::size_t ones = count_ones(rows);
        nodes_[static_cast<std::size_t>(at)].label = majority(ones, rows.size());
        if (depth >= params_.max_depth || ones == 0 || ones == rows.size() || rows.size() < 2 * params_.min_leaf)
            return at;

        const double n = static_cast<double>(rows.size());
        const double parent = (static_cast<double>(ones) * ones + (n - ones) * (n - ones)) / n;
        SplitChoice best = find_split(rows);
        if (best.feature < 0 || best.score <= parent + 1e-12) return at;

        std::vector<std::size_t> left, right;
        for (auto r : rows) {
            const double v = ds_.rows[r][static_cast<std::size_t>(best.feature)];
            const bool go_left = best.kind == SplitKind::Less ? v < best.value : v == best.value;
            (go_left ? left : right).push_back(r);
        }
        rows.clear();
        rows.shrink_to_fit();

        TreeNode node;
        node.feature = best.feature;
        node.split = best.kind;
        node.value = best.value;
        node.left = grow(left, depth + 1);
        node.right = grow(right, depth + 1);
        node.label = nodes_[static_cast<std::size_t>(at)].label;
        nodes_[static_cast<std::size_t>(at)] = node;
        return at;
    }

    SplitChoice find_split(const std::vector<std::size_t>& rows) {
        const std::size_t d = ds_.schema.size();
        std::vector<std::size_t> features(d);
        std::iota(features.begin(), features.end(), std::size_t{0});
        // partial Fisher-Yates: first mtry entries are the sample
        for (std::size_t i = 0; i < mtry_; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, d - 1);
            std::swap(features[i], features[pick(rng_)]);
        }
        SplitChoice best;
        for (std::size_t k = 0; k < mtry_; ++k) {
            const std::size_t f = features[k];
            if (ds_.schema[f].is_numeric())
                numeric_split(rows, f, best);
            else
                categorical_split(rows, f, best);
        }
        return best;
    }

    static double purity(double c0, double c1) {
        const double n = c0 + c1;
        return n > 0 ? (c0 * c0 + c1 * c1) / n : 0.0;
    }

    void numeric_split(const std::vector<std::size_t>& rows, std::size_t f, SplitChoice& best) {
        scratch_.assign(rows.begin(), rows.end());
        std::sort(scratch_.begin(), scratch_.end(),
                  [&](std::size_t a, std::size_t b) { return ds_.rows[a][f] < ds_.rows[b][f]; });
        const std::size_t n = scratch_.size();
        double total1 = 0;
        for (auto r : scratch_) total1 += ds_.labels[r];
        const double total0 = static_cast<double>(n) - total1;
        double l0 = 0, l1 = 0;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            (ds_.labels[scratch_[i]] ? l1 : l0) += 1.0;
            const std::size_t n_left = i + 1;
            if (n_left < params_.min_leaf || n - n_left < params_.min_leaf) continue;
            const double lo = ds_.rows[scratch_[i]][f];
            const double hi = ds_.rows[scratch_[i + 1]][f];
            if (!(lo < hi)) continue;
            const double score = purity(l0, l1) + purity(total0 - l0, total1 - l1);
            if (score > best.score) {
                double mid = lo + (hi - lo) / 2.0;
                if (!(mid > lo)) mid = hi;
                best = {static_cast<int>(f), SplitKind::Less, mid, score};
            }
        }
    }

    void categorical_split(const std::vector<std::size_t>& rows, std::size_t f, SplitChoice& best) {
        const std::size_t k = ds_.schema[f].categories.size();
        std::vector<double> c0(k, 0.0), c1(k, 0.0);
        double total0 = 0, total1 = 0;
        for (auto r : rows) {
            const auto code = static_cast<std::size_t>(ds_.rows[r][f]);
            if (ds_.labels[r]) {
                c1[code] += 1;
                total1 += 1;
            } else {
                c0[code] += 1;
                total0 += 1;
            }
        }
        for (std::size_t c = 0; c < k; ++c) {
            const double n_left = c0[c] + c1[c];
            const double n_right = total0 + total1 - n_left;
            if (n_left < static_cast<double>(params_.min_leaf) || n_right < static_cast<double>(params_.min_leaf))
                continue;
            const double score = purity(c0[c], c1[c]) + purity(total0 - c0[c], total1 - c1[c]);
            if (score > best.score) best = {static_cast<int>(f), SplitKind::Equal, static_cast<double>(c), score};
        }
    }

    const Dataset& ds_;
    const ForestParams& params_;
    std::size_t mtry_;
    Rng rng_;
    std::vector<TreeNode> nodes_;
    std::vector<std::size_t> scratch_;
};

}  // namespace

std::unique_ptr<RandomForestModel> train_random_forest(const Dataset& train, const ForestParams& params,
                                                       std::uint64_t seed, unsigned workers) {
    if (train.empty()) throw Error(ErrorCode::EmptyInput, "training set is empty");
    const std::size_t ones = static_cast<std::size_t>(std::count(train.labels.begin(), train.labels.end(), 1));
    if (ones == 0 || ones == train.size())
        throw Error(ErrorCode::SingleClass, "training data contains a single class");
    if (params.num_trees == 0) throw Error(ErrorCode::InvalidArgument, "num_trees must be positive");
    if (params.min_leaf == 0) throw Error(ErrorCode::InvalidArgument, "min_leaf must be positive");

    const std::size_t d = train.schema.size();
    std::size_t mtry = params.feature_fraction
                           ? static_cast<std::size_t>(std::lround(*params.feature_fraction * static_cast<double>(d)))
                           : static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(d))));
    mtry = std::clamp<std::size_t>(mtry, 1, d);

    std::vector<DecisionTree> trees(params.num_trees);
    auto build_range = [&](std::size_t begin, std::size_t end) {
        for (std::size_t t = begin; t < end; ++t) {
            Rng rng(derive_seed({seed, t}));
            std::vector<std::size_t> rows(train.size());
            if (params.bootstrap) {
                std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
                for (auto& r : rows) r = pick(rng);
            } else {
                std::iota(rows.begin(), rows.end(), std::size_t{0});
            }
            TreeBuilder builder(train, params, mtry, std::move(rng));
            trees[t] = builder.build(std::move(rows));
        }
    };

    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(params.num_trees)));
    if (workers == 1) {
        build_range(0, params.num_trees);
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (params.num_trees + workers - 1) / workers;
        for (unsigned w = 0; w < workers; ++w) {
            const std::size_t b = w * chunk, e = std::min(params.num_trees, b + chunk);
            if (b < e) pool.emplace_back(build_range, b, e);
        }
        for (auto& th : pool) th.join();
    }

    auto model = std::make_unique<RandomForestModel>(d, std::move(trees), params);
    model->metadata.training_seed = seed;
    return model;
}

double accuracy(const Classifier& model, const Dataset& ds) {
    if (ds.empty()) throw Error(ErrorCode::EmptyInput, "accuracy of an empty dataset");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) hits += model.predict(ds.rows[i]) == ds.labels[i];
    return static_cast<double>(hits) / static_cast<double>(ds.size());
}

std::vector<std::size_t> negative_indices(const Classifier& model, const Dataset& test) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < test.size(); ++i)
        if (model.predict(test.rows[i]) == 0) out.push_back(i);
    return out;
}

std::vector<Instance> negatives(const Classifier& model, const Dataset& test) {
    std::vector<Instance> out;
    for (auto i : negative_indices(model, test)) out.push_back(test.rows[i]);
    return out;
}

// ---------------------------------------------------------------------------
// Serialization

json model_to_json(const Classifier& model) {
    json meta{{"training_seed", model.metadata.training_seed}};
    if (model.metadata.split_ratio) meta["split_ratio"] = *model.metadata.split_ratio;
    if (model.metadata.split_seed) meta["split_seed"] = *model.metadata.split_seed;
    json j{{"format", "cfloop-model"},
           {"version", kModelFormatVersion},
           {"kind", std::string(model.kind())},
           {"num_features", model.num_features()},
           {"metadata", std::move(meta)},
           {"model", model.to_json()}};
    return j;
}

std::shared_ptr<Classifier> model_from_json(const json& j) {
    try {
        if (!j.is_object() || j.value("format", std::string{}) != "cfloop-model")
            throw Error(ErrorCode::CorruptModel, "not a cfloop model file");
        const int version = j.at("version").get<int>();
        if (version != kModelFormatVersion)
            throw Error(ErrorCode::VersionMismatch,
                        fmt::format("model format version {} (expected {})", version, kModelFormatVersion));
        const auto kind = j.at("kind").get<std::string>();
        const auto d = j.at("num_features").get<std::size_t>();
        if (d == 0) throw Error(ErrorCode::CorruptModel, "num_features must be positive");
        const auto& body = j.at("model");
        std::shared_ptr<Classifier> model;
        if (kind == "threshold") {
            model = std::make_shared<ThresholdModel>(d, body.at("feature").get<std::size_t>(),
                                                     body.at("threshold").get<double>(),
                                                     body.at("inverted").get<bool>());
        } else if (kind == "random_forest") {
            ForestParams params;
            const auto& jp = body.at("params");
            params.num_trees = jp.at("num_trees").get<std::size_t>();
            params.max_depth = jp.at("max_depth").get<std::size_t>();
            params.min_leaf = jp.at("min_leaf").get<std::size_t>();
            params.bootstrap = jp.at("bootstrap").get<bool>();
            if (jp.contains("feature_fraction")) params.feature_fraction = jp.at("feature_fraction").get<double>();
            std::vector<DecisionTree> trees;
            for (const auto& jt : body.at("trees")) trees.push_back(DecisionTree::from_json(jt, d));
            if (trees.size() != params.num_trees)
                throw Error(ErrorCode::CorruptModel, "tree count does not match params");
            model = std::make_shared<RandomForestModel>(d, std::move(trees), params);
        } else {
            throw Error(ErrorCode::CorruptModel, fmt::format("unknown model kind '{}'", kind));
        }
        const auto& meta = j.at("metadata");
        model->metadata.training_seed = meta.at("training_seed").get<std::uint64_t>();
        if (meta.contains("split_ratio")) model->metadata.split_ratio = meta.at("split_ratio").get<double>();
        if (meta.contains("split_seed")) model->metadata.split_seed = meta.at("split_seed").get<std::uint64_t>();
        return model;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::CorruptModel, fmt::format("malformed model: {}", e.what()));
    } catch (const Error& e) {
        if (e.code() == ErrorCode::InvalidArgument) throw Error(ErrorCode::CorruptModel, e.what());
        throw;
    }
}

void save_model(const Classifier& model, const std::filesystem::path& path) {
    if (path.empty()) throw Error(ErrorCode::Io, "empty model path");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, fmt::format("cannot write '{}'", path.string()));
    out << model_to_json(model).dump() << '\n';
    if (!out) throw Error(ErrorCode::Io, fmt::format("write to '{}' failed", path.string()));
}

std::shared_ptr<Classifier> load_model(const std::filesystem::path& path) {
    if (path.empty()) throw Error(ErrorCode::Io, "empty model path");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, fmt::format("cannot open '{}'", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    json j;
    try {
        j = json::parse(ss.str());
    } catch (const json::exception& e) {
        throw Error(ErrorCode::CorruptModel, fmt::format("model file '{}' does not parse: {}", path.string(), e.what()));
    }
    return model_from_json(j);
}

}  // namespace cfloop
