#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace cfloop {

enum class FeatureKind { Numeric, Categorical };

struct FeatureSpec {
    std::string name;
    FeatureKind kind = FeatureKind::Numeric;
    // observed domain, numeric only
    double lo = 0.0;
    double hi = 0.0;
    // categorical only; values are stored as indices into this list
    std::vector<std::string> categories;

    [[nodiscard]] bool is_numeric() const noexcept { return kind == FeatureKind::Numeric; }
    [[nodiscard]] bool is_categorical() const noexcept { return kind == FeatureKind::Categorical; }
    [[nodiscard]] std::optional<std::size_t> category_index(std::string_view value) const;

    friend bool operator==(const FeatureSpec&, const FeatureSpec&) = default;
};

/// A d-dimensional feature vector. Numeric features hold their raw value,
/// categorical features hold the category index as a double.
struct Instance {
    std::vector<double> values;

    Instance() = default;
    explicit Instance(std::vector<double> v) : values(std::move(v)) {}
    Instance(std::initializer_list<double> v) : values(v) {}

    [[nodiscard]] std::size_t size() const noexcept { return values.size(); }
    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }

    friend bool operator==(const Instance&, const Instance&) = default;
};

class FeatureSchema {
public:
    FeatureSchema() = default;
    FeatureSchema(std::vector<FeatureSpec> features, std::string label, std::string name = {});

    [[nodiscard]] std::size_t size() const noexcept { return features_.size(); }
    [[nodiscard]] const FeatureSpec& operator[](std::size_t i) const { return features_[i]; }
    [[nodiscard]] const std::vector<FeatureSpec>& features() const noexcept { return features_; }
    [[nodiscard]] const std::string& label() const noexcept { return label_; }
    [[nodiscard]] const std::string& name() const noexcept { return name_; }
    [[nodiscard]] std::optional<std::size_t> index_of(std::string_view feature) const;
    [[nodiscard]] std::size_t numeric_count() const;

    /// Throws SchemaMismatch when `x` has the wrong length, a non-finite
    /// numeric value, or a categorical code outside the category set.
    void validate(const Instance& x) const;

    /// Human-readable value: category name or shortest round-trip number.
    [[nodiscard]] std::string format_value(std::size_t feature, double value) const;

    void set_bounds(std::size_t feature, double lo, double hi);
    [[nodiscard]] bool has_bounds(std::size_t feature) const { return bounds_known_.at(feature); }

    [[nodiscard]] nlohmann::json to_json() const;
    /// Numeric bounds may be omitted in the file; they are then filled from
    /// the data by load_dataset.
    static FeatureSchema from_json(const nlohmann::json& j);
    static FeatureSchema load(const std::filesystem::path& path);

    friend bool operator==(const FeatureSchema&, const FeatureSchema&) = default;

private:
    std::vector<FeatureSpec> features_;
    std::string label_;
    std::string name_;
    std::vector<bool> bounds_known_;
};

struct Dataset {
    FeatureSchema schema;
    std::vector<Instance> rows;
    std::vector<int> labels;

    [[nodiscard]] std::size_t size() const noexcept { return rows.size(); }
    [[nodiscard]] bool empty() const noexcept { return rows.empty(); }
    [[nodiscard]] Dataset subset(const std::vector<std::size_t>& indices) const;
};

struct FeatureWeights {
    std::vector<double> w;

    [[nodiscard]] std::size_t size() const noexcept { return w.size(); }
    double operator[](std::size_t i) const { return w[i]; }
    [[nodiscard]] double total() const;
};

Dataset load_dataset(const std::filesystem::path& csv_path, const std::filesystem::path& schema_path);
/// Parses CSV text against an already-loaded schema. `load_dataset` is a thin wrapper.
Dataset parse_dataset(std::string_view csv_text, FeatureSchema schema);
/// Inverse of parse_dataset: header row of feature names plus the label column.
std::string to_csv(const Dataset& ds);
void write_csv(const Dataset& ds, const std::filesystem::path& path);

std::pair<Dataset, Dataset> train_test_split(const Dataset& ds, double ratio, std::uint64_t seed);

/// 1/MAD per numeric column, falling back to 1/std and then 1. Categorical
/// columns get weight 1.
FeatureWeights compute_weights(const Dataset& ds);

/// Min-max maps numeric values into [0,1] using the schema bounds (clamped);
/// categorical codes pass through.
Instance normalize(const Instance& x, const FeatureSchema& schema);
Dataset normalize(const Dataset& ds);

}  // namespace cfloop
