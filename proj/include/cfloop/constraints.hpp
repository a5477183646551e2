#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "cfloop/data.hpp"

namespace cfloop {

struct Immutable {
    friend bool operator==(const Immutable&, const Immutable&) = default;
};

struct Range {
    double lo = 0.0;
    double hi = 0.0;
    friend bool operator==(const Range&, const Range&) = default;
};

enum class Sense { IncreaseOnly, DecreaseOnly };

struct Direction {
    Sense sense = Sense::IncreaseOnly;
    friend bool operator==(const Direction&, const Direction&) = default;
};

using Constraint = std::variant<Immutable, Range, Direction>;

enum class ConstraintType { Immutable, Range, Direction };

[[nodiscard]] ConstraintType type_of(const Constraint& c) noexcept;
[[nodiscard]] std::string_view to_string(ConstraintType t) noexcept;

/// Does `value` (candidate) satisfy `c` given the original value?
[[nodiscard]] bool satisfies(const Constraint& c, double original, double value) noexcept;
/// Minimal per-feature projection onto the feasible set of `c`.
[[nodiscard]] double project(const Constraint& c, double original, double value) noexcept;

enum class UpdateAction { Add, Delete, Modify };

struct ConstraintUpdate {
    UpdateAction action = UpdateAction::Add;
    std::size_t feature = 0;
    std::optional<Constraint> constraint;  // Add / Modify only

    static ConstraintUpdate add(std::size_t feature, Constraint c) { return {UpdateAction::Add, feature, c}; }
    static ConstraintUpdate modify(std::size_t feature, Constraint c) { return {UpdateAction::Modify, feature, c}; }
    static ConstraintUpdate remove(std::size_t feature) { return {UpdateAction::Delete, feature, std::nullopt}; }

    friend bool operator==(const ConstraintUpdate&, const ConstraintUpdate&) = default;
};

using UpdateBatch = std::vector<ConstraintUpdate>;

/// At most one constraint per feature, keyed by feature index. Value type:
/// updates produce new sets and never touch the input.
class ConstraintSet {
public:
    using Map = std::map<std::size_t, Constraint>;

    ConstraintSet() = default;

    [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }
    [[nodiscard]] bool empty() const noexcept { return entries_.empty(); }
    [[nodiscard]] bool contains(std::size_t feature) const { return entries_.count(feature) > 0; }
    [[nodiscard]] const Constraint* find(std::size_t feature) const;
    [[nodiscard]] Map::const_iterator begin() const noexcept { return entries_.begin(); }
    [[nodiscard]] Map::const_iterator end() const noexcept { return entries_.end(); }

    friend bool operator==(const ConstraintSet&, const ConstraintSet&) = default;

private:
    Map entries_;

    friend ConstraintSet apply_update(const ConstraintSet&, const ConstraintUpdate&, const FeatureSchema&);
};


/// Throws UnknownFeature if a constraint references a feature beyond `cand`.
[[nodiscard]] bool is_feasible(const Instance& x, const Instance& cand, const ConstraintSet& constraints);

/// Projects every violated feature: Immutable and Direction snap back to
/// x_i, Range clamps to the nearest bound. Satisfied features are untouched.
[[nodiscard]] Instance repair(const Instance& x, Instance cand, const ConstraintSet& constraints);

/// Checks the constraint against the schema (existing feature, Range and
/// Direction on numeric features only, lo <= hi).
void validate_constraint(std::size_t feature, const Constraint& c, const FeatureSchema& schema);

/// Errors: DuplicateConstraint (Add on a constrained feature),
/// MissingConstraint (Delete/Modify of an absent one),
/// IncompatibleConstraint (type rules), UnknownFeature.
[[nodiscard]] ConstraintSet apply_update(const ConstraintSet& set, const ConstraintUpdate& update,
                                         const FeatureSchema& schema);
/// All-or-nothing: the first failing update aborts the whole batch.
[[nodiscard]] ConstraintSet apply_batch(const ConstraintSet& set, const UpdateBatch& batch,
                                        const FeatureSchema& schema);

/// The update that undoes `update` when applied to apply_update(set, update).
[[nodiscard]] ConstraintUpdate inverse_update(const ConstraintSet& set, const ConstraintUpdate& update);

// Wire format shared by scenario files and the HTTP API. Features are named
// (an integer index is accepted on input):
//   {"feature": "age", "type": "immutable"}
//   {"feature": "duration", "type": "range", "params": {"lo": 4, "hi": 20}}
//   {"feature": "age", "type": "direction", "params": {"sense": "increase"}}
// Updates add "action": "add" | "delete" | "modify" to the same object.
[[nodiscard]] nlohmann::json constraint_to_json(std::size_t feature, const Constraint& c, const FeatureSchema& schema);
[[nodiscard]] nlohmann::json constraints_to_json(const ConstraintSet& set, const FeatureSchema& schema);
[[nodiscard]] ConstraintSet constraints_from_json(const nlohmann::json& j, const FeatureSchema& schema);
[[nodiscard]] nlohmann::json update_to_json(const ConstraintUpdate& u, const FeatureSchema& schema);
[[nodiscard]] ConstraintUpdate update_from_json(const nlohmann::json& j, const FeatureSchema& schema);
[[nodiscard]] UpdateBatch batch_from_json(const nlohmann::json& j, const FeatureSchema& schema);

}  // namespace cfloop
