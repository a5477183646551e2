#include "cfloop/constraints.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "cfloop/error.hpp"

namespace cfloop {

using nlohmann::json;

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace

ConstraintType type_of(const Constraint& c) noexcept {
    return std::visit(overloaded{[](const Immutable&) { return ConstraintType::Immutable; },
                                 [](const Range&) { return ConstraintType::Range; },
                                 [](const Direction&) { return ConstraintType::Direction; }},
                      c);
}

std::string_view to_string(ConstraintType t) noexcept {
    switch (t) {
        case ConstraintType::Immutable: return "immutable";
        case ConstraintType::Range: return "range";
        case ConstraintType::Direction: return "direction";
    }
    return "?";
}

bool satisfies(const Constraint& c, double original, double value) noexcept {
    return std::visit(overloaded{[&](const Immutable&) { return value == original; },
                                 [&](const Range& r) { return r.lo <= value && value <= r.hi; },
                                 [&](const Direction& d) {
                                     return d.sense == Sense::IncreaseOnly ? value >= original : value <= original;
                                 }},
                      c);
}

double project(const Constraint& c, double original, double value) noexcept {
    if (satisfies(c, original, value)) return value;
    return std::visit(overloaded{[&](const Immutable&) { return original; },
                                 [&](const Range& r) { return std::clamp(value, r.lo, r.hi); },
                                 [&](const Direction&) { return original; }},
                      c);
}

const Constraint* ConstraintSet::find(std::size_t feature) const {
    auto it = entries_.find(feature);
    return it == entries_.end() ? nullptr : &it->second;
}

bool is_feasible(const Instance& x, const Instance& cand, const ConstraintSet& constraints) {
    for (const auto& [feature, c] : constraints) {
        if (feature >= cand.size() || feature >= x.size())
            throw Error(ErrorCode::UnknownFeature, fmt::format("constraint on nonexistent feature {}", feature));
        if (!satisfies(c, x[feature], cand[feature])) return false;
    }
    return true;
}

Instance repair(const Instance& x, Instance cand, const ConstraintSet& constraints) {
    for (const auto& [feature, c] : constraints) {
        if (feature >= cand.size() || feature >= x.size())
            throw Error(ErrorCode::UnknownFeature, fmt::format("constraint on nonexistent feature {}", feature));
        cand[feature] = project(c, x[feature], cand[feature]);
    }
    return cand;
}

void validate_constraint(std::size_t feature, const Constraint& c, const FeatureSchema& schema) {
    if (feature >= schema.size())
        throw Error(ErrorCode::UnknownFeature, fmt::format("feature index {} outside schema", feature));
    const auto& spec = schema[feature];
    const auto type = type_of(c);
    if (type != ConstraintType::Immutable && !spec.is_numeric())
        throw Error(ErrorCode::IncompatibleConstraint,
                    fmt::format("{} constraint on categorical feature '{}'", to_string(type), spec.name));
    if (const auto* r = std::get_if<Range>(&c)) {
        if (!std::isfinite(r->lo) || !std::isfinite(r->hi) || r->lo > r->hi)
            throw Error(ErrorCode::IncompatibleConstraint,
                        fmt::format("range [{}, {}] on '{}' is empty or not finite", r->lo, r->hi, spec.name));
    }
}

ConstraintSet apply_update(const ConstraintSet& set, const ConstraintUpdate& update, const FeatureSchema& schema) {
    if (update.feature >= schema.size())
        throw Error(ErrorCode::UnknownFeature, fmt::format("feature index {} outside schema", update.feature));
    const auto& name = schema[update.feature].name;
    ConstraintSet out = set;
    switch (update.action) {
        case UpdateAction::Add:
            if (!update.constraint) throw Error(ErrorCode::InvalidArgument, "add without a constraint");
            if (set.contains(update.feature))
                throw Error(ErrorCode::DuplicateConstraint, fmt::format("feature '{}' is already constrained", name));
            validate_constraint(update.feature, *update.constraint, schema);
            out.entries_.emplace(update.feature, *update.constraint);
            break;
        case UpdateAction::Modify:
            if (!update.constraint) throw Error(ErrorCode::InvalidArgument, "modify without a constraint");
            if (!set.contains(update.feature))
                throw Error(ErrorCode::MissingConstraint, fmt::format("feature '{}' has no constraint to modify", name));
            validate_constraint(update.feature, *update.constraint, schema);
            out.entries_[update.feature] = *update.constraint;
            break;
        case UpdateAction::Delete:
            if (!set.contains(update.feature))
                throw Error(ErrorCode::MissingConstraint, fmt::format("feature '{}' has no constraint to delete", name));
            out.entries_.erase(update.feature);
            break;
    }
    return out;
}

ConstraintSet apply_batch(const ConstraintSet& set, const UpdateBatch& batch, const FeatureSchema& schema) {
    ConstraintSet out = set;
    for (const auto& u : batch) out = apply_update(out, u, schema);
    return out;
}

ConstraintUpdate inverse_update(const ConstraintSet& set, const ConstraintUpdate& update) {
    switch (update.action) {
        case UpdateAction::Add: return ConstraintUpdate::remove(update.feature);
        case UpdateAction::Delete:
        case UpdateAction::Modify: {
            const auto* prev = set.find(update.feature);
            if (!prev) throw Error(ErrorCode::MissingConstraint, "inverse of an update on an absent constraint");
            return update.action == UpdateAction::Delete ? ConstraintUpdate::add(update.feature, *prev)
                                                         : ConstraintUpdate::modify(update.feature, *prev);
        }
    }
    throw Error(ErrorCode::InvalidArgument, "unknown update action");
}

// ---------------------------------------------------------------------------
// Wire format

namespace {

std::size_t feature_from_json(const json& j, const FeatureSchema& schema) {
    const auto& f = j.at("feature");
    if (f.is_string()) {
        auto idx = schema.index_of(f.get<std::string>());
        if (!idx) throw Error(ErrorCode::UnknownFeature, fmt::format("unknown feature '{}'", f.get<std::string>()));
        return *idx;
    }
    if (f.is_number_integer()) {
        const auto v = f.get<long long>();
        if (v < 0 || static_cast<std::size_t>(v) >= schema.size())
            throw Error(ErrorCode::UnknownFeature, fmt::format("feature index {} outside schema", v));
        return static_cast<std::size_t>(v);
    }
    throw Error(ErrorCode::InvalidArgument, "feature must be a name or an index");
}

Constraint constraint_body_from_json(const json& j) {
    const auto type = j.at("type").get<std::string>();
    if (type == "immutable") return Immutable{};
    const auto& p = j.at("params");
    if (type == "range") return Range{p.at("lo").get<double>(), p.at("hi").get<double>()};
    if (type == "direction") {
        const auto sense = p.at("sense").get<std::string>();
        if (sense == "increase") return Direction{Sense::IncreaseOnly};
        if (sense == "decrease") return Direction{Sense::DecreaseOnly};
        throw Error(ErrorCode::InvalidArgument, fmt::format("unknown direction sense '{}'", sense));
    }
    throw Error(ErrorCode::InvalidArgument, fmt::format("unknown constraint type '{}'", type));
}

template <class F>
auto guarded(F&& f) {
    try {
        return f();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("malformed constraint payload: {}", e.what()));
    }
}

}  // namespace

json constraint_to_json(std::size_t feature, const Constraint& c, const FeatureSchema& schema) {
    json j{{"feature", schema[feature].name}, {"type", std::string(to_string(type_of(c)))}};
    if (const auto* r = std::get_if<Range>(&c)) j["params"] = {{"lo", r->lo}, {"hi", r->hi}};
    if (const auto* d = std::get_if<Direction>(&c))
        j["params"] = {{"sense", d->sense == Sense::IncreaseOnly ? "increase" : "decrease"}};
    return j;
}

json constraints_to_json(const ConstraintSet& set, const FeatureSchema& schema) {
    json out = json::array();
    for (const auto& [feature, c] : set) out.push_back(constraint_to_json(feature, c, schema));
    return out;
}

ConstraintSet constraints_from_json(const json& j, const FeatureSchema& schema) {
    return guarded([&] {
        if (!j.is_array()) throw Error(ErrorCode::InvalidArgument, "constraint set must be a JSON array");
        ConstraintSet out;
        for (const auto& jc : j)
            out = apply_update(out, ConstraintUpdate::add(feature_from_json(jc, schema), constraint_body_from_json(jc)),
                               schema);
        return out;
    });
}

json update_to_json(const ConstraintUpdate& u, const FeatureSchema& schema) {
    json j = u.constraint ? constraint_to_json(u.feature, *u.constraint, schema)
                          : json{{"feature", schema[u.feature].name}};
    j["action"] = u.action == UpdateAction::Add ? "add" : u.action == UpdateAction::Modify ? "modify" : "delete";
    return j;
}

ConstraintUpdate update_from_json(const json& j, const FeatureSchema& schema) {
    return guarded([&] {
        const auto action = j.at("action").get<std::string>();
        const auto feature = feature_from_json(j, schema);
        if (action == "delete") return ConstraintUpdate::remove(feature);
        if (action == "add") return ConstraintUpdate::add(feature, constraint_body_from_json(j));
        if (action == "modify") return ConstraintUpdate::modify(feature, constraint_body_from_json(j));
        throw Error(ErrorCode::InvalidArgument, fmt::format("unknown update action '{}'", action));
    });
}

UpdateBatch batch_from_json(const json& j, const FeatureSchema& schema) {
    if (!j.is_array()) throw Error(ErrorCode::InvalidArgument, "update batch must be a JSON array");
    UpdateBatch out;
    for (const auto& ju : j) out.push_back(update_from_json(ju, schema));
    return out;
}

}  // namespace cfloop
