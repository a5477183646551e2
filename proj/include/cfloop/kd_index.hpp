#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cfloop/data.hpp"
#include "cfloop/model.hpp"

namespace cfloop {

struct Neighbor {
    std::size_t id = 0;  // position in the index, see KdIndex::payload
    double distance = 0.0;

    friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// KD-tree over the min-max normalized numeric coordinates of a set of
/// instances, Euclidean metric. Leaves carry the original (raw) instances.
/// Results are ordered by (distance, id), so equal distances resolve to the
/// lower id and queries are fully deterministic.
class KdIndex {
public:
    KdIndex() = default;
    KdIndex(const FeatureSchema& schema, std::vector<Instance> instances, std::vector<std::size_t> source_rows = {});

    [[nodiscard]] std::size_t size() const noexcept { return payload_.size(); }
    [[nodiscard]] bool empty() const noexcept { return payload_.empty(); }
    [[nodiscard]] std::size_t dims() const noexcept { return dims_.size(); }

    /// The min(k, size()) nearest instances to raw instance `x`.
    [[nodiscard]] std::vector<Neighbor> query(const Instance& x, std::size_t k) const;
    /// Same, for a point already in projected coordinates.
    [[nodiscard]] std::vector<Neighbor> query_point(std::span<const double> point, std::size_t k) const;

    [[nodiscard]] std::vector<double> project(const Instance& x) const;
    [[nodiscard]] std::span<const double> point(std::size_t id) const;
    [[nodiscard]] const Instance& payload(std::size_t id) const { return payload_.at(id); }
    /// Row index in the dataset the index was built from.
    [[nodiscard]] std::size_t source_row(std::size_t id) const { return source_rows_.at(id); }

private:
    struct Node {
        std::size_t begin = 0, end = 0;  // range in order_
        std::size_t dim = 0;
        double split = 0.0;
        int left = -1, right = -1;
    };

    int build(std::size_t begin, std::size_t end);
    void search(int node, std::span<const double> q, std::size_t k, std::vector<std::pair<double, std::size_t>>& heap) const;
    [[nodiscard]] double dist2(std::span<const double> q, std::size_t id) const;

    FeatureSchema schema_;
    std::vector<std::size_t> dims_;     // numeric feature indices
    std::vector<double> coords_;        // size() x dims(), row-major
    std::vector<Instance> payload_;
    std::vector<std::size_t> source_rows_;
    std::vector<std::size_t> order_;
    std::vector<Node> nodes_;
};

/// Indexes the training rows whose *model prediction* equals target_class.
/// Throws NoOppositeClass when there are none.
KdIndex build_kd_index(const Dataset& train, const Classifier& model, int target_class);

}  // namespace cfloop
