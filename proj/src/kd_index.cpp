#include "cfloop/kd_index.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "cfloop/error.hpp"

namespace cfloop {

namespace {
constexpr std::size_t kLeafSize = 8;
}

KdIndex::KdIndex(const FeatureSchema& schema, std::vector<Instance> instances, std::vector<std::size_t> source_rows)
    : schema_(schema), payload_(std::move(instances)), source_rows_(std::move(source_rows)) {
    if (source_rows_.empty()) {
        source_rows_.resize(payload_.size());
        std::iota(source_rows_.begin(), source_rows_.end(), std::size_t{0});
    }
    if (source_rows_.size() != payload_.size())
        throw Error(ErrorCode::InvalidArgument, "source row list does not match instance count");
    for (std::size_t i = 0; i < schema_.size(); ++i)
        if (schema_[i].is_numeric()) dims_.push_back(i);

    coords_.reserve(payload_.size() * dims_.size());
    for (const auto& x : payload_) {
        schema_.validate(x);
        auto p = project(x);
        coords_.insert(coords_.end(), p.begin(), p.end());
    }
    order_.resize(payload_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (!payload_.empty()) build(0, payload_.size());
}

std::vector<double> KdIndex::project(const Instance& x) const {
    const Instance norm = normalize(x, schema_);
    std::vector<double> p(dims_.size());
    for (std::size_t j = 0; j < dims_.size(); ++j) p[j] = norm[dims_[j]];
    return p;
}

std::span<const double> KdIndex::point(std::size_t id) const {
    return {coords_.data() + id * dims_.size(), dims_.size()};
}

double KdIndex::dist2(std::span<const double> q, std::size_t id) const {
    const double* p = coords_.data() + id * dims_.size();
    double s = 0.0;
    for (std::size_t j = 0; j < dims_.size(); ++j) {
        const double d = q[j] - p[j];
        s += d * d;
    }
    return s;
}

int KdIndex::build(std::size_t begin, std::size_t end) {
    const int at = static_cast<int>(nodes_.size());
    nodes_.push_back({begin, end, 0, 0.0, -1, -1});
    if (end - begin <= kLeafSize || dims_.empty()) return at;

    // split on the dimension of widest spread
    std::size_t best_dim = 0;
    double best_spread = -1.0;
    for (std::size_t j = 0; j < dims_.size(); ++j) {
        double lo = coords_[order_[begin] * dims_.size() + j], hi = lo;
        for (std::size_t i = begin; i < end; ++i) {
            const double v = coords_[order_[i] * dims_.size() + j];
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (hi - lo > best_spread) {
            best_spread = hi - lo;
            best_dim = j;
        }
    }
    if (best_spread <= 0.0) return at;  // all points coincide

    const std::size_t mid = begin + (end - begin) / 2;
    auto coord = [&](std::size_t id) { return coords_[id * dims_.size() + best_dim]; };
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                     order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](std::size_t a, std::size_t b) { return coord(a) < coord(b); });
    const double split = coord(order_[mid]);
    // left coords <= split <= right coords
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[static_cast<std::size_t>(at)].dim = best_dim;
    nodes_[static_cast<std::size_t>(at)].split = split;
    nodes_[static_cast<std::size_t>(at)].left = left;
    nodes_[static_cast<std::size_t>(at)].right = right;
    return at;
}

void KdIndex::search(int node_id, std::span<const double> q, std::size_t k,
                     std::vector<std::pair<double, std::size_t>>& heap) const {
    const Node& node = nodes_[static_cast<std::size_t>(node_id)];
    if (node.left < 0) {
        for (std::size_t i = node.begin; i < node.end; ++i) {
            const std::size_t id = order_[i];
            const std::pair<double, std::size_t> cand{dist2(q, id), id};
            if (heap.size() < k) {
                heap.push_back(cand);
                std::push_heap(heap.begin(), heap.end());
            } else if (cand < heap.front()) {
                std::pop_heap(heap.begin(), heap.end());
                heap.back() = cand;
                std::push_heap(heap.begin(), heap.end());
            }
        }
        return;
    }
    const double diff = q[node.dim] - node.split;
    const int near = diff < 0.0 ? node.left : node.right;
    const int far = diff < 0.0 ? node.right : node.left;
    search(near, q, k, heap);
    // strict comparison: an equal-distance point with a lower id may still
    // live on the far side
    if (heap.size() < k || diff * diff <= heap.front().first) search(far, q, k, heap);
}

std::vector<Neighbor> KdIndex::query_point(std::span<const double> point, std::size_t k) const {
    if (point.size() != dims_.size())
        throw Error(ErrorCode::SchemaMismatch, fmt::format("query has {} coordinates, index has {}", point.size(), dims_.size()));
    k = std::min(k, size());
    std::vector<std::pair<double, std::size_t>> heap;
    if (k == 0) return {};
    heap.reserve(k + 1);
    search(0, point, k, heap);
    std::sort_heap(heap.begin(), heap.end());
    std::vector<Neighbor> out;
    out.reserve(heap.size());
    for (const auto& [d2, id] : heap) out.push_back({id, std::sqrt(d2)});
    return out;
}

std::vector<Neighbor> KdIndex::query(const Instance& x, std::size_t k) const {
    schema_.validate(x);
    const auto p = project(x);
    return query_point(p, k);
}

KdIndex build_kd_index(const Dataset& train, const Classifier& model, int target_class) {
    std::vector<Instance> rows;
    std::vector<std::size_t> source;
    for (std::size_t i = 0; i < train.size(); ++i) {
        if (model.predict(train.rows[i]) == target_class) {
            rows.push_back(train.rows[i]);
            source.push_back(i);
        }
    }
    if (rows.empty())
        throw Error(ErrorCode::NoOppositeClass,
                    fmt::format("no training instance is predicted as class {}", target_class));
    return KdIndex(train.schema, std::move(rows), std::move(source));
}

}  // namespace cfloop
