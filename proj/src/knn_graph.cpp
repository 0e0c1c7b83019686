#include "knntest/knn_graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <utility>

#include "knntest/error.hpp"

namespace knntest {

namespace {

// (squared distance, vertex) ordered lexicographically: this is the tie rule.
using Candidate = std::pair<double, VertexId>;

void check_input(const PointCloud& cloud, std::size_t k) {
    if (k == 0) {
        throw ValidationError("neighbor count k must be at least 1");
    }
    if (cloud.size() < 2) {
        throw DegenerateInputError("k-NN graph needs at least 2 points, got " +
                                   std::to_string(cloud.size()));
    }
    if (cloud.size() > std::numeric_limits<VertexId>::max()) {
        throw ValidationError("point cloud too large for 32-bit vertex ids");
    }
}

// Bounded max-heap keeping the `capacity` smallest candidates.
class NeighborHeap {
public:
    explicit NeighborHeap(std::size_t capacity) : capacity_(capacity) { items_.reserve(capacity); }

    void clear() { items_.clear(); }
    bool full() const { return items_.size() == capacity_; }
    double worst() const { return items_.front().first; }

    void offer(double dist, VertexId id) {
        const Candidate c{dist, id};
        if (!full()) {
            items_.push_back(c);
            std::push_heap(items_.begin(), items_.end());
        } else if (c < items_.front()) {
            std::pop_heap(items_.begin(), items_.end());
            items_.back() = c;
            std::push_heap(items_.begin(), items_.end());
        }
    }

    void write_sorted(VertexId* out) {
        std::sort_heap(items_.begin(), items_.end());
        for (std::size_t i = 0; i < items_.size(); ++i) out[i] = items_[i].second;
    }

private:
    std::size_t capacity_;
    std::vector<Candidate> items_;
};

class KdTree {
public:
    KdTree(const PointCloud& cloud, std::size_t leaf_size) : dim_(cloud.dim()) {
        const std::size_t n = cloud.size();
        order_.resize(n);
        for (std::size_t i = 0; i < n; ++i) order_[i] = static_cast<VertexId>(i);
        src_ = &cloud;
        nodes_.reserve(2 * n / leaf_size + 2);
        build(0, n, leaf_size);
        points_.resize(n * dim_);
        for (std::size_t i = 0; i < n; ++i) {
            auto p = cloud.point(order_[i]);
            std::copy(p.begin(), p.end(), points_.begin() + static_cast<std::ptrdiff_t>(i * dim_));
        }
        src_ = nullptr;
    }

    const std::vector<VertexId>& order() const { return order_; }
    const double* tree_point(std::size_t slot) const { return points_.data() + slot * dim_; }

    void query(const double* q, VertexId self, NeighborHeap& heap) const { search(0, q, self, heap); }

private:
    struct Node {
        std::size_t begin = 0, end = 0;
        std::size_t left = 0, right = 0;
        int split_dim = -1;
        double split = 0.0;
        std::vector<double> lo, hi;
    };

    std::size_t build(std::size_t begin, std::size_t end, std::size_t leaf_size) {
        const std::size_t id = nodes_.size();
        Node node;
        node.begin = begin;
        node.end = end;
        nodes_.push_back(std::move(node));
        std::vector<double> lo(dim_, std::numeric_limits<double>::infinity());
        std::vector<double> hi(dim_, -std::numeric_limits<double>::infinity());
        for (std::size_t i = begin; i < end; ++i) {
            auto p = src_->point(order_[i]);
            for (std::size_t j = 0; j < dim_; ++j) {
                lo[j] = std::min(lo[j], p[j]);
                hi[j] = std::max(hi[j], p[j]);
            }
        }
        std::size_t best_dim = 0;
        double best_spread = -1.0;
        for (std::size_t j = 0; j < dim_; ++j) {
            if (hi[j] - lo[j] > best_spread) {
                best_spread = hi[j] - lo[j];
                best_dim = j;
            }
        }
        nodes_[id].lo = std::move(lo);
        nodes_[id].hi = std::move(hi);
        if (end - begin <= leaf_size || best_spread <= 0.0) return id;

        const std::size_t mid = begin + (end - begin) / 2;
        auto first = order_.begin() + static_cast<std::ptrdiff_t>(begin);
        std::nth_element(first, order_.begin() + static_cast<std::ptrdiff_t>(mid),
                         order_.begin() + static_cast<std::ptrdiff_t>(end),
                         [&](VertexId a, VertexId b) {
                             return src_->point(a)[best_dim] < src_->point(b)[best_dim];
                         });
        const double split = src_->point(order_[mid])[best_dim];
        const std::size_t left = build(begin, mid, leaf_size);
        const std::size_t right = build(mid, end, leaf_size);
        nodes_[id].split_dim = static_cast<int>(best_dim);
        nodes_[id].split = split;
        nodes_[id].left = left;
        nodes_[id].right = right;
        return id;
    }

    // Lower bound on the squared distance from q to any point in the node's
    // bounding box; never exceeds the true squared distance of a contained point.
    double box_distance(const Node& node, const double* q) const {
        double s = 0.0;
        for (std::size_t j = 0; j < dim_; ++j) {
            double t = 0.0;
            if (q[j] < node.lo[j]) {
                t = node.lo[j] - q[j];
            } else if (q[j] > node.hi[j]) {
                t = q[j] - node.hi[j];
            }
            s += t * t;
        }
        return s;
    }

    void search(std::size_t id, const double* q, VertexId self, NeighborHeap& heap) const {
        const Node& node = nodes_[id];
        // Strict comparison: a box at exactly the current worst distance may
        // still hold a tied point with a smaller index.
        if (heap.full() && box_distance(node, q) > heap.worst()) return;
        if (node.split_dim < 0) {
            for (std::size_t i = node.begin; i < node.end; ++i) {
                const VertexId v = order_[i];
                if (v == self) continue;
                heap.offer(squared_distance(q, tree_point(i), dim_), v);
            }
            return;
        }
        const bool go_left = q[node.split_dim] < node.split;
        search(go_left ? node.left : node.right, q, self, heap);
        search(go_left ? node.right : node.left, q, self, heap);
    }

    std::size_t dim_;
    const PointCloud* src_ = nullptr;
    std::vector<VertexId> order_;
    std::vector<double> points_;
    std::vector<Node> nodes_;
};

}  // namespace

DirectedKnnGraph DirectedKnnGraph::from_out_lists(const std::vector<std::vector<VertexId>>& out_lists) {
    DirectedKnnGraph g;
    const std::size_t n = out_lists.size();
    g.out_offsets_.assign(n + 1, 0);
    std::size_t max_deg = 0;
    for (std::size_t v = 0; v < n; ++v) {
        const auto& list = out_lists[v];
        std::vector<VertexId> sorted(list);
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
            throw ValidationError("duplicate out-neighbor at vertex " + std::to_string(v));
        }
        for (VertexId u : list) {
            if (u >= n) throw ValidationError("neighbor index out of range at vertex " + std::to_string(v));
            if (u == v) throw ValidationError("self-loop at vertex " + std::to_string(v));
        }
        g.out_.insert(g.out_.end(), list.begin(), list.end());
        g.out_offsets_[v + 1] = g.out_.size();
        max_deg = std::max(max_deg, list.size());
    }
    g.requested_k_ = max_deg;
    g.effective_k_ = max_deg;
    g.build_transpose();
    return g;
}

DirectedKnnGraph DirectedKnnGraph::from_uniform(std::size_t num_vertices, std::size_t requested_k,
                                                std::size_t degree, std::vector<VertexId> out_flat) {
    if (out_flat.size() != num_vertices * degree) {
        throw ValidationError("uniform adjacency size does not match vertices * degree");
    }
    DirectedKnnGraph g;
    g.requested_k_ = requested_k;
    g.effective_k_ = degree;
    g.out_ = std::move(out_flat);
    g.out_offsets_.resize(num_vertices + 1);
    for (std::size_t v = 0; v <= num_vertices; ++v) g.out_offsets_[v] = v * degree;
    g.build_transpose();
    return g;
}

void DirectedKnnGraph::build_transpose() {
    const std::size_t n = num_vertices();
    in_offsets_.assign(n + 1, 0);
    for (VertexId u : out_) ++in_offsets_[u + 1];
    for (std::size_t v = 0; v < n; ++v) in_offsets_[v + 1] += in_offsets_[v];
    in_.resize(out_.size());
    std::vector<std::size_t> cursor(in_offsets_.begin(), in_offsets_.end() - 1);
    for (std::size_t v = 0; v < n; ++v) {
        for (VertexId u : out_neighbors(v)) in_[cursor[u]++] = static_cast<VertexId>(v);
    }
}

bool DirectedKnnGraph::has_edge(VertexId from, VertexId to) const {
    auto out = out_neighbors(from);
    return std::find(out.begin(), out.end(), to) != out.end();
}

DirectedKnnGraph build_knn_graph_brute(const PointCloud& cloud, std::size_t k) {
    check_input(cloud, k);
    const std::size_t n = cloud.size();
    const std::size_t degree = std::min(k, n - 1);
    const std::size_t dim = cloud.dim();
    std::vector<VertexId> out(n * degree);
    std::vector<Candidate> all;
    all.reserve(n - 1);
    for (std::size_t v = 0; v < n; ++v) {
        all.clear();
        const double* pv = cloud.point(v).data();
        for (std::size_t u = 0; u < n; ++u) {
            if (u == v) continue;
            all.emplace_back(squared_distance(pv, cloud.point(u).data(), dim), static_cast<VertexId>(u));
        }
        std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(degree), all.end());
        for (std::size_t i = 0; i < degree; ++i) out[v * degree + i] = all[i].second;
    }
    return DirectedKnnGraph::from_uniform(n, k, degree, std::move(out));
}

DirectedKnnGraph build_knn_graph_indexed(const PointCloud& cloud, std::size_t k) {
    check_input(cloud, k);
    const std::size_t n = cloud.size();
    const std::size_t degree = std::min(k, n - 1);
    const KdTree tree(cloud, 16);
    std::vector<VertexId> out(n * degree);
    NeighborHeap heap(degree);
    // Queries in tree order keep consecutive searches in the same region.
    for (std::size_t slot = 0; slot < n; ++slot) {
        const VertexId v = tree.order()[slot];
        heap.clear();
        tree.query(tree.tree_point(slot), v, heap);
        heap.write_sorted(out.data() + static_cast<std::size_t>(v) * degree);
    }
    return DirectedKnnGraph::from_uniform(n, k, degree, std::move(out));
}

std::size_t max_in_degree(const DirectedKnnGraph& graph) {
    std::size_t best = 0;
    for (std::size_t v = 0; v < graph.num_vertices(); ++v) {
        best = std::max(best, graph.in_neighbors(v).size());
    }
    return best;
}

double cone_covering_constant(std::size_t dim) {
    static const std::vector<double> table = [] {
        std::vector<double> t(65, 0.0);
        t[1] = 2.0;  // two half-lines
        t[2] = 6.0;  // six 60-degree sectors tile the plane
        // Maximal packing of directions with pairwise angle > pi/6: the caps of
        // chord-radius sin(pi/12) are disjoint inside a ball of radius
        // 1 + sin(pi/12), and the packing is a pi/6 covering.
        const double ratio = 1.0 + 1.0 / std::sin(std::numbers::pi / 12.0);
        for (std::size_t d = 3; d < t.size(); ++d) t[d] = std::ceil(std::pow(ratio, static_cast<double>(d)));
        return t;
    }();
    if (dim == 0) throw ValidationError("dimension must be positive");
    if (dim < table.size()) return table[dim];
    return std::pow(1.0 + 1.0 / std::sin(std::numbers::pi / 12.0), static_cast<double>(dim));
}

}  // namespace knntest
