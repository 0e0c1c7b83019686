#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "knntest/point_cloud.hpp"

namespace knntest {

using VertexId = std::uint32_t;

// Directed graph with out- and in-adjacency in CSR form. For a k-NN graph
// every vertex has out-degree min(k, L-1) and out-lists are ordered by
// increasing distance (ties: smaller vertex index first).
class DirectedKnnGraph {
public:
    DirectedKnnGraph() = default;

    // Arbitrary digraph from explicit out-lists; used for hand-built graphs in
    // moment calculations. Rejects self-loops, duplicates and bad indices.
    static DirectedKnnGraph from_out_lists(const std::vector<std::vector<VertexId>>& out_lists);

    // Uniform out-degree layout: out_flat holds `degree` entries per vertex.
    static DirectedKnnGraph from_uniform(std::size_t num_vertices, std::size_t requested_k,
                                         std::size_t degree, std::vector<VertexId> out_flat);

    std::size_t num_vertices() const { return out_offsets_.empty() ? 0 : out_offsets_.size() - 1; }
    std::size_t num_edges() const { return out_.size(); }

    // Neighbor count asked for, and the count actually used (clamped to L-1).
    std::size_t requested_k() const { return requested_k_; }
    std::size_t k() const { return effective_k_; }

    std::span<const VertexId> out_neighbors(std::size_t v) const {
        return {out_.data() + out_offsets_[v], out_offsets_[v + 1] - out_offsets_[v]};
    }
    std::span<const VertexId> in_neighbors(std::size_t v) const {
        return {in_.data() + in_offsets_[v], in_offsets_[v + 1] - in_offsets_[v]};
    }

    bool has_edge(VertexId from, VertexId to) const;

    bool operator==(const DirectedKnnGraph&) const = default;

private:
    void build_transpose();

    std::size_t requested_k_ = 0;
    std::size_t effective_k_ = 0;
    std::vector<std::size_t> out_offsets_;
    std::vector<VertexId> out_;
    std::vector<std::size_t> in_offsets_;
    std::vector<VertexId> in_;
};

// Exact k-NN digraph by exhaustive pairwise distances, O(L^2 d).
DirectedKnnGraph build_knn_graph_brute(const PointCloud& cloud, std::size_t k);

// Same graph through a kd-tree; adjacency is identical to the brute builder.
DirectedKnnGraph build_knn_graph_indexed(const PointCloud& cloud, std::size_t k);

std::size_t max_in_degree(const DirectedKnnGraph& graph);

// Upper bound on the number of cones of half-angle pi/6 (apex at the origin)
// needed to cover R^d. A point is among the k nearest neighbors of at most
// cone_covering_constant(d) * k others when distances are distinct.
double cone_covering_constant(std::size_t dim);

}  // namespace knntest
