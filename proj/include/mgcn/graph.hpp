#pragma once

#include <cstddef>
#include <filesystem>
#include <utility>
#include <vector>

#include <Eigen/Sparse>

#include "mgcn/ranking.hpp"

namespace mgcn {

using Edge = std::pair<NodeId, NodeId>;

/// Directed node pairs without self-pairs, kept sorted and unique.
class EdgeSet {
public:
    EdgeSet() = default;
    EdgeSet(std::size_t n, std::vector<Edge> edges);

    std::size_t node_count() const { return n_; }
    const std::vector<Edge>& edges() const { return edges_; }
    std::size_t size() const { return edges_.size(); }
    bool contains(NodeId i, NodeId j) const;
    bool is_subset_of(const EdgeSet& other) const;
    bool symmetric() const;
    std::vector<std::size_t> out_degrees() const;

    friend bool operator==(const EdgeSet&, const EdgeSet&) = default;

private:
    std::size_t n_ = 0;
    std::vector<Edge> edges_;
};

enum class GraphKind { knn, reciprocal };

/// First k entries of list q other than q itself.
std::vector<NodeId> neighborhood(const RankedLists& lists, std::size_t q, std::size_t k);

/// Edge (q, j) for each of the k top-ranked j != q.
EdgeSet knn_edges(const RankedLists& lists, std::size_t k);

/// Edge (q, j) when j is in q's top-k and q is in j's top-k.
EdgeSet reciprocal_edges(const RankedLists& lists, std::size_t k);

EdgeSet build_edges(const RankedLists& lists, GraphKind kind, std::size_t k);

using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// D^-1/2 (A + I) D^-1/2 with A the symmetrized binary adjacency of the edges.
class NormalizedAdjacency {
public:
    NormalizedAdjacency() = default;
    explicit NormalizedAdjacency(const EdgeSet& edges);

    std::size_t size() const { return static_cast<std::size_t>(matrix_.rows()); }
    const SparseRowMatrix& matrix() const { return matrix_; }

private:
    SparseRowMatrix matrix_;
};

inline NormalizedAdjacency build_normalized_adjacency(const EdgeSet& edges) {
    return NormalizedAdjacency(edges);
}

// Edge list: one "i<TAB>j" pair per line.
void write_edges(const std::filesystem::path& path, const EdgeSet& edges);
EdgeSet read_edges(const std::filesystem::path& path, std::size_t n);

// Coordinate triplets "i j value".
void write_adjacency(const std::filesystem::path& path, const NormalizedAdjacency& adjacency);

}  // namespace mgcn
