#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "mgcn/dataset.hpp"
#include "mgcn/ranking.hpp"

namespace mgcn {

/// Exact k-nearest-neighbor index over the rows of a FeatureMatrix.
///
/// Each node stores a centroid and a covering radius; a subtree is skipped
/// only when its lower distance bound is strictly worse than the current
/// k-th candidate, so results match a brute-force scan including ties.
class BallTree {
public:
    explicit BallTree(const FeatureMatrix& x, std::size_t leaf_size = 16);

    /// The k nearest rows to row `query`, ordered by (distance, index).
    std::vector<NodeId> query(std::size_t query_row, std::size_t k) const;

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        std::size_t begin = 0;
        std::size_t end = 0;
        double radius = 0.0;
        int left = -1;
        int right = -1;
    };

    int build(std::size_t begin, std::size_t end);

    // Candidate ordering: (squared distance, index) lexicographic.
    using Candidate = std::pair<double, NodeId>;

    void search(int node, std::span<const double> q, std::size_t k,
                std::vector<Candidate>& heap) const;

    const FeatureMatrix* x_;
    std::size_t leaf_size_;
    std::size_t dim_;
    std::vector<NodeId> order_;
    std::vector<Node> nodes_;
    std::vector<double> centers_;  // node_count * dim
};

}  // namespace mgcn
