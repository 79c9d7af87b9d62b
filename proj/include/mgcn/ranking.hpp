#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "mgcn/dataset.hpp"

namespace mgcn {

using NodeId = std::uint32_t;

/// For each query q, the indices of its L most similar elements, rank 1 first.
/// Stored flat (n * L); position p of list q holds the element at rank p + 1.
class RankedLists {
public:
    RankedLists() = default;

    /// Validates that every list has L distinct indices below n.
    RankedLists(std::size_t n, std::size_t depth, std::vector<NodeId> flat);

    std::size_t size() const { return n_; }
    std::size_t depth() const { return depth_; }

    std::span<const NodeId> list(std::size_t q) const {
        return {flat_.data() + q * depth_, depth_};
    }
    const std::vector<NodeId>& flat() const { return flat_; }

    /// 1-based rank of o in list q; nullopt when o lies beyond the list depth.
    std::optional<std::size_t> rank_of(std::size_t q, std::size_t o) const;

    friend bool operator==(const RankedLists&, const RankedLists&) = default;

private:
    std::size_t n_ = 0;
    std::size_t depth_ = 0;
    std::vector<NodeId> flat_;
};

enum class SearchBackend { exact, ball_tree };

/// Default list depth: min(n, 5 * max(graph_k, method_k)).
std::size_t default_depth(std::size_t n, std::size_t graph_k, std::size_t method_k);

/// Ranked lists under Euclidean distance, ties broken by ascending index.
/// Both backends produce identical output.
RankedLists compute_ranked_lists(const FeatureMatrix& x, std::size_t depth, SearchBackend backend);

/// Squared Euclidean distance. Kept out-of-line so every backend accumulates in
/// the same order and ties resolve identically.
double squared_distance(std::span<const double> a, std::span<const double> b);

// Text format: line q holds the L indices of list q separated by spaces.
void write_ranked_lists(const std::filesystem::path& path, const RankedLists& lists);
RankedLists read_ranked_lists(const std::filesystem::path& path);

}  // namespace mgcn
