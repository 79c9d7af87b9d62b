#include "mgcn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "mgcn/error.hpp"

namespace mgcn {

EdgeSet::EdgeSet(std::size_t n, std::vector<Edge> edges) : n_(n), edges_(std::move(edges)) {
    for (auto [i, j] : edges_) {
        if (i >= n_ || j >= n_) throw ValidationError("edge references node outside [0, n)");
        if (i == j) throw ValidationError("self-pair (" + std::to_string(i) + ", " + std::to_string(i) + ")");
    }
    std::sort(edges_.begin(), edges_.end());
    edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
}

bool EdgeSet::contains(NodeId i, NodeId j) const {
    return std::binary_search(edges_.begin(), edges_.end(), Edge{i, j});
}

bool EdgeSet::is_subset_of(const EdgeSet& other) const {
    return std::includes(other.edges_.begin(), other.edges_.end(), edges_.begin(), edges_.end());
}

bool EdgeSet::symmetric() const {
    return std::all_of(edges_.begin(), edges_.end(),
                       [&](const Edge& e) { return contains(e.second, e.first); });
}

std::vector<std::size_t> EdgeSet::out_degrees() const {
    std::vector<std::size_t> deg(n_, 0);
    for (auto [i, j] : edges_) ++deg[i];
    return deg;
}

std::vector<NodeId> neighborhood(const RankedLists& lists, std::size_t q, std::size_t k) {
    std::vector<NodeId> out;
    out.reserve(k);
    for (auto o : lists.list(q)) {
        if (out.size() == k) break;
        if (o != q) out.push_back(o);
    }
    return out;
}

namespace {

void check_k(const RankedLists& lists, std::size_t k) {
    if (k < 1 || k >= lists.depth()) {
        throw ConfigError("graph k=" + std::to_string(k) + " must lie in [1, L-1] with L=" +
                          std::to_string(lists.depth()));
    }
}

}  // namespace

EdgeSet knn_edges(const RankedLists& lists, std::size_t k) {
    check_k(lists, k);
    std::vector<Edge> edges;
    edges.reserve(lists.size() * k);
    for (std::size_t q = 0; q < lists.size(); ++q)
        for (auto j : neighborhood(lists, q, k)) edges.emplace_back(static_cast<NodeId>(q), j);
    return EdgeSet(lists.size(), std::move(edges));
}

EdgeSet reciprocal_edges(const RankedLists& lists, std::size_t k) {
    auto knn = knn_edges(lists, k);
    std::vector<Edge> edges;
    for (auto e : knn.edges())
        if (knn.contains(e.second, e.first)) edges.push_back(e);
    return EdgeSet(lists.size(), std::move(edges));
}

EdgeSet build_edges(const RankedLists& lists, GraphKind kind, std::size_t k) {
    return kind == GraphKind::knn ? knn_edges(lists, k) : reciprocal_edges(lists, k);
}

NormalizedAdjacency::NormalizedAdjacency(const EdgeSet& edges) {
    const std::size_t n = edges.node_count();
    std::vector<Edge> pairs;
    pairs.reserve(2 * edges.size() + n);
    for (auto [i, j] : edges.edges()) {
        pairs.emplace_back(i, j);
        pairs.emplace_back(j, i);
    }
    for (std::size_t i = 0; i < n; ++i) pairs.emplace_back(static_cast<NodeId>(i), static_cast<NodeId>(i));
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());

    std::vector<double> degree(n, 0.0);
    for (auto [i, j] : pairs) degree[i] += 1.0;
    // One rounding per entry; the product of degrees commutes, so the result is exactly symmetric.
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(pairs.size());
    for (auto [i, j] : pairs) {
        triplets.emplace_back(static_cast<int>(i), static_cast<int>(j), 1.0 / std::sqrt(degree[i] * degree[j]));
    }
    const auto size = static_cast<Eigen::Index>(n);
    matrix_.resize(size, size);
    matrix_.setFromTriplets(triplets.begin(), triplets.end());
    matrix_.makeCompressed();
}

void write_edges(const std::filesystem::path& path, const EdgeSet& edges) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path.string());
    for (auto [i, j] : edges.edges()) out << i << '\t' << j << '\n';
}

EdgeSet read_edges(const std::filesystem::path& path, std::size_t n) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    std::vector<Edge> edges;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream fields(line);
        long long i = -1;
        long long j = -1;
        std::string rest;
        if (!(fields >> i >> j) || (fields >> rest) || i < 0 || j < 0) {
            throw ParseError("line " + std::to_string(line_no) + ": expected 'i<TAB>j'");
        }
        edges.emplace_back(static_cast<NodeId>(i), static_cast<NodeId>(j));
    }
    return EdgeSet(n, std::move(edges));
}

void write_adjacency(const std::filesystem::path& path, const NormalizedAdjacency& adjacency) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << std::setprecision(17);
    const auto& m = adjacency.matrix();
    for (Eigen::Index i = 0; i < m.outerSize(); ++i)
        for (SparseRowMatrix::InnerIterator it(m, i); it; ++it)
            out << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
}

}  // namespace mgcn
