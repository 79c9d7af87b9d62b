#include "mgcn/ranking.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <string>

#include "mgcn/ball_tree.hpp"
#include "mgcn/error.hpp"

namespace mgcn {

RankedLists::RankedLists(std::size_t n, std::size_t depth, std::vector<NodeId> flat)
    : n_(n), depth_(depth), flat_(std::move(flat)) {
    if (depth_ < 1 || depth_ > n_) {
        throw ValidationError("ranked-list depth " + std::to_string(depth_) +
                              " outside [1, " + std::to_string(n_) + "]");
    }
    if (flat_.size() != n_ * depth_) throw ValidationError("ranked-list storage size mismatch");
    std::vector<std::size_t> stamp(n_, n_);
    for (std::size_t q = 0; q < n_; ++q) {
        for (auto o : list(q)) {
            if (o >= n_) {
                throw ValidationError("list " + std::to_string(q) + " references node " +
                                      std::to_string(o) + " >= n");
            }
            if (stamp[o] == q) {
                throw ValidationError("list " + std::to_string(q) + " repeats node " +
                                      std::to_string(o));
            }
            stamp[o] = q;
        }
    }
}

std::optional<std::size_t> RankedLists::rank_of(std::size_t q, std::size_t o) const {
    auto l = list(q);
    auto it = std::find(l.begin(), l.end(), static_cast<NodeId>(o));
    if (it == l.end()) return std::nullopt;
    return static_cast<std::size_t>(it - l.begin()) + 1;
}

std::size_t default_depth(std::size_t n, std::size_t graph_k, std::size_t method_k) {
    return std::min(n, 5 * std::max(graph_k, method_k));
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double diff = a[i] - b[i];
        sum += diff * diff;
    }
    return sum;
}

namespace {

void rank_exact(const FeatureMatrix& x, std::size_t depth, std::vector<NodeId>& flat) {
    const std::size_t n = x.rows();
    std::vector<std::pair<double, NodeId>> scratch(n);
    for (std::size_t q = 0; q < n; ++q) {
        auto xq = x.row(q);
        for (std::size_t i = 0; i < n; ++i) {
            scratch[i] = {squared_distance(xq, x.row(i)), static_cast<NodeId>(i)};
        }
        std::partial_sort(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(depth),
                          scratch.end());
        for (std::size_t p = 0; p < depth; ++p) flat[q * depth + p] = scratch[p].second;
    }
}

void rank_ball_tree(const FeatureMatrix& x, std::size_t depth, std::vector<NodeId>& flat) {
    BallTree tree(x);
    for (std::size_t q = 0; q < x.rows(); ++q) {
        auto result = tree.query(q, depth);
        std::copy(result.begin(), result.end(), flat.begin() + static_cast<std::ptrdiff_t>(q * depth));
    }
}

}  // namespace

RankedLists compute_ranked_lists(const FeatureMatrix& x, std::size_t depth, SearchBackend backend) {
    const std::size_t n = x.rows();
    if (depth < 1 || depth > n) {
        throw ConfigError("depth " + std::to_string(depth) + " must lie in [1, n=" +
                          std::to_string(n) + "]");
    }
    std::vector<NodeId> flat(n * depth);
    if (backend == SearchBackend::exact) {
        rank_exact(x, depth, flat);
    } else {
        rank_ball_tree(x, depth, flat);
    }
    return RankedLists(n, depth, std::move(flat));
}

void write_ranked_lists(const std::filesystem::path& path, const RankedLists& lists) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path.string());
    for (std::size_t q = 0; q < lists.size(); ++q) {
        auto l = lists.list(q);
        for (std::size_t p = 0; p < l.size(); ++p) {
            if (p) out << ' ';
            out << l[p];
        }
        out << '\n';
    }
}

RankedLists read_ranked_lists(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    std::vector<NodeId> flat;
    std::size_t depth = 0;
    std::size_t n = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream fields(line);
        std::size_t count = 0;
        std::string tok;
        while (fields >> tok) {
            NodeId v = 0;
            auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
            if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
                throw ParseError("line " + std::to_string(n + 1) + ": bad index '" + tok + "'");
            }
            flat.push_back(v);
            ++count;
        }
        if (n == 0) {
            depth = count;
        } else if (count != depth) {
            throw ParseError("line " + std::to_string(n + 1) + ": expected " +
                             std::to_string(depth) + " indices, found " + std::to_string(count));
        }
        ++n;
    }
    return RankedLists(n, depth, std::move(flat));
}

}  // namespace mgcn
