#include "mgcn/manifold.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "mgcn/error.hpp"

namespace mgcn {

void RerankerSpec::validate(std::size_t depth) const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    if (!(eps > 0.0)) throw ConfigError("eps must be positive");
    if (max_iter < 1) throw ConfigError("max_iter must be >= 1");
    if (iterations < 0) throw ConfigError("iterations must be >= 0");
    if (k_method < 1 || k_method > depth) {
        throw ConfigError("method k=" + std::to_string(k_method) + " must lie in [1, L=" +
                          std::to_string(depth) + "]");
    }
}

RankedLists rerank(const RankedLists& lists, const RerankerSpec& spec) {
    spec.validate(lists.depth());
    switch (spec.kind) {
        case RerankerKind::identity:
            return lists;
        case RerankerKind::correlation:
            return rerank_correlation(lists, spec.k_method, spec.iterations);
        case RerankerKind::diffusion:
            return rerank_diffusion(lists, spec.alpha, spec.eps, spec.max_iter);
    }
    throw std::logic_error("unknown reranker kind");
}

RankedLists rerank_correlation(const RankedLists& lists, std::size_t k, int iterations) {
    const std::size_t n = lists.size();
    const std::size_t depth = lists.depth();
    if (k < 1 || k > depth) throw ConfigError("correlation k must lie in [1, L]");

    std::vector<NodeId> current = lists.flat();
    std::vector<NodeId> next(current.size());
    std::vector<std::size_t> stamp(n, n);
    std::vector<std::uint32_t> overlap(depth);
    std::vector<std::uint32_t> position(depth);

    for (int it = 0; it < iterations; ++it) {
        for (std::size_t q = 0; q < n; ++q) {
            const NodeId* list_q = current.data() + q * depth;
            for (std::size_t p = 0; p < k; ++p) stamp[list_q[p]] = q;
            for (std::size_t p = 0; p < depth; ++p) {
                const NodeId* list_i = current.data() + static_cast<std::size_t>(list_q[p]) * depth;
                std::uint32_t shared = 0;
                for (std::size_t r = 0; r < k; ++r) shared += stamp[list_i[r]] == q;
                overlap[p] = shared;
            }
            std::iota(position.begin(), position.end(), 0u);
            // Positions are unique, so previous rank settles every tie.
            std::stable_sort(position.begin(), position.end(),
                             [&](std::uint32_t a, std::uint32_t b) { return overlap[a] > overlap[b]; });
            for (std::size_t p = 0; p < depth; ++p) next[q * depth + p] = list_q[position[p]];
        }
        current.swap(next);
        std::fill(stamp.begin(), stamp.end(), n);
    }
    return RankedLists(n, depth, std::move(current));
}

SparseRowMatrix rank_affinity(const RankedLists& lists) {
    const std::size_t n = lists.size();
    const std::size_t depth = lists.depth();
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(n * depth);
    for (std::size_t q = 0; q < n; ++q) {
        auto l = lists.list(q);
        for (std::size_t p = 0; p < depth; ++p) {
            double w = 1.0 - static_cast<double>(p) / static_cast<double>(depth);
            triplets.emplace_back(static_cast<int>(q), static_cast<int>(l[p]), w);
        }
    }
    const auto size = static_cast<Eigen::Index>(n);
    SparseRowMatrix w(size, size);
    w.setFromTriplets(triplets.begin(), triplets.end());
    SparseRowMatrix wt = w.transpose();
    SparseRowMatrix sym = 0.5 * (w + wt);
    sym.makeCompressed();
    return sym;
}

SparseRowMatrix transition_matrix(const SparseRowMatrix& affinity) {
    SparseRowMatrix p = affinity;
    for (Eigen::Index i = 0; i < p.outerSize(); ++i) {
        double sum = 0.0;
        for (SparseRowMatrix::InnerIterator it(p, i); it; ++it) sum += it.value();
        if (!(sum > 0.0)) {
            throw std::logic_error("affinity row " + std::to_string(i) + " has zero mass");
        }
        for (SparseRowMatrix::InnerIterator it(p, i); it; ++it) it.valueRef() /= sum;
    }
    return p;
}

namespace {

constexpr std::size_t kPanel = 32;

// One step of F <- alpha P F + (1 - alpha) I on the kPanel columns starting at
// c0; `scaled` holds alpha P. Returns the max-abs change.
double diffusion_step(const SparseRowMatrix& scaled, double restart, std::size_t c0,
                      const double* cur, double* nxt) {
    const auto n = static_cast<std::size_t>(scaled.rows());
    const int* outer = scaled.outerIndexPtr();
    const int* inner = scaled.innerIndexPtr();
    const double* values = scaled.valuePtr();
    double change = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double* out = nxt + i * kPanel;
        std::fill(out, out + kPanel, 0.0);
        for (int e = outer[i]; e < outer[i + 1]; ++e) {
            const double a = values[e];
            const double* src = cur + static_cast<std::size_t>(inner[e]) * kPanel;
            for (std::size_t j = 0; j < kPanel; ++j) out[j] += a * src[j];
        }
        if (i >= c0 && i < c0 + kPanel) out[i - c0] += restart;
        const double* prev = cur + i * kPanel;
        for (std::size_t j = 0; j < kPanel; ++j) change = std::max(change, std::abs(out[j] - prev[j]));
    }
    return change;
}

}  // namespace

DiffusionResult diffuse(const SparseRowMatrix& transition, double alpha, double eps, int max_iter) {
    const auto n = static_cast<std::size_t>(transition.rows());
    const SparseRowMatrix scaled = alpha * transition;
    // ||F_t - F*|| <= alpha / (1 - alpha) * ||F_t - F_{t-1}|| in the max norm, so
    // stopping on that bound keeps every entry within eps of the fixed point.
    const double stop_change = eps * (1.0 - alpha) / alpha;

    DiffusionResult result;
    result.scores.setZero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    result.converged = true;

    // Columns past n in the last panel start at zero and stay zero.
    std::vector<double> cur(n * kPanel);
    std::vector<double> nxt(n * kPanel);

    for (std::size_t c0 = 0; c0 < n; c0 += kPanel) {
        const std::size_t width = std::min(kPanel, n - c0);
        std::fill(cur.begin(), cur.end(), 0.0);
        for (std::size_t j = 0; j < width; ++j) cur[(c0 + j) * kPanel + j] = 1.0;

        int steps = 0;
        bool done = false;
        while (!done && steps < max_iter) {
            const double change = diffusion_step(scaled, 1.0 - alpha, c0, cur.data(), nxt.data());
            cur.swap(nxt);
            const auto t = static_cast<std::size_t>(steps);
            if (result.residuals.size() <= t) {
                result.residuals.push_back(change);
            } else {
                result.residuals[t] = std::max(result.residuals[t], change);
            }
            ++steps;
            done = change < stop_change;
        }
        result.converged = result.converged && done;
        result.iterations = std::max(result.iterations, steps);

        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < width; ++j)
                result.scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c0 + j)) =
                    cur[i * kPanel + j];
    }
    return result;
}

RankedLists rerank_diffusion(const RankedLists& lists, double alpha, double eps, int max_iter) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    const std::size_t n = lists.size();
    const std::size_t depth = lists.depth();

    auto transition = transition_matrix(rank_affinity(lists));
    auto diffusion = diffuse(transition, alpha, eps, max_iter);

    std::vector<NodeId> flat(n * depth);
    std::vector<std::size_t> prior_rank(n);
    std::vector<NodeId> candidates(n);
    for (std::size_t q = 0; q < n; ++q) {
        std::fill(prior_rank.begin(), prior_rank.end(), depth + 1);
        auto l = lists.list(q);
        for (std::size_t p = 0; p < depth; ++p) prior_rank[l[p]] = p + 1;
        const double* row = diffusion.scores.data() + q * n;
        std::iota(candidates.begin(), candidates.end(), NodeId{0});
        std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(depth),
                          candidates.end(), [&](NodeId a, NodeId b) {
                              if (row[a] != row[b]) return row[a] > row[b];
                              if (prior_rank[a] != prior_rank[b]) return prior_rank[a] < prior_rank[b];
                              return a < b;
                          });
        std::copy_n(candidates.begin(), depth, flat.begin() + static_cast<std::ptrdiff_t>(q * depth));
    }
    return RankedLists(n, depth, std::move(flat));
}

}  // namespace mgcn
