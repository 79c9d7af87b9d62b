#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Sparse>

#include "mgcn/dataset.hpp"
#include "mgcn/ranking.hpp"

namespace mgcn {

enum class RerankerKind { identity, correlation, diffusion };

struct RerankerSpec {
    RerankerKind kind = RerankerKind::identity;
    std::size_t k_method = 40;
    int iterations = 2;      // correlation
    double alpha = 0.85;     // diffusion damping
    double eps = 1e-8;       // diffusion tolerance
    int max_iter = 1000;     // diffusion cap

    /// Throws ConfigError unless 0 < alpha < 1, eps > 0, max_iter >= 1,
    /// iterations >= 0 and 1 <= k_method <= depth.
    void validate(std::size_t depth) const;
};

/// Unsupervised re-ranking: ranked lists in, ranked lists of the same shape out.
/// No label information enters this interface.
RankedLists rerank(const RankedLists& lists, const RerankerSpec& spec);

/// Neighborhood-overlap re-ranking. Each element i of list q is scored by
/// |N(q,k) ∩ N(i,k)| where N(.,k) is the first k entries of the current list
/// (self included); lists are re-sorted by descending overlap, ties keeping
/// the previous order. Repeated `iterations` times.
RankedLists rerank_correlation(const RankedLists& lists, std::size_t k, int iterations);

using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Symmetrized rank affinity: w_qi = 1 - (rank_q(i) - 1) / L, then (W + W^T) / 2.
SparseRowMatrix rank_affinity(const RankedLists& lists);

/// Row-normalized transition matrix D^-1 W.
SparseRowMatrix transition_matrix(const SparseRowMatrix& affinity);

struct DiffusionResult {
    RowMatrix scores;               // converged F, n x n
    int iterations = 0;             // steps taken by the slowest column block
    std::vector<double> residuals;  // max-abs change per step, over columns still iterating
    bool converged = false;
};

/// Iterates F <- alpha P F + (1 - alpha) I from F = I until the a-posteriori
/// error bound alpha / (1 - alpha) * max-abs change drops below eps, or max_iter
/// is hit. Columns of F evolve independently, so they are processed in narrow
/// panels, each stopping on its own residual.
DiffusionResult diffuse(const SparseRowMatrix& transition, double alpha, double eps, int max_iter);

/// Diffusion re-ranking: list q becomes the L nodes with largest F[q, .],
/// ties broken by the input rank of q's list, then by index.
RankedLists rerank_diffusion(const RankedLists& lists, double alpha, double eps, int max_iter);

}  // namespace mgcn
