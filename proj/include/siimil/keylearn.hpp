#pragma once

#include "siimil/types.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <numeric>

namespace siimil {

// Per-column importance scores derived from the top-k right singular
// subspace: s_j = (1/k) * sum_h V(j,h)^2 over the k retained right singular
// vectors. Scores of a non-zero matrix sum to 1.
struct LeverageScores {
    Vector scores;  // one per column, >= 0
    Index rank = 0;
};

struct KeyLearnConfig {
    Index t_per_bag = 100;        // representatives kept per negative bag
    double rank_rel_tol = 1e-10;  // numeric-rank threshold relative to sigma_max

    void validate() const {
        if (t_per_bag < 1) throw Error("key-learn config: t_per_bag must be >= 1");
        if (!(rank_rel_tol > 0.0)) throw Error("key-learn config: rank_rel_tol must be > 0");
    }
};

namespace detail {

inline Eigen::JacobiSVD<Matrix> thin_svd(const Matrix& x) {
    return Eigen::JacobiSVD<Matrix>(x, Eigen::ComputeThinV);
}

inline Index rank_from_singular_values(const Vector& sigma, double rel_tol) {
    if (sigma.size() == 0 || sigma(0) == 0.0)
        throw Error("numeric rank: matrix is zero, no representatives definable");
    const double cutoff = rel_tol * sigma(0);
    Index k = 0;
    while (k < sigma.size() && sigma(k) > cutoff) ++k;
    return std::max<Index>(k, 1);
}

}  // namespace detail

// Count of singular values above rel_tol * sigma_max. Throws on a zero matrix.
inline Index numeric_rank(const EmbeddingMatrix& x, double rel_tol) {
    if (x.count() == 0) throw Error("numeric rank: empty matrix");
    const auto svd = detail::thin_svd(x.values);
    return detail::rank_from_singular_values(svd.singularValues(), rel_tol);
}

inline LeverageScores leverage_scores(const EmbeddingMatrix& x, double rel_tol) {
    if (x.count() == 0) throw Error("leverage scores: empty matrix");
    const auto svd = detail::thin_svd(x.values);
    const Index k = detail::rank_from_singular_values(svd.singularValues(), rel_tol);
    const Matrix& v = svd.matrixV();  // n x min(D,n), columns ordered by decreasing sigma
    LeverageScores out;
    out.rank = k;
    out.scores = v.leftCols(k).rowwise().squaredNorm() / static_cast<double>(k);
    return out;
}

// Columns with the highest leverage scores, at most min(t_per_bag, n), in
// descending score order with ties broken by ascending original index.
inline EmbeddingMatrix select_representatives(const EmbeddingMatrix& x, const KeyLearnConfig& cfg) {
    cfg.validate();
    const LeverageScores lev = leverage_scores(x, cfg.rank_rel_tol);
    std::vector<Index> order(static_cast<std::size_t>(x.count()));
    std::iota(order.begin(), order.end(), Index{0});
    std::sort(order.begin(), order.end(), [&](Index a, Index b) {
        if (lev.scores(a) != lev.scores(b)) return lev.scores(a) > lev.scores(b);
        return a < b;
    });
    const Index t = std::min<Index>(cfg.t_per_bag, x.count());
    EmbeddingMatrix out;
    out.values.resize(x.dim(), t);
    for (Index i = 0; i < t; ++i) out.values.col(i) = x.values.col(order[static_cast<std::size_t>(i)]);
    return out;
}

// K = X~_1 (+) ... (+) X~_P in manifest order. Exact-zero columns (leverage 0,
// only reachable when t_per_bag >= n) are dropped so every key has positive norm.
inline KeyMatrix build_key_matrix(const std::vector<const EmbeddingMatrix*>& negatives,
                                  const KeyLearnConfig& cfg) {
    cfg.validate();
    if (negatives.empty()) throw Error("key matrix: no negative bags");
    const Index dim = negatives.front()->dim();
    std::vector<Matrix> parts;
    Index total = 0;
    for (const auto* bag_ptr : negatives) {
        const EmbeddingMatrix& bag = *bag_ptr;
        if (bag.dim() != dim)
            throw Error("key matrix: bag dimension " + std::to_string(bag.dim()) +
                        " does not match " + std::to_string(dim));
        EmbeddingMatrix reps = select_representatives(bag, cfg);
        Index kept = 0;
        for (Index j = 0; j < reps.count(); ++j) {
            if (reps.values.col(j).norm() == 0.0) continue;
            if (kept != j) reps.values.col(kept) = reps.values.col(j);
            ++kept;
        }
        parts.push_back(reps.values.leftCols(kept));
        total += kept;
    }
    KeyMatrix key;
    key.values.resize(dim, total);
    Index at = 0;
    for (const auto& part : parts) {
        key.values.middleCols(at, part.cols()) = part;
        at += part.cols();
    }
    key.validate();
    return key;
}

inline KeyMatrix build_key_matrix(const std::vector<EmbeddingMatrix>& negatives,
                                  const KeyLearnConfig& cfg) {
    std::vector<const EmbeddingMatrix*> ptrs;
    ptrs.reserve(negatives.size());
    for (const auto& bag : negatives) ptrs.push_back(&bag);
    return build_key_matrix(ptrs, cfg);
}

}  // namespace siimil
