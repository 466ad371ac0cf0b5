#pragma once

#include "siimil/types.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace siimil {

struct SiiConfig {
    Index top_k = 150;        // nearest keys averaged per query
    double keep_ratio = 0.3;  // fraction of instances kept

    void validate() const {
        if (top_k < 1) throw Error("sii config: top_k must be >= 1");
        if (!(keep_ratio > 0.0) || keep_ratio > 1.0)
            throw Error("sii config: keep_ratio must be in (0, 1]");
    }
};

// Cross similarity between bag instances (rows) and keys (columns).
struct SimilarityMatrix {
    Matrix values;  // n x tau, entries in [-1, 1]
};

// C(i,j) = <q_i, k_j> / (|q_i| |k_j|). Rows of zero-norm queries are all
// zero (neutral saliency) instead of erroring; blank patches can produce
// near-zero embeddings. Entries are computed one dot product at a time so
// the result is bitwise independent of key order and thread count.
inline SimilarityMatrix cosine_similarity_matrix(const EmbeddingMatrix& queries, const KeyMatrix& keys) {
    if (queries.dim() != keys.dim())
        throw Error("cosine similarity: query dim " + std::to_string(queries.dim()) +
                    " does not match key dim " + std::to_string(keys.dim()));
    const Index n = queries.count();
    const Index tau = keys.count();

    Matrix qn = queries.values;
    std::vector<bool> zero_query(static_cast<std::size_t>(n), false);
    for (Index i = 0; i < n; ++i) {
        const double norm = qn.col(i).norm();
        if (norm == 0.0)
            zero_query[static_cast<std::size_t>(i)] = true;
        else
            qn.col(i) /= norm;
    }
    Matrix kn = keys.values;
    for (Index j = 0; j < tau; ++j) kn.col(j) /= kn.col(j).norm();

    SimilarityMatrix sim;
    sim.values.resize(n, tau);
    for (Index i = 0; i < n; ++i) {
        if (zero_query[static_cast<std::size_t>(i)]) {
            sim.values.row(i).setZero();
            continue;
        }
        for (Index j = 0; j < tau; ++j) sim.values(i, j) = qn.col(i).dot(kn.col(j));
    }
    return sim;
}

// s_i = -mean of the top-min(top_k, tau) similarities in row i. The top block
// is selected then summed in descending order, matching a full-sort oracle
// bitwise.
inline Vector saliency_scores(const SimilarityMatrix& sim, Index top_k) {
    if (top_k < 1) throw Error("saliency: top_k must be >= 1");
    const Index n = sim.values.rows();
    const Index tau = sim.values.cols();
    const Index k = std::min(top_k, tau);
    Vector out(n);
    std::vector<double> row(static_cast<std::size_t>(tau));
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < tau; ++j) row[static_cast<std::size_t>(j)] = sim.values(i, j);
        std::partial_sort(row.begin(), row.begin() + k, row.end(), std::greater<double>());
        double sum = 0.0;
        for (Index j = 0; j < k; ++j) sum += row[static_cast<std::size_t>(j)];
        out(i) = -(sum / static_cast<double>(k));
    }
    return out;
}

// Keep the t = max(1, round(r*n)) instances with the highest saliency,
// descending score, ties broken by ascending original index.
inline SalientBag select_salient(const EmbeddingMatrix& queries, const Vector& saliency,
                                 double keep_ratio, std::string source_bag_id = {}) {
    const Index n = queries.count();
    if (n < 1) throw Error("salient selection: empty bag");
    if (saliency.size() != n) throw Error("salient selection: saliency length does not match bag");
    if (!(keep_ratio > 0.0) || keep_ratio > 1.0)
        throw Error("salient selection: keep_ratio must be in (0, 1]");

    const Index t = std::min<Index>(
        n, std::max<Index>(1, static_cast<Index>(std::llround(keep_ratio * static_cast<double>(n)))));

    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::sort(order.begin(), order.end(), [&](Index a, Index b) {
        if (saliency(a) != saliency(b)) return saliency(a) > saliency(b);
        return a < b;
    });

    SalientBag bag;
    bag.source_bag_id = std::move(source_bag_id);
    bag.selected_indices.assign(order.begin(), order.begin() + t);
    bag.saliency.resize(t);
    bag.embeddings.resize(queries.dim(), t);
    for (Index i = 0; i < t; ++i) {
        bag.saliency(i) = saliency(bag.selected_indices[static_cast<std::size_t>(i)]);
        bag.embeddings.col(i) = queries.values.col(bag.selected_indices[static_cast<std::size_t>(i)]);
    }
    return bag;
}

// Salient instance inference on one bag: similarity to all keys, top-K mean
// saliency, top-r% selection.
inline SalientBag sii_bag(const EmbeddingMatrix& queries, const KeyMatrix& keys, const SiiConfig& cfg,
                          std::string source_bag_id = {}) {
    cfg.validate();
    const SimilarityMatrix sim = cosine_similarity_matrix(queries, keys);
    const Vector saliency = saliency_scores(sim, cfg.top_k);
    return select_salient(queries, saliency, cfg.keep_ratio, std::move(source_bag_id));
}

}  // namespace siimil
