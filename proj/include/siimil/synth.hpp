#pragma once

#include "siimil/rng.hpp"
#include "siimil/types.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>

namespace siimil {

// Rare-positive bag generator. Classes are isotropic Gaussians with unit
// sigma whose means sit on two orthogonal axes at distance `separation`
// from each other:
//
//   mu_neg = (separation/sqrt(2)) * e1,   mu_pos = (separation/sqrt(2)) * e0
//
// Placing both means off the origin gives the classes distinct direction
// cones, which is what cosine-similarity saliency can see. Centering the
// negatives at the origin instead makes their directions isotropic and
// provably indistinguishable from any mean-shifted class under cosine
// scores.
struct SynthConfig {
    Index dim = 16;
    int bags_per_class = 10;
    Index instances_min = 1000;
    Index instances_max = 1000;  // inclusive; equal to instances_min for fixed-size bags
    std::vector<double> positive_rates = {0.003, 0.0075, 0.05, 0.2};  // cycled over positive bags
    double separation = 4.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (dim < 2) throw Error("synth config: dim must be >= 2");
        if (bags_per_class < 1) throw Error("synth config: bags_per_class must be >= 1");
        if (instances_min < 1 || instances_max < instances_min)
            throw Error("synth config: invalid instance count range");
        if (positive_rates.empty()) throw Error("synth config: positive_rates must be non-empty");
        for (double r : positive_rates)
            if (!(r > 0.0) || r > 1.0)
                throw Error("synth config: a positive bag needs a positive rate in (0, 1]");
        if (separation < 0.0) throw Error("synth config: separation must be >= 0");
    }
};

namespace detail {

inline std::vector<std::array<std::int32_t, 2>> square_grid_coords(Index n) {
    const auto width = static_cast<std::int32_t>(
        std::ceil(std::sqrt(static_cast<double>(n))));
    std::vector<std::array<std::int32_t, 2>> coords(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        const auto ii = static_cast<std::int32_t>(i);
        coords[static_cast<std::size_t>(i)] = {ii / width, ii % width};
    }
    return coords;
}

}  // namespace detail

// Deterministic per seed; each bag draws from its own derived stream so the
// output does not depend on generation order. Positive bags contain exactly
// max(1, round(rate * n)) positive instances at seeded positions, so the
// realized TIR is fixed by construction.
inline std::vector<LabeledEmbeddingBag> generate_dataset(const SynthConfig& cfg) {
    cfg.validate();
    Vector mu_neg = Vector::Zero(cfg.dim);
    Vector mu_pos = Vector::Zero(cfg.dim);
    const double radius = cfg.separation / std::sqrt(2.0);
    mu_pos(0) = radius;
    mu_neg(1) = radius;

    std::vector<LabeledEmbeddingBag> bags;
    bags.reserve(static_cast<std::size_t>(2 * cfg.bags_per_class));
    int bag_index = 0;
    for (int cls = 0; cls <= 1; ++cls) {
        for (int b = 0; b < cfg.bags_per_class; ++b, ++bag_index) {
            Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(bag_index)));
            const Index n = cfg.instances_min == cfg.instances_max
                                ? cfg.instances_min
                                : static_cast<Index>(rng.uniform_int(cfg.instances_min, cfg.instances_max));

            std::vector<std::uint8_t> labels(static_cast<std::size_t>(n), 0);
            if (cls == 1) {
                const double rate = cfg.positive_rates[static_cast<std::size_t>(b) %
                                                       cfg.positive_rates.size()];
                const Index n_pos = std::max<Index>(
                    1, static_cast<Index>(std::llround(rate * static_cast<double>(n))));
                if (n_pos > n) throw Error("synth: infeasible positive count");
                std::vector<Index> positions(static_cast<std::size_t>(n));
                std::iota(positions.begin(), positions.end(), Index{0});
                rng.shuffle(positions);
                for (Index i = 0; i < n_pos; ++i)
                    labels[static_cast<std::size_t>(positions[static_cast<std::size_t>(i)])] = 1;
            }

            LabeledEmbeddingBag bag;
            bag.bag_id = (cls == 1 ? "pos_" : "neg_") + std::to_string(b);
            bag.label = cls;
            bag.embeddings.values.resize(cfg.dim, n);
            for (Index i = 0; i < n; ++i) {
                const Vector& mu = labels[static_cast<std::size_t>(i)] ? mu_pos : mu_neg;
                for (Index d = 0; d < cfg.dim; ++d)
                    bag.embeddings.values(d, i) = mu(d) + rng.normal();
            }
            bag.embeddings.coords = detail::square_grid_coords(n);
            bag.embeddings.instance_labels = std::move(labels);
            bags.push_back(std::move(bag));
        }
    }
    return bags;
}

struct ToyDemoResult {
    Eigen::Vector2d z_full;
    Eigen::Vector2d z_filtered;
    std::vector<int> kept_negative_indices;
    bool full_in_positive_half = false;
    bool filtered_in_positive_half = false;
};

// 2-D aggregation demo: `negative_count` unit vectors fanned around the
// negative mean direction (1,0) across +-75 degrees, one positive instance
// at (0,1). z is the convex combination of all instances, then again after
// dropping the negatives most similar to (1,0) (the easily recognizable
// ones) and renormalizing the surviving weights. A point is in the positive
// half-space when it is closer to the positive mean direction, i.e. y > x.
inline ToyDemoResult toy_2d_demo(int negative_count, int kept_negatives,
                                 std::span<const double> weights) {
    if (negative_count < 0 || kept_negatives < 0 || kept_negatives > negative_count)
        throw Error("toy demo: invalid negative counts");
    if (static_cast<int>(weights.size()) != negative_count + 1)
        throw Error("toy demo: need one weight per negative plus one for the positive");
    double sum = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw Error("toy demo: weights must be non-negative");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw Error("toy demo: weights must sum to 1");

    constexpr double kSpreadRadians = 75.0 * std::numbers::pi / 180.0;
    std::vector<Eigen::Vector2d> negatives(static_cast<std::size_t>(negative_count));
    for (int i = 0; i < negative_count; ++i) {
        const double angle =
            negative_count == 1
                ? 0.0
                : -kSpreadRadians + 2.0 * kSpreadRadians * static_cast<double>(i) /
                                        static_cast<double>(negative_count - 1);
        negatives[static_cast<std::size_t>(i)] = {std::cos(angle), std::sin(angle)};
    }
    const Eigen::Vector2d positive(0.0, 1.0);

    ToyDemoResult out;
    out.z_full.setZero();
    for (int i = 0; i < negative_count; ++i)
        out.z_full += weights[static_cast<std::size_t>(i)] * negatives[static_cast<std::size_t>(i)];
    out.z_full += weights[static_cast<std::size_t>(negative_count)] * positive;

    // drop the p - p' negatives with the highest similarity to (1,0)
    std::vector<int> order(static_cast<std::size_t>(negative_count));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        const double ca = negatives[static_cast<std::size_t>(a)].x();
        const double cb = negatives[static_cast<std::size_t>(b)].x();
        if (ca != cb) return ca < cb;  // least similar to the negative mean first
        return a < b;
    });
    order.resize(static_cast<std::size_t>(kept_negatives));

    double kept_weight = weights[static_cast<std::size_t>(negative_count)];
    Eigen::Vector2d z = weights[static_cast<std::size_t>(negative_count)] * positive;
    for (int i : order) {
        kept_weight += weights[static_cast<std::size_t>(i)];
        z += weights[static_cast<std::size_t>(i)] * negatives[static_cast<std::size_t>(i)];
    }
    if (kept_weight <= 0.0) throw Error("toy demo: kept weights renormalize to zero");
    out.z_filtered = z / kept_weight;
    out.kept_negative_indices = order;

    out.full_in_positive_half = out.z_full.y() > out.z_full.x();
    out.filtered_in_positive_half = out.z_filtered.y() > out.z_filtered.x();
    return out;
}

}  // namespace siimil
