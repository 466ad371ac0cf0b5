#pragma once

#include "siimil/io.hpp"
#include "siimil/types.hpp"

#include <algorithm>
#include <fstream>
#include <span>

namespace siimil {

// Attention weights placed on the bag's coordinate grid; cells without a
// selected instance are zero. The grid is the tight bounding box of all
// instance coordinates.
struct HeatmapGrid {
    std::int32_t row_min = 0;
    std::int32_t col_min = 0;
    Index rows = 0;
    Index cols = 0;
    Matrix weights;             // rows x cols, raw attention
    double attention_min = 0.0;  // over selected instances
    double attention_max = 0.0;
};

inline HeatmapGrid attention_heatmap(const EmbeddingMatrix& bag,
                                     std::span<const Index> selected_indices,
                                     std::span<const double> attention) {
    if (!bag.coords) throw Error("heatmap: bag has no grid coordinates");
    if (selected_indices.size() != attention.size())
        throw Error("heatmap: selection/attention size mismatch");
    if (selected_indices.empty()) throw Error("heatmap: empty selection");
    const auto& coords = *bag.coords;

    HeatmapGrid grid;
    std::int32_t row_max = coords[0][0], col_max = coords[0][1];
    grid.row_min = coords[0][0];
    grid.col_min = coords[0][1];
    for (const auto& rc : coords) {
        grid.row_min = std::min(grid.row_min, rc[0]);
        grid.col_min = std::min(grid.col_min, rc[1]);
        row_max = std::max(row_max, rc[0]);
        col_max = std::max(col_max, rc[1]);
    }
    grid.rows = static_cast<Index>(row_max - grid.row_min) + 1;
    grid.cols = static_cast<Index>(col_max - grid.col_min) + 1;
    grid.weights = Matrix::Zero(grid.rows, grid.cols);

    grid.attention_min = attention[0];
    grid.attention_max = attention[0];
    for (std::size_t i = 0; i < selected_indices.size(); ++i) {
        const auto& rc = coords[static_cast<std::size_t>(selected_indices[i])];
        const Index r = rc[0] - grid.row_min;
        const Index c = rc[1] - grid.col_min;
        grid.weights(r, c) = std::max(grid.weights(r, c), attention[i]);
        grid.attention_min = std::min(grid.attention_min, attention[i]);
        grid.attention_max = std::max(grid.attention_max, attention[i]);
    }
    return grid;
}

// One CSV row per instance, unselected instances with weight 0.
inline void write_heatmap_csv(const std::filesystem::path& path, const EmbeddingMatrix& bag,
                              std::span<const Index> selected_indices,
                              std::span<const double> attention) {
    if (!bag.coords) throw Error("heatmap: bag has no grid coordinates");
    std::vector<double> per_instance(static_cast<std::size_t>(bag.count()), 0.0);
    for (std::size_t i = 0; i < selected_indices.size(); ++i)
        per_instance[static_cast<std::size_t>(selected_indices[i])] = attention[i];
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError(IoError::Kind::open_failed, "cannot open for writing: " + path.string());
    os << "row,col,attention_weight\n";
    for (Index i = 0; i < bag.count(); ++i) {
        const auto& rc = (*bag.coords)[static_cast<std::size_t>(i)];
        os << rc[0] << ',' << rc[1] << ','
           << detail::format_double(per_instance[static_cast<std::size_t>(i)]) << '\n';
    }
    os.flush();
    if (!os) throw IoError(IoError::Kind::open_failed, "write failed: " + path.string());
}

// Binary 8-bit PGM of the min-max scaled attention; empty cells stay 0. With
// a flat attention map every selected cell renders at full brightness.
inline void write_heatmap_pgm(const std::filesystem::path& path, const HeatmapGrid& grid) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError(IoError::Kind::open_failed, "cannot open for writing: " + path.string());
    os << "P5\n" << grid.cols << ' ' << grid.rows << "\n255\n";
    const double span = grid.attention_max - grid.attention_min;
    for (Index r = 0; r < grid.rows; ++r)
        for (Index c = 0; c < grid.cols; ++c) {
            const double v = grid.weights(r, c);
            unsigned char pixel = 0;
            if (v > 0.0) {
                const double scaled = span > 0.0 ? (v - grid.attention_min) / span : 1.0;
                pixel = static_cast<unsigned char>(std::lround(255.0 * scaled));
            }
            os.put(static_cast<char>(pixel));
        }
    os.flush();
    if (!os) throw IoError(IoError::Kind::open_failed, "write failed: " + path.string());
}

}  // namespace siimil
