#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace siimil {

// Data or computation error (CLI exit code 1). Usage errors are reported
// with std::invalid_argument and exit code 2.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// One bag of instance embeddings: a D x n column matrix, column i being the
// embedding of instance i. Grid coordinates and ground-truth instance labels
// are optional payloads carried for evaluation and synthetic data.
struct EmbeddingMatrix {
    Matrix values;  // D x n
    std::optional<std::vector<std::array<std::int32_t, 2>>> coords;  // (row, col) per instance
    std::optional<std::vector<std::uint8_t>> instance_labels;        // 0/1 per instance

    Index dim() const { return values.rows(); }
    Index count() const { return values.cols(); }

    void validate() const {
        if (dim() < 1) throw Error("embedding matrix: dim must be >= 1");
        if (!values.allFinite()) throw Error("embedding matrix: non-finite value");
        if (coords && static_cast<Index>(coords->size()) != count())
            throw Error("embedding matrix: coords length does not match instance count");
        if (instance_labels) {
            if (static_cast<Index>(instance_labels->size()) != count())
                throw Error("embedding matrix: instance label length does not match instance count");
            for (std::uint8_t l : *instance_labels)
                if (l > 1) throw Error("embedding matrix: instance label outside {0,1}");
        }
    }
};

struct BagRecord {
    std::string bag_id;
    int label = 0;  // bag label Y in {0,1}
    std::filesystem::path embedding_path;
};

struct Manifest {
    std::vector<BagRecord> records;
};

// Representative negative instances concatenated across negative bags.
// Every column must have strictly positive norm (cosine similarity needs it).
struct KeyMatrix {
    Matrix values;  // D x tau

    Index dim() const { return values.rows(); }
    Index count() const { return values.cols(); }

    void validate() const {
        if (!values.allFinite()) throw Error("key matrix: non-finite value");
        for (Index j = 0; j < values.cols(); ++j)
            if (values.col(j).norm() == 0.0)
                throw Error("key matrix: zero-norm key column");
    }
};

// Result of salient instance selection on one bag: the retained columns,
// their saliency scores (non-increasing), and their original indices.
struct SalientBag {
    std::string source_bag_id;
    std::vector<Index> selected_indices;
    Vector saliency;    // aligned with selected_indices, sorted non-increasing
    Matrix embeddings;  // D x t, columns in selection order

    Index dim() const { return embeddings.rows(); }
    Index count() const { return embeddings.cols(); }
};

// A fully loaded dataset entry: manifest record plus its embeddings.
struct LabeledEmbeddingBag {
    std::string bag_id;
    int label = 0;
    EmbeddingMatrix embeddings;
};

}  // namespace siimil
