#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ape/matrix.hpp"

namespace ape {

/// A C-way K-shot problem over precomputed embeddings. Support rows are
/// class-major: row c*K + j is shot j of class c.
struct FewShotTask {
    DenseMatrix text_features;     // C x D
    DenseMatrix support_features;  // CK x D
    DenseMatrix support_labels;    // CK x C, one-hot
    DenseMatrix test_features;     // N x D
    std::optional<std::vector<std::size_t>> test_labels;
    // Optional held-out split used for hyperparameter search.
    std::optional<DenseMatrix> val_features;
    std::optional<std::vector<std::size_t>> val_labels;
    std::size_t c = 0;
    std::size_t k = 0;
    std::size_t d = 0;
    std::vector<std::string> class_names;

    std::size_t support_class(std::size_t row) const noexcept { return row / k; }

    /// Checks shapes, one-hot structure and class-major grouping.
    /// Throws ShapeMismatch / NonOneHot naming the offending role.
    void validate() const;
};

/// Column index of the single 1 in each row. Throws NonOneHot otherwise.
std::vector<std::size_t> one_hot_indices(const DenseMatrix& labels);

DenseMatrix one_hot(std::span<const std::size_t> labels, std::size_t classes);

}  // namespace ape
