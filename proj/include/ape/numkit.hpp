#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ape/matrix.hpp"

namespace ape {

/// Collects non-fatal conditions (zero rows, renormalized inputs) so callers
/// can surface them. Passing nullptr discards them.
struct Diagnostics {
    std::vector<std::string> warnings;

    void warn(std::string message) { warnings.push_back(std::move(message)); }
    bool empty() const noexcept { return warnings.empty(); }
};

}  // namespace ape

namespace ape::numkit {

/// Probability floor used before taking logs.
inline constexpr double kProbabilityFloor = 1e-12;

/// Throws NonFinite naming `what` if any entry is NaN or Inf.
void check_finite(const DenseMatrix& m, const std::string& what);

double dot(std::span<const double> a, std::span<const double> b) noexcept;
double norm(std::span<const double> a) noexcept;

/// Scales each nonzero row to unit Euclidean norm. Zero rows pass through
/// unchanged and are reported to `diag`.
DenseMatrix l2_normalize_rows(const DenseMatrix& m, Diagnostics* diag = nullptr);

/// Row-wise softmax of m / temperature with max subtraction.
DenseMatrix softmax_rows(const DenseMatrix& m, double temperature);

/// In-place softmax of a single row; the span is overwritten with probabilities.
void softmax_inplace(std::span<double> row, double temperature = 1.0);

/// KL(onehot(label) || pred) = -ln(max(pred[label], floor)).
double kl_one_hot(std::span<const double> pred_row, std::size_t label_index);

/// a * b^T for a (n x d) and b (m x d).
DenseMatrix matmul_transposed(const DenseMatrix& a, const DenseMatrix& b);

/// a * b for a (n x k) and b (k x m).
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);

/// Index of the largest entry in each row; ties go to the lower index.
std::vector<std::size_t> argmax_rows(const DenseMatrix& m);

/// Shortest decimal text that parses back to exactly `x`.
std::string format_exact(double x);

/// Percentage of rows whose argmax equals the label.
double accuracy_percent(const DenseMatrix& logits, std::span<const std::size_t> labels);

}  // namespace ape::numkit
