#include "ape/numkit.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>

#include "ape/error.hpp"

namespace ape::numkit {

namespace {
constexpr double kUnitTolerance = 1e-12;
}  // namespace

void check_finite(const DenseMatrix& m, const std::string& what) {
    require(m.all_finite(), ErrorKind::NonFinite, what + " contains NaN or Inf");
}

double dot(std::span<const double> a, std::span<const double> b) noexcept {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += a[i] * b[i];
    }
    return acc;
}

double norm(std::span<const double> a) noexcept { return std::sqrt(dot(a, a)); }

DenseMatrix l2_normalize_rows(const DenseMatrix& m, Diagnostics* diag) {
    require(!m.empty(), ErrorKind::InvalidArgument, "l2_normalize_rows: empty matrix");
    check_finite(m, "l2_normalize_rows input");
    DenseMatrix out = m;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        const double n = norm(row);
        if (n == 0.0) {
            if (diag) diag->warn("row " + std::to_string(r) + " has zero norm; left unnormalized");
            continue;
        }
        // Rows already unit to within kUnitTolerance are left untouched, which
        // makes normalization a bitwise fixed point.
        if (std::abs(n - 1.0) <= kUnitTolerance) continue;
        for (double& x : row) x /= n;
    }
    return out;
}

void softmax_inplace(std::span<double> row, double temperature) {
    require(temperature > 0.0, ErrorKind::InvalidArgument, "softmax temperature must be > 0");
    if (row.empty()) return;
    const double peak = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (double& x : row) {
        x = std::exp((x - peak) / temperature);
        total += x;
    }
    for (double& x : row) x /= total;
}

DenseMatrix softmax_rows(const DenseMatrix& m, double temperature) {
    require(temperature > 0.0, ErrorKind::InvalidArgument, "softmax temperature must be > 0");
    check_finite(m, "softmax_rows input");
    DenseMatrix out = m;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        softmax_inplace(out.row(r), temperature);
    }
    return out;
}

double kl_one_hot(std::span<const double> pred_row, std::size_t label_index) {
    require(label_index < pred_row.size(), ErrorKind::InvalidArgument,
            "kl_one_hot: label " + std::to_string(label_index) + " out of range for " +
                std::to_string(pred_row.size()) + " classes");
    const double p = std::max(pred_row[label_index], kProbabilityFloor);
    // -ln(1) is -0.0; report a clean zero.
    return p >= 1.0 ? 0.0 : -std::log(p);
}

DenseMatrix matmul_transposed(const DenseMatrix& a, const DenseMatrix& b) {
    require(a.cols() == b.cols(), ErrorKind::DimensionMismatch,
            "matmul_transposed: " + shape_string(a) + " vs " + shape_string(b) + "^T");
    DenseMatrix out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const auto ai = a.row(i);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            out(i, j) = dot(ai, b.row(j));
        }
    }
    return out;
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    require(a.cols() == b.rows(), ErrorKind::DimensionMismatch,
            "matmul: " + shape_string(a) + " vs " + shape_string(b));
    DenseMatrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) {
                out(i, j) += aik * b(k, j);
            }
        }
    }
    return out;
}

std::vector<std::size_t> argmax_rows(const DenseMatrix& m) {
    std::vector<std::size_t> out(m.rows(), 0);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const auto row = m.row(r);
        std::size_t best = 0;
        for (std::size_t c = 1; c < row.size(); ++c) {
            if (row[c] > row[best]) best = c;
        }
        out[r] = best;
    }
    return out;
}

std::string format_exact(double x) {
    std::array<char, 32> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), x);
    return std::string(buf.data(), res.ptr);
}

double accuracy_percent(const DenseMatrix& logits, std::span<const std::size_t> labels) {
    require(logits.rows() == labels.size(), ErrorKind::DimensionMismatch,
            "accuracy: " + std::to_string(logits.rows()) + " logit rows vs " +
                std::to_string(labels.size()) + " labels");
    if (labels.empty()) return 0.0;
    const auto pred = argmax_rows(logits);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (pred[i] == labels[i]) ++hits;
    }
    return 100.0 * static_cast<double>(hits) / static_cast<double>(labels.size());
}

}  // namespace ape::numkit
