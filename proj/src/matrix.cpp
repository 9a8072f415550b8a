#include "ape/matrix.hpp"

#include <cmath>
#include <cstring>

#include "ape/error.hpp"

namespace ape {

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    require(data_.size() == rows_ * cols_, ErrorKind::DimensionMismatch,
            "data length " + std::to_string(data_.size()) + " does not match " +
                std::to_string(rows_) + "x" + std::to_string(cols_));
}

DenseMatrix DenseMatrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t n = rows.size();
    const std::size_t d = n == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(n * d);
    for (const auto& r : rows) {
        require(r.size() == d, ErrorKind::DimensionMismatch, "ragged row in from_rows");
        data.insert(data.end(), r.begin(), r.end());
    }
    return DenseMatrix(n, d, std::move(data));
}

bool DenseMatrix::all_finite() const noexcept {
    for (double x : data_) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

bool operator==(const DenseMatrix& a, const DenseMatrix& b) noexcept {
    if (a.rows_ != b.rows_ || a.cols_ != b.cols_) return false;
    if (a.data_.empty()) return true;
    return std::memcmp(a.data_.data(), b.data_.data(), a.data_.size() * sizeof(double)) == 0;
}

std::string shape_string(const DenseMatrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace ape
