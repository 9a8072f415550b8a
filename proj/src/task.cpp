#include "ape/task.hpp"

#include "ape/error.hpp"

namespace ape {

std::vector<std::size_t> one_hot_indices(const DenseMatrix& labels) {
    std::vector<std::size_t> out(labels.rows());
    for (std::size_t r = 0; r < labels.rows(); ++r) {
        std::size_t ones = 0;
        for (std::size_t c = 0; c < labels.cols(); ++c) {
            const double x = labels(r, c);
            if (x == 1.0) {
                out[r] = c;
                ++ones;
            } else {
                require(x == 0.0, ErrorKind::NonOneHot,
                        "support_labels row " + std::to_string(r) + " has entry " +
                            std::to_string(x) + " at column " + std::to_string(c));
            }
        }
        require(ones == 1, ErrorKind::NonOneHot,
                "support_labels row " + std::to_string(r) + " has " + std::to_string(ones) +
                    " ones");
    }
    return out;
}

DenseMatrix one_hot(std::span<const std::size_t> labels, std::size_t classes) {
    DenseMatrix out(labels.size(), classes);
    for (std::size_t r = 0; r < labels.size(); ++r) {
        require(labels[r] < classes, ErrorKind::InvalidArgument,
                "label " + std::to_string(labels[r]) + " out of range");
        out(r, labels[r]) = 1.0;
    }
    return out;
}

void FewShotTask::validate() const {
    auto shape = [](const std::string& role, const DenseMatrix& m, std::size_t rows,
                    std::size_t cols) {
        require(m.rows() == rows && m.cols() == cols, ErrorKind::ShapeMismatch,
                role + " is " + shape_string(m) + ", expected " + std::to_string(rows) + "x" +
                    std::to_string(cols));
    };
    require(c >= 1 && k >= 1 && d >= 1, ErrorKind::ShapeMismatch,
            "task dims must be positive (C=" + std::to_string(c) + " K=" + std::to_string(k) +
                " D=" + std::to_string(d) + ")");
    shape("text_features", text_features, c, d);
    shape("support_features", support_features, c * k, d);
    shape("support_labels", support_labels, c * k, c);
    require(test_features.cols() == d, ErrorKind::ShapeMismatch,
            "test_features has " + std::to_string(test_features.cols()) + " channels, expected " +
                std::to_string(d));

    const auto idx = one_hot_indices(support_labels);
    for (std::size_t r = 0; r < idx.size(); ++r) {
        require(idx[r] == support_class(r), ErrorKind::NonOneHot,
                "support_labels row " + std::to_string(r) + " is class " +
                    std::to_string(idx[r]) + " but class-major order expects " +
                    std::to_string(support_class(r)));
    }
    auto check_labels = [&](const std::string& role, const std::vector<std::size_t>& labels,
                            std::size_t rows) {
        require(labels.size() == rows, ErrorKind::ShapeMismatch,
                role + " has " + std::to_string(labels.size()) + " entries, expected " +
                    std::to_string(rows));
        for (std::size_t label : labels) {
            require(label < c, ErrorKind::ShapeMismatch,
                    role + " contains class " + std::to_string(label) + " >= C");
        }
    };
    if (test_labels) check_labels("test_labels", *test_labels, test_features.rows());
    require(val_features.has_value() == val_labels.has_value(), ErrorKind::ShapeMismatch,
            "val_features and val_labels must be given together");
    if (val_features) {
        require(val_features->cols() == d, ErrorKind::ShapeMismatch,
                "val_features has wrong channel count");
        check_labels("val_labels", *val_labels, val_features->rows());
    }
    require(class_names.empty() || class_names.size() == c, ErrorKind::ShapeMismatch,
            "class_names has " + std::to_string(class_names.size()) + " entries, expected " +
                std::to_string(c));
}

}  // namespace ape
