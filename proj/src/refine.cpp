#include "ape/refine.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "ape/error.hpp"
#include "ape/fsutil.hpp"

namespace ape::refine {

namespace {

constexpr double kUnitNormTolerance = 1e-6;

void require_prototypes(const DenseMatrix& w, const char* what) {
    require(w.rows() >= 2, ErrorKind::InvalidArgument,
            std::string(what) + " needs at least 2 classes, got " + std::to_string(w.rows()));
    require(w.cols() >= 1, ErrorKind::InvalidArgument, std::string(what) + ": zero channels");
    numkit::check_finite(w, what);
}

}  // namespace

bool ChannelMask::is_selected(std::size_t channel) const {
    return std::binary_search(selected.begin(), selected.end(), channel);
}

ChannelMask ChannelMask::full(std::size_t d) {
    ChannelMask mask;
    mask.selected.resize(d);
    std::iota(mask.selected.begin(), mask.selected.end(), std::size_t{0});
    mask.d_total = d;
    mask.scores.assign(d, 0.0);
    mask.lambda = 1.0;
    return mask;
}

CriterionVector inter_class_similarity(const DenseMatrix& w) {
    require_prototypes(w, "inter_class_similarity");
    for (std::size_t i = 0; i < w.rows(); ++i) {
        const double n = numkit::norm(w.row(i));
        require(std::abs(n - 1.0) <= kUnitNormTolerance, ErrorKind::InvalidArgument,
                "inter_class_similarity: prototype " + std::to_string(i) +
                    " is not unit norm (" + std::to_string(n) + ")");
    }
    const std::size_t c = w.rows();
    const std::size_t d = w.cols();
    const double scale = 1.0 / static_cast<double>(c * c);
    CriterionVector out{CriterionKind::Similarity, std::vector<double>(d, 0.0)};
    // sum_{i != j} x_i x_j = (sum x)^2 - sum x^2 is cheaper but cancels badly
    // when the channel is nearly constant; the pairwise loop is O(C^2 D).
    for (std::size_t k = 0; k < d; ++k) {
        double acc = 0.0;
        for (std::size_t i = 0; i < c; ++i) {
            const double xi = w(i, k);
            for (std::size_t j = 0; j < c; ++j) {
                if (j != i) acc += xi * w(j, k);
            }
        }
        out.values[k] = scale * acc;
    }
    return out;
}

CriterionVector inter_class_variance(const DenseMatrix& w) {
    require_prototypes(w, "inter_class_variance");
    const std::size_t c = w.rows();
    const std::size_t d = w.cols();
    const double inv_c = 1.0 / static_cast<double>(c);
    CriterionVector out{CriterionKind::Variance, std::vector<double>(d, 0.0)};
    for (std::size_t k = 0; k < d; ++k) {
        double mean = 0.0;
        for (std::size_t i = 0; i < c; ++i) mean += w(i, k);
        mean *= inv_c;
        double acc = 0.0;
        for (std::size_t i = 0; i < c; ++i) {
            const double delta = w(i, k) - mean;
            acc += delta * delta;
        }
        out.values[k] = acc * inv_c;
    }
    return out;
}

CriterionVector blend(const CriterionVector& s, const CriterionVector& v, double lambda) {
    require(s.values.size() == v.values.size(), ErrorKind::DimensionMismatch,
            "blend: similarity and variance lengths differ");
    require(lambda >= 0.0 && lambda <= 1.0, ErrorKind::InvalidArgument,
            "lambda must lie in [0, 1]");
    CriterionVector out{CriterionKind::Blended, std::vector<double>(s.values.size())};
    for (std::size_t k = 0; k < s.values.size(); ++k) {
        out.values[k] = lambda * s.values[k] - (1.0 - lambda) * v.values[k];
    }
    return out;
}

ChannelMask select_channels(const CriterionVector& s, const CriterionVector& v, double lambda,
                            std::size_t q) {
    const auto j = blend(s, v, lambda);
    const std::size_t d = j.values.size();
    require(q >= 1 && q <= d, ErrorKind::InvalidArgument,
            "q must lie in [1, " + std::to_string(d) + "], got " + std::to_string(q));

    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return j.values[a] < j.values[b];
    });
    order.resize(q);
    std::sort(order.begin(), order.end());

    ChannelMask mask;
    mask.selected = std::move(order);
    mask.d_total = d;
    mask.scores = j.values;
    mask.lambda = lambda;
    return mask;
}

ChannelMask refine_prototypes(const DenseMatrix& prototypes, double lambda, std::size_t q) {
    return select_channels(inter_class_similarity(prototypes), inter_class_variance(prototypes),
                           lambda, q);
}

DenseMatrix apply_mask(const DenseMatrix& m, const ChannelMask& mask, bool renormalize,
                       Diagnostics* diag) {
    require(m.cols() == mask.d_total, ErrorKind::DimensionMismatch,
            "apply_mask: matrix has " + std::to_string(m.cols()) + " channels, mask expects " +
                std::to_string(mask.d_total));
    DenseMatrix out(m.rows(), mask.q());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t k = 0; k < mask.q(); ++k) {
            out(r, k) = m(r, mask.selected[k]);
        }
    }
    if (!renormalize || out.empty()) return out;
    return numkit::l2_normalize_rows(out, diag);
}

std::string format_mask(const ChannelMask& mask) {
    std::ostringstream os;
    os << "APE-MASK v1 D=" << mask.d_total << " Q=" << mask.q()
       << " lambda=" << numkit::format_exact(mask.lambda) << "\n";
    for (std::size_t k = 0; k < mask.d_total; ++k) {
        const double score = k < mask.scores.size() ? mask.scores[k] : 0.0;
        os << k << ' ' << numkit::format_exact(score) << ' ' << (mask.is_selected(k) ? 1 : 0)
           << "\n";
    }
    return os.str();
}

ChannelMask parse_mask(const std::string& text) {
    std::istringstream is(text);
    std::string magic, version, d_field, q_field, lambda_field;
    is >> magic >> version >> d_field >> q_field >> lambda_field;
    require(magic == "APE-MASK", ErrorKind::BadMagic, "mask file does not start with APE-MASK");
    require(version == "v1", ErrorKind::UnsupportedVersion, "mask version " + version);

    auto field = [](const std::string& token, const std::string& key) {
        require(token.rfind(key + "=", 0) == 0, ErrorKind::Parse,
                "expected " + key + "=<value>, got '" + token + "'");
        return token.substr(key.size() + 1);
    };
    ChannelMask mask;
    try {
        mask.d_total = std::stoull(field(d_field, "D"));
        const std::size_t q = std::stoull(field(q_field, "Q"));
        mask.lambda = std::stod(field(lambda_field, "lambda"));
        mask.scores.assign(mask.d_total, 0.0);
        for (std::size_t k = 0; k < mask.d_total; ++k) {
            std::size_t index = 0;
            double score = 0.0;
            int flag = 0;
            require(static_cast<bool>(is >> index >> score >> flag), ErrorKind::Truncated,
                    "mask file ends after " + std::to_string(k) + " of " +
                        std::to_string(mask.d_total) + " channel lines");
            require(index == k, ErrorKind::Parse, "mask line " + std::to_string(k) +
                                                      " carries index " + std::to_string(index));
            require(flag == 0 || flag == 1, ErrorKind::Parse, "selected flag must be 0 or 1");
            mask.scores[k] = score;
            if (flag == 1) mask.selected.push_back(k);
        }
        require(mask.selected.size() == q, ErrorKind::Parse,
                "header declares Q=" + std::to_string(q) + " but " +
                    std::to_string(mask.selected.size()) + " channels are flagged");
    } catch (const std::logic_error& e) {
        throw Error(ErrorKind::Parse, std::string("malformed mask header: ") + e.what());
    }
    return mask;
}

void write_mask(const std::filesystem::path& path, const ChannelMask& mask) {
    fsutil::atomic_write(path, format_mask(mask));
}

ChannelMask read_mask(const std::filesystem::path& path) {
    return parse_mask(fsutil::read_file(path));
}

}  // namespace ape::refine
