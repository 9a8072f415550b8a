#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "ape/matrix.hpp"
#include "ape/numkit.hpp"

namespace ape::refine {

enum class CriterionKind { Similarity, Variance, Blended };

/// One score per feature channel.
struct CriterionVector {
    CriterionKind kind = CriterionKind::Blended;
    std::vector<double> values;
};

/// The Q retained channels out of D, with the blended scores that chose them.
/// `selected` is stored in ascending channel order so that a full mask is an
/// identity projection.
struct ChannelMask {
    std::vector<std::size_t> selected;
    std::size_t d_total = 0;
    std::vector<double> scores;
    double lambda = 0.0;

    std::size_t q() const noexcept { return selected.size(); }
    bool is_selected(std::size_t channel) const;

    static ChannelMask full(std::size_t d);
};

/// S_k = (1/C^2) sum_i sum_{j!=i} x_k^i x_k^j over unit-norm class prototypes.
CriterionVector inter_class_similarity(const DenseMatrix& prototypes);

/// V_k = (1/C) sum_i (x_k^i - mean_k)^2.
CriterionVector inter_class_variance(const DenseMatrix& prototypes);

/// J_k = lambda * S_k - (1 - lambda) * V_k.
CriterionVector blend(const CriterionVector& similarity, const CriterionVector& variance,
                      double lambda);

/// Keeps the q channels with the smallest J_k; ties go to the lower index.
ChannelMask select_channels(const CriterionVector& similarity, const CriterionVector& variance,
                            double lambda, std::size_t q);

/// Convenience: criteria straight from prototypes.
ChannelMask refine_prototypes(const DenseMatrix& prototypes, double lambda, std::size_t q);

/// Projects columns onto the mask. With `renormalize`, each projected row is
/// re-L2-normalized; zero rows pass through and are reported.
DenseMatrix apply_mask(const DenseMatrix& m, const ChannelMask& mask, bool renormalize,
                       Diagnostics* diag = nullptr);

/// Text mask file: `APE-MASK v1 D=<d> Q=<q> lambda=<l>` then D lines of
/// `index score selected`.
void write_mask(const std::filesystem::path& path, const ChannelMask& mask);
ChannelMask read_mask(const std::filesystem::path& path);

std::string format_mask(const ChannelMask& mask);
ChannelMask parse_mask(const std::string& text);

}  // namespace ape::refine
