#include "ape/engine.hpp"

#include <cmath>

#include "ape/error.hpp"

namespace ape::engine {

void EngineConfig::validate(std::size_t d) const {
    auto finite = [](double x) { return std::isfinite(x); };
    require(finite(lambda) && lambda >= 0.0 && lambda <= 1.0, ErrorKind::InvalidArgument,
            "lambda must lie in [0, 1]");
    require(effective_q(d) >= 1 && effective_q(d) <= d, ErrorKind::InvalidArgument,
            "q must lie in [1, " + std::to_string(d) + "], got " + std::to_string(q));
    require(finite(alpha) && alpha >= 0.0, ErrorKind::InvalidArgument, "alpha must be >= 0");
    require(finite(beta) && beta >= 0.0, ErrorKind::InvalidArgument, "beta must be >= 0");
    require(finite(gamma) && gamma >= 0.0, ErrorKind::InvalidArgument, "gamma must be >= 0");
    require(kl_sign == 1 || kl_sign == -1, ErrorKind::InvalidArgument, "kl_sign must be +1 or -1");
    require(finite(kl_temperature) && kl_temperature > 0.0, ErrorKind::InvalidArgument,
            "kl_temperature must be > 0");
}

DenseMatrix zero_shot_logits(const DenseMatrix& f_batch, const DenseMatrix& w) {
    require(f_batch.cols() == w.cols(), ErrorKind::DimensionMismatch,
            "zero_shot_logits: features " + shape_string(f_batch) + " vs text " + shape_string(w));
    return numkit::matmul_transposed(f_batch, w);
}

DenseMatrix cache_affinity(const DenseMatrix& f_refined, const DenseMatrix& support_refined,
                           double beta) {
    require(f_refined.cols() == support_refined.cols(), ErrorKind::DimensionMismatch,
            "cache_affinity: queries " + shape_string(f_refined) + " vs cache " +
                shape_string(support_refined));
    require(beta >= 0.0, ErrorKind::InvalidArgument, "beta must be >= 0");
    DenseMatrix out = numkit::matmul_transposed(f_refined, support_refined);
    for (double& x : out.data()) {
        x = std::exp(-beta * (1.0 - x));
    }
    return out;
}

std::vector<double> cache_scores(const DenseMatrix& support_refined, const DenseMatrix& w_refined,
                                 const DenseMatrix& labels, double gamma, int kl_sign,
                                 double kl_temperature) {
    require(labels.rows() == support_refined.rows() && labels.cols() == w_refined.rows(),
            ErrorKind::DimensionMismatch,
            "cache_scores: labels " + shape_string(labels) + " vs support " +
                shape_string(support_refined) + " and text " + shape_string(w_refined));
    require(gamma >= 0.0, ErrorKind::InvalidArgument, "gamma must be >= 0");
    require(kl_sign == 1 || kl_sign == -1, ErrorKind::InvalidArgument, "kl_sign must be +1 or -1");
    const auto classes = one_hot_indices(labels);
    DenseMatrix pred = numkit::softmax_rows(
        numkit::matmul_transposed(support_refined, w_refined), kl_temperature);
    std::vector<double> scores(classes.size());
    for (std::size_t i = 0; i < classes.size(); ++i) {
        const double kl = numkit::kl_one_hot(pred.row(i), classes[i]);
        scores[i] = std::exp(static_cast<double>(kl_sign) * gamma * kl);
    }
    return scores;
}

DenseMatrix cache_term(const DenseMatrix& affinity, std::span<const double> scores,
                       const DenseMatrix& labels) {
    require(affinity.cols() == scores.size() && scores.size() == labels.rows(),
            ErrorKind::DimensionMismatch,
            "cache_term: affinity " + shape_string(affinity) + ", " +
                std::to_string(scores.size()) + " scores, labels " + shape_string(labels));
    DenseMatrix weighted = labels;
    for (std::size_t i = 0; i < weighted.rows(); ++i) {
        for (double& x : weighted.row(i)) x *= scores[i];
    }
    return numkit::matmul(affinity, weighted);
}

DenseMatrix combine_logits(const DenseMatrix& zero_shot, const DenseMatrix& cache, double alpha) {
    require(zero_shot.rows() == cache.rows() && zero_shot.cols() == cache.cols(),
            ErrorKind::DimensionMismatch, "combine_logits: term shapes differ");
    if (alpha == 0.0) return zero_shot;
    DenseMatrix out = zero_shot;
    auto dst = out.data();
    const auto src = cache.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] += alpha * src[i];
    }
    numkit::check_finite(out, "logits");
    return out;
}

ApeModel::ApeModel(const FewShotTask& task, const refine::ChannelMask& mask,
                   const EngineConfig& cfg)
    : text_features_(task.text_features), labels_(task.support_labels), mask_(mask), cfg_(cfg) {
    cfg_.validate(task.d);
    require(mask_.d_total == task.d, ErrorKind::DimensionMismatch,
            "mask covers " + std::to_string(mask_.d_total) + " channels, task has " +
                std::to_string(task.d));
    w_refined_ = refine::apply_mask(task.text_features, mask_, cfg_.renormalize);
    support_refined_ = refine::apply_mask(task.support_features, mask_, cfg_.renormalize);
    scores_ = cache_scores(support_refined_, w_refined_, task.support_labels, cfg_.gamma,
                           cfg_.kl_sign, cfg_.kl_temperature);
}

DenseMatrix ApeModel::logits(const DenseMatrix& queries) const {
    DenseMatrix zero_shot = zero_shot_logits(queries, text_features_);
    if (cfg_.alpha == 0.0) return zero_shot;
    const DenseMatrix refined = refine::apply_mask(queries, mask_, cfg_.renormalize);
    const DenseMatrix affinity = cache_affinity(refined, support_refined_, cfg_.beta);
    return combine_logits(zero_shot, cache_term(affinity, scores_, labels_),
                          cfg_.alpha);
}

DenseMatrix ape_logits(const FewShotTask& task, const refine::ChannelMask& mask,
                       const EngineConfig& cfg) {
    return ApeModel(task, mask, cfg).logits(task.test_features);
}

DenseMatrix tip_adapter_logits(const FewShotTask& task, const DenseMatrix& queries, double alpha,
                               double beta) {
    require(alpha >= 0.0, ErrorKind::InvalidArgument, "alpha must be >= 0");
    DenseMatrix zero_shot = zero_shot_logits(queries, task.text_features);
    if (alpha == 0.0) return zero_shot;
    const DenseMatrix affinity = cache_affinity(queries, task.support_features, beta);
    const DenseMatrix cache = numkit::matmul(affinity, task.support_labels);
    return combine_logits(zero_shot, cache, alpha);
}

DenseMatrix tip_adapter_logits(const FewShotTask& task, double alpha, double beta) {
    return tip_adapter_logits(task, task.test_features, alpha, beta);
}

}  // namespace ape::engine
