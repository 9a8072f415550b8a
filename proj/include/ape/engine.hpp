#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ape/matrix.hpp"
#include "ape/numkit.hpp"
#include "ape/refine.hpp"
#include "ape/task.hpp"

namespace ape::engine {

/// Scalars for refinement and training-free inference.
struct EngineConfig {
    double lambda = 0.7;          // similarity/variance blend
    std::size_t q = 0;            // refined channels; 0 means all D
    double alpha = 1.0;           // cache-term weight
    double beta = 5.5;            // affinity sharpness
    double gamma = 0.2;           // cache-score smoothing
    int kl_sign = +1;             // exp(kl_sign * gamma * KL)
    double kl_temperature = 1.0;  // softmax temperature applied to F'W'^T
    bool renormalize = true;      // re-L2-normalize after channel dropping

    /// Throws InvalidArgument on out-of-range scalars; `d` bounds q.
    void validate(std::size_t d) const;
    std::size_t effective_q(std::size_t d) const noexcept { return q == 0 ? d : q; }
};

/// R_fW = f W^T.
DenseMatrix zero_shot_logits(const DenseMatrix& f_batch, const DenseMatrix& w);

/// exp(-beta (1 - f' F'^T)).
DenseMatrix cache_affinity(const DenseMatrix& f_refined, const DenseMatrix& support_refined,
                           double beta);

/// Per-support-sample score exp(kl_sign * gamma * KL(onehot || softmax(F'W'^T / T))).
std::vector<double> cache_scores(const DenseMatrix& support_refined, const DenseMatrix& w_refined,
                                 const DenseMatrix& labels, double gamma, int kl_sign,
                                 double kl_temperature);

/// affinity * diag(scores) * labels: each support sample votes into its own class column.
DenseMatrix cache_term(const DenseMatrix& affinity, std::span<const double> scores,
                       const DenseMatrix& labels);

/// zero_shot + alpha * cache. alpha == 0 returns zero_shot untouched.
DenseMatrix combine_logits(const DenseMatrix& zero_shot, const DenseMatrix& cache, double alpha);

/// Refined cache prepared once and queried many times.
class ApeModel {
public:
    ApeModel(const FewShotTask& task, const refine::ChannelMask& mask, const EngineConfig& cfg);

    DenseMatrix logits(const DenseMatrix& queries) const;

    const DenseMatrix& text_refined() const noexcept { return w_refined_; }
    const DenseMatrix& support_refined() const noexcept { return support_refined_; }
    const std::vector<double>& scores() const noexcept { return scores_; }

private:
    DenseMatrix text_features_;
    DenseMatrix labels_;
    refine::ChannelMask mask_;
    EngineConfig cfg_;
    DenseMatrix w_refined_;
    DenseMatrix support_refined_;
    std::vector<double> scores_;
};

/// Training-free trilateral logits on the task's test features.
DenseMatrix ape_logits(const FewShotTask& task, const refine::ChannelMask& mask,
                       const EngineConfig& cfg);

/// Bilateral cache baseline: f W^T + alpha exp(-beta (1 - f F^T)) L on full-D features.
DenseMatrix tip_adapter_logits(const FewShotTask& task, double alpha, double beta);
DenseMatrix tip_adapter_logits(const FewShotTask& task, const DenseMatrix& queries, double alpha,
                               double beta);

}  // namespace ape::engine
