#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "ape/engine.hpp"
#include "ape/matrix.hpp"
#include "ape/refine.hpp"
#include "ape/task.hpp"

namespace ape::trainer {

struct OptimConfig {
    double lr = 1e-3;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t epochs = 20;
    std::size_t batch_size = 256;
    std::size_t total_steps = 0;  // 0: epochs * ceil(CK / batch_size)
    std::uint64_t seed = 0;

    void validate() const;
};

struct Moments {
    std::vector<double> m;
    std::vector<double> v;

    explicit Moments(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

/// Learnable residuals and cache scores plus the frozen refined cache they sit on.
struct TrainState {
    DenseMatrix res;              // C x Q
    std::vector<double> scores;   // CK
    Moments res_moments;
    Moments score_moments;
    std::size_t step = 0;

    // Frozen after init_state.
    refine::ChannelMask mask;
    DenseMatrix text_features;    // W, C x D
    DenseMatrix support_refined;  // F', CK x Q
    DenseMatrix support_labels;   // L, CK x C
    std::size_t c = 0;
    std::size_t k = 0;

    std::size_t q() const noexcept { return mask.q(); }
    std::size_t d() const noexcept { return mask.d_total; }
    std::size_t learnable_parameters() const noexcept { return res.size() + scores.size(); }

    /// Fingerprint over W, F', L and the mask indices.
    std::uint64_t frozen_checksum() const;
};

struct Gradients {
    DenseMatrix d_res;              // text path + cache path
    std::vector<double> d_scores;
    DenseMatrix d_res_text;         // through f (W + Pad(Res))^T only
    DenseMatrix d_res_cache;        // through the F' + Expand(Res) affinity only
    double loss = 0.0;
};

std::size_t param_count(std::size_t c, std::size_t q, std::size_t k);

TrainState init_state(const FewShotTask& task, const refine::ChannelMask& mask,
                      const engine::EngineConfig& cfg);

/// W + Pad(res): residual columns scattered into the selected channels.
DenseMatrix padded_text(const TrainState& state, const DenseMatrix& res);

/// F' + Expand(res): each class residual repeated over its K support rows.
DenseMatrix expanded_cache(const TrainState& state, const DenseMatrix& res);

DenseMatrix forward(const TrainState& state, const DenseMatrix& f_batch,
                    const engine::EngineConfig& cfg);

/// Forward with independent residuals on the text and cache paths; used to
/// isolate each path's contribution.
DenseMatrix forward_with_residuals(const TrainState& state, const DenseMatrix& f_batch,
                                   const engine::EngineConfig& cfg, const DenseMatrix& text_res,
                                   const DenseMatrix& cache_res, std::span<const double> scores);

/// Mean softmax cross-entropy.
double cross_entropy(const DenseMatrix& logits, std::span<const std::size_t> labels);

Gradients backward(const TrainState& state, const DenseMatrix& f_batch,
                   std::span<const std::size_t> labels, const engine::EngineConfig& cfg);

/// Decoupled-decay AdamW on one flat tensor. `step` is the 1-based count
/// after this update.
void adamw_update(std::span<double> params, std::span<const double> grads, Moments& moments,
                  std::size_t step, double lr_t, const OptimConfig& optim);

void adamw_step(TrainState& state, const Gradients& grads, double lr_t, const OptimConfig& optim);

/// 0.5 * base_lr * (1 + cos(pi * step / total_steps)).
double cosine_lr(std::size_t step, std::size_t total_steps, double base_lr);

struct EpochRecord {
    std::size_t epoch = 0;
    double loss = 0.0;
    double support_accuracy = 0.0;
    std::optional<double> test_accuracy;
    double lr = 0.0;
};

struct TrainHistory {
    double initial_support_accuracy = 0.0;
    std::optional<double> initial_test_accuracy;
    std::vector<EpochRecord> epochs;
    std::vector<double> step_losses;
};

struct TrainResult {
    TrainState state;
    TrainHistory history;
};

TrainResult train(const FewShotTask& task, const refine::ChannelMask& mask,
                  const engine::EngineConfig& cfg, const OptimConfig& optim);

/// Binary checkpoint: `APE-CKPT v1` line, C K Q D, mask indices, res, scores,
/// optimizer moments and step, followed by the engine config and frozen
/// tensors so a checkpoint can be evaluated without its training task.
void write_checkpoint(const std::filesystem::path& path, const TrainState& state,
                      const engine::EngineConfig& cfg);

struct Checkpoint {
    TrainState state;
    engine::EngineConfig cfg;
};

Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace ape::trainer
