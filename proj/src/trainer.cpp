#include "ape/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "ape/binio.hpp"
#include "ape/error.hpp"
#include "ape/fsutil.hpp"
#include "ape/numkit.hpp"

namespace ape::trainer {

namespace {

constexpr std::string_view kCheckpointMagic = "APE-CKPT v1\n";

struct ForwardCache {
    DenseMatrix zero_shot;  // B x C
    DenseMatrix refined;    // f', B x Q
    DenseMatrix affinity;   // B x CK
    DenseMatrix logits;     // B x C
};

ForwardCache run_forward(const TrainState& state, const DenseMatrix& f_batch,
                         const engine::EngineConfig& cfg, const DenseMatrix& text_res,
                         const DenseMatrix& cache_res, std::span<const double> scores) {
    require(f_batch.cols() == state.d(), ErrorKind::DimensionMismatch,
            "forward: batch has " + std::to_string(f_batch.cols()) + " channels, state expects " +
                std::to_string(state.d()));
    require(scores.size() == state.support_labels.rows(), ErrorKind::DimensionMismatch,
            "forward: score vector length mismatch");
    ForwardCache fc;
    fc.zero_shot = engine::zero_shot_logits(f_batch, padded_text(state, text_res));
    if (cfg.alpha == 0.0) {
        fc.logits = fc.zero_shot;
        return fc;
    }
    fc.refined = refine::apply_mask(f_batch, state.mask, cfg.renormalize);
    fc.affinity =
        engine::cache_affinity(fc.refined, expanded_cache(state, cache_res), cfg.beta);
    fc.logits = engine::combine_logits(
        fc.zero_shot, engine::cache_term(fc.affinity, scores, state.support_labels), cfg.alpha);
    return fc;
}

void check_res_shape(const TrainState& state, const DenseMatrix& res) {
    require(res.rows() == state.c && res.cols() == state.q(), ErrorKind::DimensionMismatch,
            "residual is " + shape_string(res) + ", expected " + std::to_string(state.c) + "x" +
                std::to_string(state.q()));
}

}  // namespace

void OptimConfig::validate() const {
    require(lr > 0.0 && std::isfinite(lr), ErrorKind::InvalidArgument, "lr must be > 0");
    require(weight_decay >= 0.0, ErrorKind::InvalidArgument, "weight_decay must be >= 0");
    require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0,
            ErrorKind::InvalidArgument, "AdamW betas must lie in [0, 1)");
    require(eps > 0.0, ErrorKind::InvalidArgument, "eps must be > 0");
    require(batch_size >= 1, ErrorKind::InvalidArgument, "batch_size must be >= 1");
}

std::size_t param_count(std::size_t c, std::size_t q, std::size_t k) { return c * q + c * k; }

std::uint64_t TrainState::frozen_checksum() const {
    binio::Fnv1a h;
    h.update(text_features.data());
    h.update(support_refined.data());
    h.update(support_labels.data());
    for (std::size_t s : mask.selected) {
        const std::uint64_t x = s;
        h.update(&x, sizeof x);
    }
    return h.digest();
}

TrainState init_state(const FewShotTask& task, const refine::ChannelMask& mask,
                      const engine::EngineConfig& cfg) {
    task.validate();
    require(task.c * task.k >= 1, ErrorKind::InvalidArgument, "empty support set");
    const engine::ApeModel model(task, mask, cfg);
    TrainState state;
    state.mask = mask;
    state.c = task.c;
    state.k = task.k;
    state.text_features = task.text_features;
    state.support_refined = model.support_refined();
    state.support_labels = task.support_labels;
    state.res = DenseMatrix(task.c, mask.q(), 0.0);
    state.scores = model.scores();
    state.res_moments = Moments(state.res.size());
    state.score_moments = Moments(state.scores.size());
    return state;
}

DenseMatrix padded_text(const TrainState& state, const DenseMatrix& res) {
    check_res_shape(state, res);
    DenseMatrix out = state.text_features;
    for (std::size_t c = 0; c < state.c; ++c) {
        for (std::size_t q = 0; q < state.q(); ++q) {
            out(c, state.mask.selected[q]) += res(c, q);
        }
    }
    return out;
}

DenseMatrix expanded_cache(const TrainState& state, const DenseMatrix& res) {
    check_res_shape(state, res);
    DenseMatrix out = state.support_refined;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        const auto r = res.row(i / state.k);
        auto dst = out.row(i);
        for (std::size_t q = 0; q < dst.size(); ++q) dst[q] += r[q];
    }
    return out;
}

DenseMatrix forward_with_residuals(const TrainState& state, const DenseMatrix& f_batch,
                                   const engine::EngineConfig& cfg, const DenseMatrix& text_res,
                                   const DenseMatrix& cache_res, std::span<const double> scores) {
    return run_forward(state, f_batch, cfg, text_res, cache_res, scores).logits;
}

DenseMatrix forward(const TrainState& state, const DenseMatrix& f_batch,
                    const engine::EngineConfig& cfg) {
    return forward_with_residuals(state, f_batch, cfg, state.res, state.res, state.scores);
}

double cross_entropy(const DenseMatrix& logits, std::span<const std::size_t> labels) {
    require(logits.rows() == labels.size() && !labels.empty(), ErrorKind::DimensionMismatch,
            "cross_entropy: logits rows vs labels");
    double total = 0.0;
    for (std::size_t b = 0; b < labels.size(); ++b) {
        const auto row = logits.row(b);
        require(labels[b] < row.size(), ErrorKind::InvalidArgument, "label out of range");
        const double peak = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (double x : row) sum += std::exp(x - peak);
        total += peak + std::log(sum) - row[labels[b]];
    }
    return total / static_cast<double>(labels.size());
}

Gradients backward(const TrainState& state, const DenseMatrix& f_batch,
                   std::span<const std::size_t> labels, const engine::EngineConfig& cfg) {
    const ForwardCache fc = run_forward(state, f_batch, cfg, state.res, state.res, state.scores);
    const std::size_t batch = f_batch.rows();
    require(labels.size() == batch && batch > 0, ErrorKind::DimensionMismatch,
            "backward: batch and label counts differ");

    Gradients g;
    g.loss = cross_entropy(fc.logits, labels);

    // dL/dlogits = (softmax - onehot) / B
    DenseMatrix dlogits = numkit::softmax_rows(fc.logits, 1.0);
    const double inv_b = 1.0 / static_cast<double>(batch);
    for (std::size_t b = 0; b < batch; ++b) {
        dlogits(b, labels[b]) -= 1.0;
        for (double& x : dlogits.row(b)) x *= inv_b;
    }

    const std::size_t c_count = state.c;
    const std::size_t q_count = state.q();
    const std::size_t cache_rows = state.support_labels.rows();

    // Text path: logits[b,c] gains sum_q f[b, sel_q] * res[c,q].
    g.d_res_text = DenseMatrix(c_count, q_count, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t c = 0; c < c_count; ++c) {
            const double gbc = dlogits(b, c);
            for (std::size_t q = 0; q < q_count; ++q) {
                g.d_res_text(c, q) += gbc * f_batch(b, state.mask.selected[q]);
            }
        }
    }

    g.d_res_cache = DenseMatrix(c_count, q_count, 0.0);
    g.d_scores.assign(cache_rows, 0.0);
    if (cfg.alpha != 0.0) {
        // Cache path: logits[b, c_i] gains alpha * s_i * A[b,i], with
        // A[b,i] = exp(-beta (1 - f'_b . (F'_i + res[c_i]))), so
        // dA[b,i]/dres[c_i,q] = beta * A[b,i] * f'[b,q].
        for (std::size_t i = 0; i < cache_rows; ++i) {
            const std::size_t ci = i / state.k;
            double score_grad = 0.0;
            for (std::size_t b = 0; b < batch; ++b) {
                const double upstream = dlogits(b, ci) * fc.affinity(b, i);
                score_grad += upstream;
                const double coeff = upstream * cfg.alpha * state.scores[i] * cfg.beta;
                if (coeff == 0.0) continue;
                for (std::size_t q = 0; q < q_count; ++q) {
                    g.d_res_cache(ci, q) += coeff * fc.refined(b, q);
                }
            }
            g.d_scores[i] = cfg.alpha * score_grad;
        }
    }

    g.d_res = g.d_res_text;
    auto dst = g.d_res.data();
    const auto src = g.d_res_cache.data();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    return g;
}

void adamw_update(std::span<double> params, std::span<const double> grads, Moments& moments,
                  std::size_t step, double lr_t, const OptimConfig& optim) {
    require(params.size() == grads.size() && params.size() == moments.m.size() &&
                params.size() == moments.v.size(),
            ErrorKind::DimensionMismatch, "adamw_update: tensor sizes differ");
    require(step >= 1, ErrorKind::InvalidArgument, "adamw_update: step is 1-based");
    const double t = static_cast<double>(step);
    const double bias1 = 1.0 - std::pow(optim.beta1, t);
    const double bias2 = 1.0 - std::pow(optim.beta2, t);
    for (std::size_t j = 0; j < params.size(); ++j) {
        const double grad = grads[j];
        // decoupled decay acts on the parameter before the adaptive step
        params[j] -= lr_t * optim.weight_decay * params[j];
        double& m = moments.m[j];
        double& v = moments.v[j];
        m = optim.beta1 * m + (1.0 - optim.beta1) * grad;
        v = optim.beta2 * v + (1.0 - optim.beta2) * grad * grad;
        const double m_hat = m / bias1;
        const double v_hat = v / bias2;
        params[j] -= lr_t * m_hat / (std::sqrt(v_hat) + optim.eps);
    }
}

void adamw_step(TrainState& state, const Gradients& grads, double lr_t, const OptimConfig& optim) {
    require(grads.d_res.rows() == state.res.rows() && grads.d_res.cols() == state.res.cols() &&
                grads.d_scores.size() == state.scores.size(),
            ErrorKind::DimensionMismatch, "adamw_step: gradient shapes do not match state");
    ++state.step;
    adamw_update(state.res.data(), grads.d_res.data(), state.res_moments, state.step, lr_t, optim);
    adamw_update(state.scores, grads.d_scores, state.score_moments, state.step, lr_t, optim);
}

double cosine_lr(std::size_t step, std::size_t total_steps, double base_lr) {
    require(total_steps > 0, ErrorKind::InvalidArgument, "cosine_lr: total_steps must be > 0");
    require(step <= total_steps, ErrorKind::InvalidArgument,
            "cosine_lr: step " + std::to_string(step) + " beyond total " +
                std::to_string(total_steps));
    const double phase = std::numbers::pi * static_cast<double>(step) /
                         static_cast<double>(total_steps);
    return 0.5 * base_lr * (1.0 + std::cos(phase));
}

TrainResult train(const FewShotTask& task, const refine::ChannelMask& mask,
                  const engine::EngineConfig& cfg, const OptimConfig& optim) {
    optim.validate();
    require(task.c * task.k > 0 && task.support_features.rows() > 0, ErrorKind::InvalidArgument,
            "train: empty support set");
    TrainResult result{init_state(task, mask, cfg), {}};
    TrainState& state = result.state;
    TrainHistory& history = result.history;
    const std::uint64_t frozen = state.frozen_checksum();

    const std::vector<std::size_t> support_labels = one_hot_indices(task.support_labels);
    auto evaluate = [&](std::optional<double>& test_acc) {
        const double support_acc = numkit::accuracy_percent(
            forward(state, task.support_features, cfg), support_labels);
        if (task.test_labels) {
            test_acc = numkit::accuracy_percent(forward(state, task.test_features, cfg),
                                                *task.test_labels);
        }
        return support_acc;
    };
    history.initial_support_accuracy = evaluate(history.initial_test_accuracy);

    const std::size_t n = task.support_features.rows();
    const std::size_t batches_per_epoch = (n + optim.batch_size - 1) / optim.batch_size;
    const std::size_t total_steps =
        optim.total_steps > 0 ? optim.total_steps : optim.epochs * batches_per_epoch;

    std::mt19937_64 rng(optim.seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 0; epoch < optim.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        double lr_t = 0.0;
        for (std::size_t start = 0; start < n; start += optim.batch_size) {
            const std::size_t end = std::min(n, start + optim.batch_size);
            DenseMatrix batch(end - start, task.d);
            std::vector<std::size_t> labels(end - start);
            for (std::size_t r = start; r < end; ++r) {
                const auto src = task.support_features.row(order[r]);
                std::copy(src.begin(), src.end(), batch.row(r - start).begin());
                labels[r - start] = support_labels[order[r]];
            }
            const Gradients grads = backward(state, batch, labels, cfg);
            require(std::isfinite(grads.loss), ErrorKind::NonFinite,
                    "training loss became non-finite at step " + std::to_string(state.step));
            history.step_losses.push_back(grads.loss);
            epoch_loss += grads.loss * static_cast<double>(end - start);
            lr_t = cosine_lr(std::min(state.step, total_steps), total_steps, optim.lr);
            adamw_step(state, grads, lr_t, optim);
        }
        require(state.frozen_checksum() == frozen, ErrorKind::InvalidArgument,
                "frozen cache changed during training");
        EpochRecord record;
        record.epoch = epoch + 1;
        record.loss = epoch_loss / static_cast<double>(n);
        record.lr = lr_t;
        record.support_accuracy = evaluate(record.test_accuracy);
        history.epochs.push_back(record);
    }
    return result;
}

void write_checkpoint(const std::filesystem::path& path, const TrainState& state,
                      const engine::EngineConfig& cfg) {
    binio::Writer w;
    w.bytes(kCheckpointMagic);
    w.u64(state.c);
    w.u64(state.k);
    w.u64(state.q());
    w.u64(state.d());
    for (std::size_t s : state.mask.selected) w.u64(s);
    w.f64s(state.res.data());
    w.f64s(state.scores);
    w.f64s(state.res_moments.m);
    w.f64s(state.res_moments.v);
    w.f64s(state.score_moments.m);
    w.f64s(state.score_moments.v);
    w.u64(state.step);
    // Evaluation payload.
    w.f64(state.mask.lambda);
    w.f64s(state.mask.scores);
    w.f64(cfg.lambda);
    w.f64(cfg.alpha);
    w.f64(cfg.beta);
    w.f64(cfg.gamma);
    w.f64(static_cast<double>(cfg.kl_sign));
    w.f64(cfg.kl_temperature);
    w.u64(cfg.renormalize ? 1 : 0);
    w.f64s(state.text_features.data());
    w.f64s(state.support_refined.data());
    w.u64(state.frozen_checksum());
    fsutil::atomic_write(path, w.str());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    const std::string raw = fsutil::read_file(path);
    binio::Reader r(raw);
    require(raw.size() >= kCheckpointMagic.size() &&
                raw.compare(0, kCheckpointMagic.size(), kCheckpointMagic) == 0,
            ErrorKind::BadMagic, path.string() + " is not an APE-CKPT v1 file");
    r.bytes(kCheckpointMagic.size());

    Checkpoint ck;
    TrainState& s = ck.state;
    s.c = r.u64();
    s.k = r.u64();
    const std::uint64_t q = r.u64();
    const std::uint64_t d = r.u64();
    // Bound every declared count by the bytes actually present before allocating.
    const std::uint64_t budget = r.remaining() / 8;
    require(s.c > 0 && s.k > 0 && q > 0 && d >= q && s.c <= budget && s.k <= budget &&
                d <= budget && s.c * s.k <= budget && s.c * q <= budget && s.c * d <= budget,
            ErrorKind::ShapeOverflow, "checkpoint header dims are inconsistent with file size");

    s.mask.d_total = d;
    s.mask.selected.resize(q);
    for (auto& idx : s.mask.selected) {
        idx = r.u64();
        require(idx < d, ErrorKind::Parse, "checkpoint mask index out of range");
    }
    require(std::is_sorted(s.mask.selected.begin(), s.mask.selected.end()) &&
                std::adjacent_find(s.mask.selected.begin(), s.mask.selected.end()) ==
                    s.mask.selected.end(),
            ErrorKind::Parse, "checkpoint mask indices must be strictly increasing");

    const std::size_t ck_rows = s.c * s.k;
    s.res = DenseMatrix(s.c, q);
    r.f64s(s.res.data());
    s.scores.resize(ck_rows);
    r.f64s(s.scores);
    s.res_moments = Moments(s.res.size());
    r.f64s(s.res_moments.m);
    r.f64s(s.res_moments.v);
    s.score_moments = Moments(ck_rows);
    r.f64s(s.score_moments.m);
    r.f64s(s.score_moments.v);
    s.step = r.u64();

    s.mask.lambda = r.f64();
    s.mask.scores.resize(d);
    r.f64s(s.mask.scores);
    ck.cfg.lambda = r.f64();
    ck.cfg.alpha = r.f64();
    ck.cfg.beta = r.f64();
    ck.cfg.gamma = r.f64();
    ck.cfg.kl_sign = static_cast<int>(r.f64());
    ck.cfg.kl_temperature = r.f64();
    ck.cfg.renormalize = r.u64() != 0;
    ck.cfg.q = q;
    s.text_features = DenseMatrix(s.c, d);
    r.f64s(s.text_features.data());
    s.support_refined = DenseMatrix(ck_rows, q);
    r.f64s(s.support_refined.data());
    const std::uint64_t checksum = r.u64();
    require(r.remaining() == 0, ErrorKind::Parse, "trailing bytes after checkpoint payload");

    s.support_labels = DenseMatrix(ck_rows, s.c);
    for (std::size_t i = 0; i < ck_rows; ++i) s.support_labels(i, i / s.k) = 1.0;
    require(s.frozen_checksum() == checksum, ErrorKind::Parse,
            "checkpoint frozen-tensor checksum mismatch");
    ck.cfg.validate(d);
    return ck;
}

}  // namespace ape::trainer
