#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "ape/task.hpp"
#include "ape/trainer.hpp"
#include "oracles.hpp"

namespace testing_helpers {

inline ape::FewShotTask random_task(std::size_t c, std::size_t k, std::size_t d, std::size_t n,
                                    std::mt19937_64& rng) {
    ape::FewShotTask task;
    task.c = c;
    task.k = k;
    task.d = d;
    task.text_features = oracle::random_unit_rows(c, d, rng);
    task.support_features = oracle::random_unit_rows(c * k, d, rng);
    std::vector<std::size_t> classes(c * k);
    for (std::size_t i = 0; i < classes.size(); ++i) classes[i] = i / k;
    task.support_labels = ape::one_hot(classes, c);
    task.test_features = oracle::random_unit_rows(n, d, rng);
    std::vector<std::size_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = i % c;
    task.test_labels = labels;
    return task;
}

struct GradientCheck {
    double max_rel_error = 0.0;
    double max_abs_grad = 0.0;
};

/// Compares backward() against central differences of an independent loop-level
/// loss over a random task with non-trivial residuals and scores.
inline GradientCheck gradient_check(std::uint64_t seed, double h = 1e-5) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> cdist(2, 4), kdist(1, 3), ddist(4, 8);
    const std::size_t c = cdist(rng), k = kdist(rng), d = ddist(rng);
    const auto task = random_task(c, k, d, 6, rng);
    std::uniform_int_distribution<std::size_t> qdist(1, std::min<std::size_t>(6, d));
    std::uniform_real_distribution<double> adist(0.3, 3.0), bdist(0.5, 6.0), lam(0.0, 1.0);
    ape::engine::EngineConfig cfg;
    cfg.alpha = adist(rng);
    cfg.beta = bdist(rng);
    cfg.renormalize = (seed % 2) == 0;
    const auto mask = ape::refine::refine_prototypes(task.text_features, lam(rng), qdist(rng));
    auto state = ape::trainer::init_state(task, mask, cfg);
    std::normal_distribution<double> noise(0.0, 0.1);
    std::uniform_real_distribution<double> sdist(0.5, 1.5);
    for (double& x : state.res.data()) x = noise(rng);
    for (double& s : state.scores) s = sdist(rng);

    const auto& batch = task.test_features;
    const std::vector<std::size_t>& labels = *task.test_labels;
    const auto grads = ape::trainer::backward(state, batch, labels, cfg);

    oracle::Problem p{state.text_features, state.support_refined, mask.selected, c, k,
                      cfg.alpha, cfg.beta, cfg.renormalize};
    const std::size_t nres = state.res.size();
    std::vector<double> x(state.res.data().begin(), state.res.data().end());
    x.insert(x.end(), state.scores.begin(), state.scores.end());
    const auto numeric = oracle::central_differences(
        x,
        [&](const std::vector<double>& v) {
            ape::DenseMatrix res(c, mask.q(), std::vector<double>(v.begin(), v.begin() + nres));
            std::vector<double> scores(v.begin() + nres, v.end());
            return oracle::mean_cross_entropy(p, batch, labels, res, scores);
        },
        h);
    std::vector<double> analytic(grads.d_res.data().begin(), grads.d_res.data().end());
    analytic.insert(analytic.end(), grads.d_scores.begin(), grads.d_scores.end());
    GradientCheck out;
    out.max_rel_error = oracle::max_relative_error(analytic, numeric);
    for (double g : analytic) out.max_abs_grad = std::max(out.max_abs_grad, std::abs(g));
    return out;
}

}  // namespace testing_helpers
