#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "ape/dataio.hpp"
#include "ape/engine.hpp"
#include "ape/error.hpp"
#include "ape/fsutil.hpp"
#include "ape/trainer.hpp"
#include "helpers.hpp"

using ape::DenseMatrix;
namespace en = ape::engine;
namespace rf = ape::refine;
namespace tr = ape::trainer;
using testing_helpers::random_task;

namespace {

struct Fixture {
    ape::FewShotTask task;
    rf::ChannelMask mask;
    en::EngineConfig cfg;
};

Fixture small_fixture(std::uint64_t seed, std::size_t c = 3, std::size_t k = 2, std::size_t d = 6,
                      std::size_t q = 4) {
    std::mt19937_64 rng(seed);
    Fixture fx{random_task(c, k, d, 5, rng), {}, {}};
    fx.mask = rf::refine_prototypes(fx.task.text_features, 0.7, q);
    fx.cfg.alpha = 1.5;
    fx.cfg.beta = 3.0;
    return fx;
}

void randomize(tr::TrainState& state, std::mt19937_64& rng) {
    std::normal_distribution<double> noise(0.0, 0.1);
    for (double& x : state.res.data()) x = noise(rng);
}

}  // namespace

TEST_CASE("param_count examples") {
    CHECK(tr::param_count(1000, 500, 16) == 516000);
    CHECK(tr::param_count(1, 1, 1) == 2);
    CHECK(tr::param_count(100, 800, 4) == 80400);
    CHECK(1000u * 16u * 1024u == 16384000u);

    const auto fx = small_fixture(1);
    const auto state = tr::init_state(fx.task, fx.mask, fx.cfg);
    CHECK(state.res.size() == fx.task.c * fx.mask.q());
    CHECK(state.scores.size() == fx.task.c * fx.task.k);
    CHECK(state.learnable_parameters() == tr::param_count(fx.task.c, fx.mask.q(), fx.task.k));
}

TEST_CASE("fresh state forward equals training-free logits bitwise") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto fx = small_fixture(100 + seed, 4, 3, 8, 1 + seed % 8);
        fx.cfg.renormalize = seed % 2 == 0;
        const auto state = tr::init_state(fx.task, fx.mask, fx.cfg);
        for (double x : state.res.data()) CHECK(x == 0.0);
        CHECK(tr::forward(state, fx.task.test_features, fx.cfg) ==
              en::ape_logits(fx.task, fx.mask, fx.cfg));
    }
}

TEST_CASE("Pad fills unselected channels with zero and Expand repeats per class") {
    auto fx = small_fixture(2, 3, 2, 7, 4);
    auto state = tr::init_state(fx.task, fx.mask, fx.cfg);
    std::mt19937_64 rng(3);
    randomize(state, rng);
    const auto padded = tr::padded_text(state, state.res);
    for (std::size_t c = 0; c < state.c; ++c) {
        for (std::size_t d = 0; d < state.d(); ++d) {
            const double delta = padded(c, d) - state.text_features(c, d);
            if (!fx.mask.is_selected(d)) CHECK(delta == 0.0);
        }
        for (std::size_t q = 0; q < state.q(); ++q) {
            const std::size_t d = fx.mask.selected[q];
            CHECK(padded(c, d) == state.text_features(c, d) + state.res(c, q));
        }
    }
    const auto expanded = tr::expanded_cache(state, state.res);
    for (std::size_t i = 0; i < expanded.rows(); ++i) {
        for (std::size_t q = 0; q < state.q(); ++q) {
            CHECK(expanded(i, q) == state.support_refined(i, q) + state.res(i / state.k, q));
        }
    }
    CHECK_THROWS_AS(tr::padded_text(state, DenseMatrix(2, 2)), ape::Error);
}

TEST_CASE("perturbing one residual row only changes that class column") {
    auto fx = small_fixture(4, 4, 2, 8, 5);
    auto state = tr::init_state(fx.task, fx.mask, fx.cfg);
    std::mt19937_64 rng(5);
    randomize(state, rng);
    for (std::size_t target = 0; target < state.c; ++target) {
        auto text_res = state.res;
        for (double& x : text_res.row(target)) x += 0.05;
        const auto base = tr::forward(state, fx.task.test_features, fx.cfg);
        const auto text_only = tr::forward_with_residuals(state, fx.task.test_features, fx.cfg,
                                                          text_res, state.res, state.scores);
        const auto cache_only = tr::forward_with_residuals(state, fx.task.test_features, fx.cfg,
                                                           state.res, text_res, state.scores);
        for (std::size_t n = 0; n < base.rows(); ++n) {
            for (std::size_t c = 0; c < state.c; ++c) {
                const bool same_text = text_only(n, c) == base(n, c);
                const bool same_cache = cache_only(n, c) == base(n, c);
                CHECK(same_text == (c != target));
                CHECK(same_cache == (c != target));
            }
        }
    }
}

TEST_CASE("backward matches central differences on the reference instance") {
    // C=3, K=2, Q=4, B=5
    auto fx = small_fixture(6, 3, 2, 6, 4);
    auto state = tr::init_state(fx.task, fx.mask, fx.cfg);
    std::mt19937_64 rng(7);
    randomize(state, rng);
    const auto& labels = *fx.task.test_labels;
    const auto g = tr::backward(state, fx.task.test_features, labels, fx.cfg);
    CHECK(g.loss == doctest::Approx(tr::cross_entropy(tr::forward(state, fx.task.test_features, fx.cfg), labels)).epsilon(1e-15));

    oracle::Problem p{state.text_features, state.support_refined, fx.mask.selected, state.c,
                      state.k, fx.cfg.alpha, fx.cfg.beta, fx.cfg.renormalize};
    CHECK(oracle::mean_cross_entropy(p, fx.task.test_features, labels, state.res, state.scores) ==
          doctest::Approx(g.loss).epsilon(1e-12));

    std::vector<double> r(state.res.data().begin(), state.res.data().end());
    const auto num_res = oracle::central_differences(
        r,
        [&](const std::vector<double>& v) {
            return oracle::mean_cross_entropy(p, fx.task.test_features, labels,
                                              DenseMatrix(state.c, state.q(), v), state.scores);
        },
        1e-5);
    const auto num_scores = oracle::central_differences(
        state.scores,
        [&](const std::vector<double>& v) {
            return oracle::mean_cross_entropy(p, fx.task.test_features, labels, state.res, v);
        },
        1e-5);
    CHECK(oracle::max_relative_error(g.d_res.data(), num_res) < 1e-4);
    CHECK(oracle::max_relative_error(g.d_scores, num_scores) < 1e-4);
}

TEST_CASE("backward matches central differences on random instances") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const auto check = testing_helpers::gradient_check(1000 + seed);
        CAPTURE(seed);
        CHECK(check.max_rel_error < 1e-4);
        CHECK(check.max_abs_grad > 0.0);
    }
}

TEST_CASE("each residual path matches its isolated finite differences") {
    auto fx = small_fixture(8, 3, 3, 7, 5);
    auto state = tr::init_state(fx.task, fx.mask, fx.cfg);
    std::mt19937_64 rng(9);
    randomize(state, rng);
    const auto& labels = *fx.task.test_labels;
    const auto& f = fx.task.test_features;
    const auto g = tr::backward(state, f, labels, fx.cfg);
    std::vector<double> r(state.res.data().begin(), state.res.data().end());
    const auto num_text = oracle::central_differences(
        r,
        [&](const std::vector<double>& v) {
            const DenseMatrix res(state.c, state.q(), v);
            return tr::cross_entropy(
                tr::forward_with_residuals(state, f, fx.cfg, res, state.res, state.scores), labels);
        },
        1e-5);
    const auto num_cache = oracle::central_differences(
        r,
        [&](const std::vector<double>& v) {
            const DenseMatrix res(state.c, state.q(), v);
            return tr::cross_entropy(
                tr::forward_with_residuals(state, f, fx.cfg, state.res, res, state.scores), labels);
        },
        1e-5);
    CHECK(oracle::max_relative_error(g.d_res_text.data(), num_text) < 1e-4);
    CHECK(oracle::max_relative_error(g.d_res_cache.data(), num_cache) < 1e-4);
    for (std::size_t j = 0; j < g.d_res.size(); ++j) {
        CHECK(g.d_res.data()[j] == g.d_res_text.data()[j] + g.d_res_cache.data()[j]);
    }
}

TEST_CASE("alpha zero isolates the text path") {
    auto fx = small_fixture(10);
    fx.cfg.alpha = 0.0;
    auto state = tr::init_state(fx.task, fx.mask, fx.cfg);
    std::mt19937_64 rng(11);
    randomize(state, rng);
    const auto g = tr::backward(state, fx.task.test_features, *fx.task.test_labels, fx.cfg);
    for (double x : g.d_scores) CHECK(x == 0.0);
    for (double x : g.d_res_cache.data()) CHECK(x == 0.0);
    CHECK(g.d_res == g.d_res_text);

    std::vector<double> r(state.res.data().begin(), state.res.data().end());
    const auto num = oracle::central_differences(
        r,
        [&](const std::vector<double>& v) {
            auto s = state;
            s.res = DenseMatrix(state.c, state.q(), v);
            return tr::cross_entropy(tr::forward(s, fx.task.test_features, fx.cfg),
                                     *fx.task.test_labels);
        },
        1e-5);
    CHECK(oracle::max_relative_error(g.d_res.data(), num) < 1e-4);
}

TEST_CASE("gradients vanish at a confident correct prediction") {
    // Huge text prototypes make softmax saturate to the one-hot truth.
    ape::FewShotTask task;
    task.c = 2;
    task.k = 1;
    task.d = 2;
    task.text_features = DenseMatrix::from_rows({{1, 0}, {0, 1}});
    task.support_features = DenseMatrix::from_rows({{1, 0}, {0, 1}});
    task.support_labels = DenseMatrix::from_rows({{1, 0}, {0, 1}});
    task.test_features = DenseMatrix::from_rows({{1, 0}, {0, 1}});
    task.test_labels = std::vector<std::size_t>{0, 1};
    en::EngineConfig cfg;
    cfg.alpha = 0.0;
    auto state = tr::init_state(task, rf::ChannelMask::full(2), cfg);
    state.res = DenseMatrix::from_rows({{60, -60}, {-60, 60}});
    const auto g = tr::backward(state, task.test_features, *task.test_labels, cfg);
    CHECK(g.loss < 1e-8);
    for (double x : g.d_res.data()) CHECK(std::abs(x) <= 1e-8);
    for (double x : g.d_scores) CHECK(std::abs(x) <= 1e-8);
}

TEST_CASE("adamw closed-form steps") {
    tr::OptimConfig optim;
    {
        std::vector<double> p{0.0}, g{1.0};
        tr::Moments m(1);
        tr::adamw_update(p, g, m, 1, 0.001, optim);
        CHECK(std::abs(p[0] - (-0.001 * 1.0 / (1.0 + 1e-8))) <= 1e-12);
        CHECK(std::abs(p[0] + 0.001) <= 1e-9);
    }
    {
        optim.weight_decay = 0.0;
        std::vector<double> p{0.3, -2.0}, g{0.0, 0.0};
        tr::Moments m(2);
        tr::adamw_update(p, g, m, 1, 0.01, optim);
        CHECK(p == std::vector<double>{0.3, -2.0});
    }
    {
        optim.weight_decay = 0.1;
        std::vector<double> p{1.0}, g{0.0};
        tr::Moments m(1);
        tr::adamw_update(p, g, m, 1, 0.01, optim);
        CHECK(std::abs(p[0] - 0.999) <= 1e-12);
    }
    {
        std::vector<double> p{1.0}, g{0.0, 1.0};
        tr::Moments m(1);
        CHECK_THROWS_AS(tr::adamw_update(p, g, m, 1, 0.01, optim), ape::Error);
    }
}

TEST_CASE("adamw_step increments the step counter") {
    const auto fx = small_fixture(12);
    auto state = tr::init_state(fx.task, fx.mask, fx.cfg);
    const auto g = tr::backward(state, fx.task.test_features, *fx.task.test_labels, fx.cfg);
    tr::adamw_step(state, g, 1e-3, tr::OptimConfig{});
    CHECK(state.step == 1);
    tr::adamw_step(state, g, 1e-3, tr::OptimConfig{});
    CHECK(state.step == 2);
}

TEST_CASE("cosine_lr endpoints and midpoint") {
    CHECK(tr::cosine_lr(0, 100, 0.01) == 0.01);
    CHECK(tr::cosine_lr(50, 100, 0.01) == 0.005);
    CHECK(tr::cosine_lr(100, 100, 0.01) == 0.0);
    CHECK_THROWS_AS(tr::cosine_lr(0, 0, 0.01), ape::Error);
    CHECK_THROWS_AS(tr::cosine_lr(101, 100, 0.01), ape::Error);
    double prev = 1.0;
    for (std::size_t s = 0; s <= 37; ++s) {
        const double lr = tr::cosine_lr(s, 37, 1.0);
        CHECK(lr <= prev);
        prev = lr;
    }
}

TEST_CASE("optimizer config validation") {
    tr::OptimConfig optim;
    CHECK_NOTHROW(optim.validate());
    optim.lr = 0.0;
    CHECK_THROWS_AS(optim.validate(), ape::Error);
    optim.lr = 1e-3;
    optim.beta2 = 1.0;
    CHECK_THROWS_AS(optim.validate(), ape::Error);
}

TEST_CASE("training on a synthetic task") {
    ape::dataio::SyntheticSpec spec;
    const auto task = ape::dataio::gen_synthetic(spec);
    const auto mask = rf::refine_prototypes(task.text_features, 0.2, 48);
    en::EngineConfig cfg;
    tr::OptimConfig optim;

    SUBCASE("epochs=0 keeps the training-free model") {
        optim.epochs = 0;
        const auto result = tr::train(task, mask, cfg, optim);
        CHECK(result.history.epochs.empty());
        CHECK(tr::forward(result.state, task.test_features, cfg) == en::ape_logits(task, mask, cfg));
    }
    SUBCASE("twenty epochs stay finite, keep the cache frozen and do not lose support accuracy") {
        const auto before = tr::init_state(task, mask, cfg).frozen_checksum();
        const auto result = tr::train(task, mask, cfg, optim);
        CHECK(result.history.epochs.size() == 20);
        CHECK(result.history.step_losses.size() == 20);  // 160 support rows, one batch per epoch
        CHECK(result.state.step == 20);
        for (double loss : result.history.step_losses) CHECK(std::isfinite(loss));
        CHECK(result.state.frozen_checksum() == before);
        CHECK(result.history.epochs.back().support_accuracy >=
              result.history.initial_support_accuracy);
        CHECK(result.history.epochs.back().lr == doctest::Approx(tr::cosine_lr(19, 20, 1e-3)));
    }
    SUBCASE("identical seeds give identical states") {
        optim.epochs = 3;
        optim.batch_size = 50;
        const auto a = tr::train(task, mask, cfg, optim);
        const auto b = tr::train(task, mask, cfg, optim);
        CHECK(a.state.res == b.state.res);
        CHECK(a.state.scores == b.state.scores);
        CHECK(a.history.step_losses.size() == 12);  // ceil(160 / 50) per epoch
        optim.seed = 1;
        const auto c = tr::train(task, mask, cfg, optim);
        CHECK(!(c.state.res == a.state.res));
    }
}

TEST_CASE("checkpoint round trip") {
    auto fx = small_fixture(13, 3, 2, 6, 4);
    auto state = tr::init_state(fx.task, fx.mask, fx.cfg);
    std::mt19937_64 rng(14);
    randomize(state, rng);
    const auto g = tr::backward(state, fx.task.test_features, *fx.task.test_labels, fx.cfg);
    tr::adamw_step(state, g, 1e-3, tr::OptimConfig{});

    const auto dir = std::filesystem::temp_directory_path() / "ape_test_ckpt";
    std::filesystem::create_directories(dir);
    const auto path = dir / "state.ckpt";
    tr::write_checkpoint(path, state, fx.cfg);
    const auto back = tr::read_checkpoint(path);
    CHECK(back.state.res == state.res);
    CHECK(back.state.scores == state.scores);
    CHECK(back.state.res_moments.m == state.res_moments.m);
    CHECK(back.state.score_moments.v == state.score_moments.v);
    CHECK(back.state.step == 1);
    CHECK(back.state.mask.selected == state.mask.selected);
    CHECK(back.state.frozen_checksum() == state.frozen_checksum());
    CHECK(back.cfg.alpha == fx.cfg.alpha);
    CHECK(back.cfg.beta == fx.cfg.beta);
    CHECK(tr::forward(back.state, fx.task.test_features, back.cfg) ==
          tr::forward(state, fx.task.test_features, fx.cfg));

    std::string bytes = ape::fsutil::read_file(path);
    {
        std::string bad = bytes;
        bad[0] = 'X';
        ape::fsutil::atomic_write(path, bad);
        CHECK_THROWS_AS(tr::read_checkpoint(path), ape::Error);
    }
    {
        ape::fsutil::atomic_write(path, bytes.substr(0, bytes.size() - 3));
        try {
            tr::read_checkpoint(path);
            FAIL("expected an error");
        } catch (const ape::Error& e) {
            CHECK(e.kind() == ape::ErrorKind::Truncated);
        }
    }
    std::filesystem::remove_all(dir);
}
