#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <random>

#include "ape/dataio.hpp"
#include "ape/error.hpp"
#include "ape/refine.hpp"
#include "oracles.hpp"

using ape::DenseMatrix;
using ape::ErrorKind;
namespace rf = ape::refine;

namespace {

DenseMatrix two_prototypes() { return DenseMatrix::from_rows({{1, 0}, {0.6, 0.8}}); }

double mean_pairwise_cosine(const DenseMatrix& unit_rows) {
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < unit_rows.rows(); ++i) {
        for (std::size_t j = i + 1; j < unit_rows.rows(); ++j) {
            total += ape::numkit::dot(unit_rows.row(i), unit_rows.row(j));
            ++pairs;
        }
    }
    return total / static_cast<double>(pairs);
}

}  // namespace

TEST_CASE("inter_class_similarity examples") {
    const auto s = rf::inter_class_similarity(two_prototypes());
    CHECK(s.kind == rf::CriterionKind::Similarity);
    CHECK(s.values[0] == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(s.values[1] == 0.0);

    const auto ortho = rf::inter_class_similarity(DenseMatrix::from_rows({{1, 0}, {0, 1}}));
    CHECK(ortho.values == std::vector<double>{0.0, 0.0});

    // Identical prototypes repeated C times: S_k = ((C^2 - C) / C^2) x_k^2.
    for (std::size_t c : {2u, 3u, 5u}) {
        DenseMatrix w(c, 3);
        for (std::size_t i = 0; i < c; ++i) {
            w(i, 0) = 0.48;
            w(i, 1) = 0.6;
            w(i, 2) = 0.64;
        }
        const auto rep = rf::inter_class_similarity(w);
        const double factor = static_cast<double>(c * c - c) / static_cast<double>(c * c);
        CHECK(rep.values[0] == doctest::Approx(factor * 0.48 * 0.48).epsilon(1e-14));
        CHECK(rep.values[1] == doctest::Approx(factor * 0.36).epsilon(1e-14));
        CHECK(rep.values[2] == doctest::Approx(factor * 0.64 * 0.64).epsilon(1e-14));
    }
}

TEST_CASE("criteria reject fewer than two classes and non-unit prototypes") {
    CHECK_THROWS_AS(rf::inter_class_similarity(DenseMatrix::from_rows({{1, 0}})), ape::Error);
    CHECK_THROWS_AS(rf::inter_class_variance(DenseMatrix::from_rows({{1, 0}})), ape::Error);
    CHECK_THROWS_AS(rf::inter_class_similarity(DenseMatrix::from_rows({{2, 0}, {0, 1}})),
                    ape::Error);
}

TEST_CASE("inter_class_variance examples") {
    // Channels as columns: (0.6, 0.8), constant, (1, -1).
    const auto v = rf::inter_class_variance(DenseMatrix::from_rows({{0.6, 0.5, 1.0}, {0.8, 0.5, -1.0}}));
    CHECK(v.kind == rf::CriterionKind::Variance);
    CHECK(v.values[0] == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(v.values[1] == 0.0);
    CHECK(v.values[2] == 1.0);
}

TEST_CASE("criteria agree with algebraically different routes") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 30; ++trial) {
        const auto w = oracle::random_unit_rows(2 + trial % 5, 3 + trial % 8, rng);
        const auto s = rf::inter_class_similarity(w);
        const auto v = rf::inter_class_variance(w);
        const auto s_ref = oracle::similarity_by_identity(w);
        const auto v_ref = oracle::variance_by_moments(w);
        for (std::size_t k = 0; k < w.cols(); ++k) {
            CHECK(std::abs(s.values[k] - s_ref[k]) <= 1e-14);
            CHECK(std::abs(v.values[k] - v_ref[k]) <= 1e-14);
            CHECK(v.values[k] >= 0.0);
        }
    }
}

TEST_CASE("select_channels examples") {
    const rf::CriterionVector s{rf::CriterionKind::Similarity, {0.3, 0.0}};
    const rf::CriterionVector v{rf::CriterionKind::Variance, {0.04, 0.16}};
    const auto mask = rf::select_channels(s, v, 0.7, 1);
    CHECK(mask.selected == std::vector<std::size_t>{1});
    CHECK(mask.scores[0] == doctest::Approx(0.198).epsilon(1e-14));
    CHECK(mask.scores[1] == doctest::Approx(-0.048).epsilon(1e-14));

    const auto full = rf::select_channels(s, v, 1.0, 2);
    CHECK(full.selected == std::vector<std::size_t>{0, 1});

    const rf::CriterionVector flat{rf::CriterionKind::Similarity, std::vector<double>(6, 0.25)};
    const rf::CriterionVector zero{rf::CriterionKind::Variance, std::vector<double>(6, 0.0)};
    CHECK(rf::select_channels(flat, zero, 0.5, 3).selected == std::vector<std::size_t>{0, 1, 2});

    CHECK_THROWS_AS(rf::select_channels(s, v, 0.7, 0), ape::Error);
    CHECK_THROWS_AS(rf::select_channels(s, v, 0.7, 3), ape::Error);
    CHECK_THROWS_AS(rf::select_channels(s, v, 1.5, 1), ape::Error);
}

TEST_CASE("selected channels minimize the masked objective over every subset") {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<std::size_t> cdist(2, 6), ddist(4, 10);
    const double lambdas[] = {0.0, 0.2, 0.7, 1.0};
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t c = cdist(rng), d = ddist(rng);
        const std::size_t q = std::uniform_int_distribution<std::size_t>(1, d)(rng);
        const double lambda = lambdas[trial % 4];
        const auto w = oracle::random_unit_rows(c, d, rng);
        const auto mask = rf::refine_prototypes(w, lambda, q);
        std::vector<bool> chosen(d, false);
        for (std::size_t k : mask.selected) chosen[k] = true;
        const auto best = oracle::exhaustive_minimum(w, q, lambda);
        CHECK(oracle::subset_objective(w, chosen, lambda) <= best.value + 1e-14);
    }
}

TEST_CASE("masks are nested in Q and respect the ordering invariant") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        const auto w = oracle::random_unit_rows(4, 12, rng);
        std::vector<std::size_t> prev;
        for (std::size_t q = 1; q <= 12; ++q) {
            const auto mask = rf::refine_prototypes(w, 0.7, q);
            CHECK(std::includes(mask.selected.begin(), mask.selected.end(), prev.begin(), prev.end()));
            CHECK(std::adjacent_find(mask.selected.begin(), mask.selected.end()) == mask.selected.end());
            for (std::size_t s : mask.selected) {
                for (std::size_t u = 0; u < 12; ++u) {
                    if (!mask.is_selected(u)) CHECK(mask.scores[s] <= mask.scores[u]);
                }
            }
            prev = mask.selected;
        }
    }
}

TEST_CASE("apply_mask examples") {
    const auto mask1 = rf::select_channels({rf::CriterionKind::Similarity, {1.0, 0.0}},
                                           {rf::CriterionKind::Variance, {0.0, 0.0}}, 1.0, 1);
    REQUIRE(mask1.selected == std::vector<std::size_t>{1});
    const auto out = rf::apply_mask(DenseMatrix::from_rows({{0.6, 0.8}}), mask1, true);
    CHECK(out.cols() == 1);
    CHECK(out(0, 0) == doctest::Approx(1.0).epsilon(1e-15));

    std::mt19937_64 rng(1);
    const auto m = oracle::random_unit_rows(5, 7, rng);
    CHECK(rf::apply_mask(m, rf::ChannelMask::full(7), false) == m);

    ape::Diagnostics diag;
    const auto zero = rf::apply_mask(DenseMatrix::from_rows({{1, 0}}), mask1, true, &diag);
    CHECK(zero(0, 0) == 0.0);
    CHECK(diag.warnings.size() == 1);

    CHECK_THROWS_AS(rf::apply_mask(m, mask1, true), ape::Error);
}

TEST_CASE("refinement lowers inter-class similarity versus random masks") {
    double refined_total = 0.0, random_total = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        ape::dataio::SyntheticSpec spec;
        spec.seed = seed;
        spec.n_test_per_class = 0;
        const auto task = ape::dataio::gen_synthetic(spec);
        const std::size_t q = 32;
        const auto mask = rf::refine_prototypes(task.text_features, 1.0, q);
        refined_total += mean_pairwise_cosine(rf::apply_mask(task.text_features, mask, true));

        std::mt19937_64 rng(seed + 1000);
        std::vector<std::size_t> channels(task.d);
        std::iota(channels.begin(), channels.end(), std::size_t{0});
        std::shuffle(channels.begin(), channels.end(), rng);
        channels.resize(q);
        std::sort(channels.begin(), channels.end());
        rf::ChannelMask random_mask;
        random_mask.selected = channels;
        random_mask.d_total = task.d;
        random_total += mean_pairwise_cosine(rf::apply_mask(task.text_features, random_mask, true));
    }
    CHECK(refined_total / 20.0 <= random_total / 20.0);
}

TEST_CASE("mask file round trip and parse errors") {
    std::mt19937_64 rng(8);
    const auto w = oracle::random_unit_rows(5, 9, rng);
    const auto mask = rf::refine_prototypes(w, 0.7, 4);
    const auto path = std::filesystem::temp_directory_path() / "ape_test_mask.txt";
    rf::write_mask(path, mask);
    const auto back = rf::read_mask(path);
    CHECK(back.selected == mask.selected);
    CHECK(back.scores == mask.scores);
    CHECK(back.lambda == mask.lambda);
    CHECK(back.d_total == 9);
    std::filesystem::remove(path);

    const std::string text = rf::format_mask(mask);
    CHECK(text.rfind("APE-MASK v1 D=9 Q=4 lambda=0.7\n", 0) == 0);

    auto kind_of = [](const std::string& t) {
        try {
            rf::parse_mask(t);
        } catch (const ape::Error& e) {
            return e.kind();
        }
        return ErrorKind::InvalidArgument;
    };
    CHECK(kind_of("NOPE v1 D=1 Q=1 lambda=1\n0 0 1\n") == ErrorKind::BadMagic);
    CHECK(kind_of("APE-MASK v1 D=2 Q=1 lambda=1\n0 0 1\n") == ErrorKind::Truncated);
    CHECK(kind_of("APE-MASK v1 D=2 Q=2 lambda=1\n0 0 1\n1 0 0\n") == ErrorKind::Parse);
    CHECK(kind_of("APE-MASK v1 D=x Q=1 lambda=1\n") == ErrorKind::Parse);
}
