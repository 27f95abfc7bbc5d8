#include <doctest.h>

#include "lag/linalg.hpp"
#include "lag/spectral.hpp"
#include "oracles.hpp"

using namespace lag;

namespace {

AlignedAdapter basis_adapter(std::string id, Eigen::Index n, std::vector<Eigen::Index> axes) {
    AlignedAdapter a;
    a.id = std::move(id);
    a.layer = "L0";
    const auto r = static_cast<Eigen::Index>(axes.size());
    a.A_star = MatrixF::Zero(r, n);
    a.B_star = MatrixF::Zero(n, r);
    for (Eigen::Index i = 0; i < r; ++i) {
        a.A_star(i, axes[static_cast<std::size_t>(i)]) = 1.0f;
        a.B_star(i, i) = 1.0f;
        a.singular_values.push_back(1.0f);
    }
    return a;
}

}  // namespace

TEST_CASE("spectr_score: Pythagorean example and zero token") {
    const AlignedAdapter a = basis_adapter("a", 6, {0, 1});
    TokenVector x = TokenVector::Zero(6);
    x(0) = 3.0f;
    x(1) = 4.0f;
    const SpectralScore s = spectr_score(a, x);
    CHECK(s.score == doctest::Approx(5.0));
    REQUIRE(s.projected.size() == 2);
    CHECK(s.projected(0) == doctest::Approx(3.0));
    CHECK(s.projected(1) == doctest::Approx(4.0));
    CHECK(spectr_score(a, TokenVector::Zero(6)).score == 0.0);
    CHECK_THROWS_AS(spectr_score(a, TokenVector::Zero(5)), ShapeError);
}

TEST_CASE("spectr_score: equals ||V^T x|| from a dense SVD") {
    std::mt19937_64 rng(606);
    for (int trial = 0; trial < 10; ++trial) {
        const RawAdapter raw = oracle::random_adapter(rng, "a", "L0", 24, 20, 6);
        const AlignedAdapter a = align(raw, RoutingConfig{});
        const auto dense = oracle::dense_svd(oracle::product(raw.B, raw.A));
        const TokenVector x = oracle::gaussian_vector(rng, 20);
        const double expected = (dense.V.leftCols(6).transpose() * x.cast<double>()).norm();
        CHECK(std::abs(spectr_score(a, x).score - expected) <= 1e-5 * expected);
    }
}

TEST_CASE("rerank: single candidate wins regardless of score") {
    std::vector<AlignedAdapter> lib{basis_adapter("a", 4, {0}), basis_adapter("b", 4, {1})};
    CandidateSet c;
    c.indices = {1};
    c.scores = {0.0};
    TokenVector x = TokenVector::Zero(4);
    x(0) = 1.0f;
    const Selection s = rerank(c, lib, x);
    CHECK(s.adapter_index == 1);
    CHECK(s.spectr_score == 0.0);
}

TEST_CASE("rerank: in-span token picks its owner with score ||x||") {
    std::vector<AlignedAdapter> lib{basis_adapter("a", 9, {0, 1, 2}), basis_adapter("b", 9, {3, 4, 5}),
                                    basis_adapter("c", 9, {6, 7, 8})};
    TokenVector x = TokenVector::Zero(9);
    x(3) = 0.5f;
    x(4) = -1.5f;
    x(5) = 2.0f;
    CandidateSet c;
    c.indices = {2, 0, 1};
    const Selection s = rerank(c, lib, x);
    CHECK(s.adapter_index == 1);
    CHECK(s.spectr_score == doctest::Approx(x.cast<double>().norm()));
    CHECK(s.candidate_scores.size() == 3);
}

TEST_CASE("rerank: ties go to the lowest library index, empty sets are errors") {
    std::vector<AlignedAdapter> lib{basis_adapter("a", 4, {0}), basis_adapter("b", 4, {0})};
    CandidateSet c;
    c.indices = {1, 0};
    TokenVector x = TokenVector::Ones(4);
    CHECK(rerank(c, lib, x).adapter_index == 0);
    CHECK_THROWS_AS(rerank(CandidateSet{}, lib, x), RoutingError);
    c.indices = {5};
    CHECK_THROWS_AS(rerank(c, lib, x), RoutingError);
}

TEST_CASE("rerank: matches an exhaustive loop over random candidates") {
    std::mt19937_64 rng(707);
    std::vector<RawAdapter> raw;
    for (int i = 0; i < 20; ++i) raw.push_back(oracle::random_adapter(rng, "a" + std::to_string(i), "L0", 16, 16, 1 + i % 6));
    const AdapterLibrary lib = align_library(raw, RoutingConfig{});
    const auto& adapters = lib.find("L0")->adapters;
    CandidateSet all;
    for (std::size_t i = 0; i < 20; ++i) all.indices.push_back(19 - i);
    for (int t = 0; t < 50; ++t) {
        const TokenVector x = oracle::gaussian_vector(rng, 16);
        CHECK(rerank(all, adapters, x).adapter_index == oracle::exhaustive_spectr(adapters, all.indices, x));
    }
}

TEST_CASE("spectr_score: homogeneity and the ||x|| bound") {
    std::mt19937_64 rng(808);
    const RawAdapter raw = oracle::random_adapter(rng, "a", "L0", 12, 30, 5);
    const AlignedAdapter a = align(raw, RoutingConfig{});
    for (int t = 0; t < 50; ++t) {
        const TokenVector x = oracle::gaussian_vector(rng, 30);
        const double s = spectr_score(a, x).score;
        CHECK(spectr_score(a, -2.5f * x).score == doctest::Approx(2.5 * s).epsilon(1e-6));
        CHECK(spectr_score(a, 0.25f * x).score == 0.25 * s);  // exact for powers of two
        CHECK(s <= x.cast<double>().norm() * (1.0 + 1e-6));
        CHECK(s < 0.999 * x.cast<double>().norm());  // generic x is not in the row span

        // in-span vectors attain the bound
        const Eigen::VectorXd coef = oracle::unit_vector(rng, 5);
        const TokenVector inside = (a.A_star.cast<double>().transpose() * coef).cast<float>();
        CHECK(spectr_score(a, inside).score == doctest::Approx(inside.cast<double>().norm()).epsilon(1e-5));
    }
}
