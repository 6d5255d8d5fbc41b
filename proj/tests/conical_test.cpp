#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "modal/conical.hpp"
#include "modal/exact_sum.hpp"
#include "test_support.hpp"

using namespace modal;

namespace {

const ConicalSpaceSpec kScalar{1, 1, 1.0};

TEST(Distance, BothVerticesAreZeroApart) {
    for (double beta : {0.25, 1.0, 4.0}) {
        EXPECT_EQ(distance({{0.0}, {3.7}}, {{0.0}, {-12.0}}, {1, 1, beta}), 0.0);
    }
}

TEST(Distance, SameLocationReducesToMagnitudeGap) {
    EXPECT_DOUBLE_EQ(distance({{2.0}, {5.0}}, {{3.0}, {5.0}}, kScalar), 1.0);
}

TEST(Distance, FarLocationsRouteThroughVertex) {
    const auto r = bottleneck_route({{1.0}, {0.0}}, {{1.0}, {10.0}}, kScalar);
    EXPECT_TRUE(r.through_vertex);
    EXPECT_DOUBLE_EQ(r.value(), 2.0);
    EXPECT_DOUBLE_EQ(r.direct, 10.0);
}

TEST(Distance, DimensionMismatchThrows) {
    EXPECT_THROW(distance({{1.0, 2.0}, {0.0}}, {{1.0}, {0.0}}, kScalar), std::invalid_argument);
    EXPECT_THROW(distance({{1.0}, {}}, {{1.0}, {0.0}}, kScalar), std::invalid_argument);
}

TEST(Distance, MatchesTranscribedFormula) {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 2000; ++i) {
        const ConicalSpaceSpec sp{1 + static_cast<std::size_t>(i % 3), static_cast<std::size_t>(i % 4), 0.5 + i % 3};
        const auto p = oracle::random_point(sp, rng, 0.1);
        const auto q = oracle::random_point(sp, rng, 0.1);
        EXPECT_NEAR(distance(p, q, sp), oracle::bottleneck(p, q, sp.beta), 1e-14);
    }
}

TEST(MagnitudeNorm, Examples) {
    EXPECT_DOUBLE_EQ(magnitude_norm({{3.0}, {42.0}}), 3.0);
    EXPECT_EQ(magnitude_norm({{0.0}, {5.0}}), 0.0);
    EXPECT_DOUBLE_EQ(magnitude_norm({{-2.0, -2.0}, {-8.0}}), 2.0 * std::sqrt(2.0));
}

TEST(MagnitudeNorm, EqualsDistanceFromVertexAndIsSubadditive) {
    std::mt19937_64 rng(5);
    const ConicalSpaceSpec sp{3, 2, 4.0};
    for (int i = 0; i < 1000; ++i) {
        auto p = oracle::random_point(sp, rng, 0.1);
        EXPECT_DOUBLE_EQ(magnitude_norm(p), distance(ConicalPoint::vertex(sp), p, sp));
        auto q = oracle::random_point(sp, rng);
        q.b = p.b;
        ConicalPoint s = p;
        for (std::size_t t = 0; t < 3; ++t) s.a[t] += q.a[t];
        EXPECT_LE(magnitude_norm(s), magnitude_norm(p) + magnitude_norm(q) + 1e-15);
        const double k = -2.5;
        ConicalPoint scaled = p;
        for (auto& v : scaled.a) v *= k;
        for (auto& v : scaled.b) v *= k;
        EXPECT_NEAR(magnitude_norm(scaled), std::fabs(k) * magnitude_norm(p), 1e-14);
    }
}

TEST(Canonicalize, Examples) {
    EXPECT_EQ(canonicalize({{0.0}, {7.0}}, 0.0), (ConicalPoint{{0.0}, {0.0}}));
    EXPECT_EQ(canonicalize({{1e-15}, {3.0}}, 1e-12), (ConicalPoint{{0.0}, {0.0}}));
    EXPECT_EQ(canonicalize({{2.0}, {3.0}}, 1e-12), (ConicalPoint{{2.0}, {3.0}}));
}

TEST(ConicalSpace, Validation) {
    EXPECT_THROW((ConicalSpaceSpec{0, 1, 1.0}.validate()), std::invalid_argument);
    EXPECT_THROW((ConicalSpaceSpec{1, 1, 0.0}.validate()), std::invalid_argument);
    EXPECT_THROW((ConicalSpaceSpec{1, 1, NAN}.validate()), std::invalid_argument);
    EXPECT_NO_THROW((ConicalSpaceSpec{2, 0, 1.0}.validate()));
}

TEST(MetricAxioms, RandomTriples) {
    std::mt19937_64 rng(2024);
    for (int i = 0; i < 5000; ++i) {
        const ConicalSpaceSpec sp{1 + static_cast<std::size_t>(rng() % 3), static_cast<std::size_t>(rng() % 4),
                                  std::array{0.25, 1.0, 4.0}[rng() % 3]};
        const auto p = canonicalize(oracle::random_point(sp, rng, 0.15));
        const auto q = canonicalize(oracle::random_point(sp, rng, 0.15));
        const auto r = canonicalize(oracle::random_point(sp, rng, 0.15));
        EXPECT_EQ(distance(p, p, sp), 0.0);
        EXPECT_EQ(distance(p, q, sp), distance(q, p, sp));
        EXPECT_LE(distance(p, r, sp), distance(p, q, sp) + distance(q, r, sp) + 1e-12);
        if (distance(p, q, sp) == 0.0) {
            EXPECT_EQ(canonicalize(p), canonicalize(q));
        }
    }
}

TEST(ExactSum, CorrectlyRounded) {
    ExactSum s;
    for (double v : {1e100, 1.0, -1e100, 1e-100}) s.add(v);
    EXPECT_EQ(s.value(), 1.0);
    ExactSum t;
    for (int i = 0; i < 10; ++i) t += 0.1;
    EXPECT_EQ(t.value(), 1.0);
    EXPECT_EQ(ExactSum().value(), 0.0);

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1e3, 1e3);
    for (int trial = 0; trial < 200; ++trial) {
        ExactSum fwd, rev;
        mpq_class exact = 0;
        std::vector<double> xs(1 + trial % 17);
        for (auto& x : xs) x = u(rng) * std::pow(10.0, static_cast<int>(rng() % 20) - 10);
        for (double x : xs) {
            fwd.add(x);
            exact += mpq_class(x);
        }
        for (auto it = xs.rbegin(); it != xs.rend(); ++it) rev.add(*it);
        EXPECT_EQ(fwd.value(), oracle::round_to_double(exact));
        EXPECT_EQ(fwd.value(), rev.value());
    }
}

}  // namespace
