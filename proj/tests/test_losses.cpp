#include <gtest/gtest.h>

#include <cmath>

#include "acdk/losses.hpp"
#include "test_util.hpp"

using namespace acdk;

namespace {

DisparityMap row(std::vector<double> v) {
    const int n = static_cast<int>(v.size());
    return DisparityMap(1, n, std::move(v));
}

// Direct evaluation of the normalized L1 distance, written independently of
// the production code path.
double oracle_loss(const DisparityMap& a, const DisparityMap& b) {
    auto stats = [](const DisparityMap& m) {
        double t = 0;
        for (double v : m.data) t += v;
        t /= static_cast<double>(m.size());
        double s = 0;
        for (double v : m.data) s += std::fabs(v - t);
        return std::pair{t, s / static_cast<double>(m.size())};
    };
    const auto [ta, sa] = stats(a);
    const auto [tb, sb] = stats(b);
    double l = 0;
    for (std::size_t i = 0; i < a.size(); ++i) l += std::fabs((a.data[i] - ta) / sa - (b.data[i] - tb) / sb);
    return l / static_cast<double>(a.size());
}

}  // namespace

TEST(NormStats, HandValues) {
    const NormStats a = norm_stats(row({1, 2, 3}));
    EXPECT_DOUBLE_EQ(a.t, 2.0);
    EXPECT_DOUBLE_EQ(a.s, 2.0 / 3.0);
    const NormStats b = norm_stats(row({0, 4}));
    EXPECT_DOUBLE_EQ(b.t, 2.0);
    EXPECT_DOUBLE_EQ(b.s, 2.0);
    EXPECT_THROW(norm_stats(row({5, 5, 5})), DegenerateScale);
    EXPECT_THROW(norm_stats(row({0.1, 0.1, 0.1})), DegenerateScale);
}

TEST(AffineInvariantLoss, HandValue) {
    EXPECT_NEAR(affine_invariant_loss(row({1, 2, 3}), row({3, 2, 1})).value, 2.0, 1e-12);
}

TEST(AffineInvariantLoss, IdentityAndSymmetry) {
    Rng rng(1);
    for (int i = 0; i < 20; ++i) {
        const DisparityMap y = testutil::random_map(8, 8, rng), z = testutil::random_map(8, 8, rng);
        EXPECT_EQ(affine_invariant_loss(y, y).value, 0.0);
        EXPECT_NEAR(affine_invariant_loss(y, z).value, affine_invariant_loss(z, y).value, 1e-12);
        EXPECT_NEAR(affine_invariant_loss(y, z).value, oracle_loss(y, z), 1e-12);
    }
}

TEST(AffineInvariantLoss, InvariantToPositiveAffineMaps) {
    Rng rng(2);
    for (int i = 0; i < 100; ++i) {
        const DisparityMap y = testutil::random_map(16, 16, rng), yh = testutil::random_map(16, 16, rng);
        const double a = rng_uniform(rng, 0.1, 10.0), b = rng_uniform(rng, -5.0, 5.0);
        DisparityMap ya = y;
        for (double& v : ya.data) v = a * v + b;
        EXPECT_LT(std::fabs(affine_invariant_loss(ya, yh).value - affine_invariant_loss(y, yh).value), 1e-6);
    }
}

TEST(AffineInvariantLoss, Errors) {
    EXPECT_THROW(affine_invariant_loss(row({1, 2}), row({1, 2, 3})), ShapeMismatch);
    EXPECT_THROW(affine_invariant_loss(row({1, 1}), row({1, 2})), DegenerateScale);
    EXPECT_THROW(affine_invariant_loss(row({1, 2}), row({4, 4})), DegenerateScale);
}

TEST(AffineInvariantLoss, GradientsFiniteAndTargetOptional) {
    Rng rng(3);
    const DisparityMap y = testutil::random_map(8, 8, rng), yh = testutil::random_map(8, 8, rng);
    const LossValue l = affine_invariant_loss(y, yh);
    ASSERT_TRUE(l.grad.has_value());
    EXPECT_FALSE(l.grad_target.has_value());
    EXPECT_TRUE(l.grad->all_finite());
    EXPECT_GE(l.value, 0.0);
    // normalization removes any component along constant shifts
    double s = 0;
    for (double g : l.grad->data) s += g;
    EXPECT_NEAR(s, 0.0, 1e-12);
}

TEST(AffineInvariantLoss, TieHasZeroSubgradient) {
    // identical inputs: every residual is exactly 0
    const DisparityMap y = row({1, 4, 2, 8});
    const LossValue l = affine_invariant_loss(y, y);
    for (double g : l.grad->data) EXPECT_EQ(g, 0.0);
}

TEST(ConsistencyLoss, Values) {
    const DisparityMap weak = row({1, 2, 3});
    EXPECT_EQ(consistency_loss(weak, weak).value, 0.0);
    EXPECT_NEAR(consistency_loss(weak, row({3, 5, 7})).value, 0.0, 1e-15);
    EXPECT_NEAR(consistency_loss(weak, row({3, 2, 1})).value, 2.0, 1e-12);
}

TEST(ConsistencyLoss, GradientRouting) {
    Rng rng(4);
    const DisparityMap w = testutil::random_map(4, 4, rng), s = testutil::random_map(4, 4, rng);
    const LossValue stop = consistency_loss(w, s, ConsistencyMode::stop_grad_weak);
    EXPECT_TRUE(stop.grad.has_value());
    EXPECT_FALSE(stop.grad_target.has_value());
    const LossValue both = consistency_loss(w, s, ConsistencyMode::both_branches);
    ASSERT_TRUE(both.grad_target.has_value());
    EXPECT_EQ(both.grad->data, stop.grad->data);
    // the weak-branch gradient equals the strong-branch gradient with roles swapped
    const LossValue swapped = consistency_loss(s, w);
    for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(both.grad_target->data[i], swapped.grad->data[i], 1e-15);
}

TEST(KdLoss, Values) {
    const DisparityMap teacher = row({1, 2, 3});
    EXPECT_EQ(kd_loss(teacher, teacher).value, 0.0);
    EXPECT_NEAR(kd_loss(row({0.5, 1.5, 2.5}), teacher).value, 0.0, 1e-15);
    EXPECT_NEAR(kd_loss(row({3, 2, 1}), teacher).value, 2.0, 1e-12);
    EXPECT_FALSE(kd_loss(row({3, 2, 1}), teacher).grad_target.has_value());
}

TEST(TotalLoss, WeightsAndGradients) {
    const LossWeights w;
    EXPECT_DOUBLE_EQ(w.consistency, 1.0 / 3.0);
    EXPECT_DOUBLE_EQ(w.distill, 1.0 / 3.0);
    EXPECT_DOUBLE_EQ(w.sdr, 1.0 / 3.0);

    LossValue lc{0.3, DisparityMap(1, 2, 1.0), std::nullopt};
    LossValue lkd{0.6, DisparityMap(1, 2, 2.0), std::nullopt};
    LossValue ls{0.9, DisparityMap(1, 2, 3.0), std::nullopt};
    const LossValue t = total_loss(lc, lkd, ls, w);
    EXPECT_NEAR(t.value, 0.6, 1e-15);
    ASSERT_TRUE(t.grad.has_value());
    EXPECT_NEAR(t.grad->data[0], 2.0, 1e-15);

    EXPECT_EQ(total_loss(lc, lkd, ls, LossWeights{0, 0, 0}).value, 0.0);
    EXPECT_THROW(total_loss(lc, lkd, ls, LossWeights{-1, 0, 0}), InvalidArgument);

    ls.grad.reset();
    EXPECT_FALSE(total_loss(lc, lkd, ls, w).grad.has_value());
    EXPECT_TRUE(total_loss(lc, lkd, ls, LossWeights{0.5, 0.5, 0.0}).grad.has_value());
}

TEST(NormalizeBackward, MatchesFiniteDifferenceOfNormalizedDot) {
    // f(y) = sum g_j u_j(y), a smooth function away from sign changes of y - t
    Rng rng(5);
    std::vector<double> y(10), g(10);
    for (auto& v : y) v = rng.next_unit();
    for (auto& v : g) v = rng_normal(rng, 0, 1);
    auto f = [&](const std::vector<double>& yy) {
        const NormStats st = norm_stats(yy);
        const auto u = normalize(yy, st);
        double s = 0;
        for (std::size_t j = 0; j < u.size(); ++j) s += g[j] * u[j];
        return s;
    };
    const NormStats st = norm_stats(y);
    const auto dy = normalize_backward(y, st, normalize(y, st), g);
    for (std::size_t k = 0; k < y.size(); ++k) {
        auto yp = y, ym = y;
        yp[k] += 1e-6;
        ym[k] -= 1e-6;
        EXPECT_NEAR(dy[k], (f(yp) - f(ym)) / 2e-6, 1e-6);
    }
}
