#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "acdk/evalsuite.hpp"
#include "test_util.hpp"

using namespace acdk;

namespace {

struct OracleMetrics {
    double s, t, absrel, delta1;
};

// Normal equations solved by Cramer's rule over raw sums, then scalar loops.
OracleMetrics oracle(const DisparityMap& pred, const DisparityMap& gt) {
    double n = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (!(gt.data[i] > 0)) continue;
        const double x = pred.data[i], y = gt.data[i];
        n += 1;
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double det = n * sxx - sx * sx;
    const double s = (n * sxy - sx * sy) / det;
    const double t = (sxx * sy - sx * sxy) / det;
    double ar = 0, good = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (!(gt.data[i] > 0)) continue;
        double a = s * pred.data[i] + t;
        if (a < 1e-6) a = 1e-6;
        const double dp = 1.0 / a, dg = 1.0 / gt.data[i];
        ar += std::fabs(dp - dg) / dg;
        const double ratio = dp > dg ? dp / dg : dg / dp;
        if (ratio < 1.25) good += 1;
    }
    return {s, t, ar / n, good / n};
}

AlignedPair identity_pair(std::vector<double> pred_disp, std::vector<double> gt_disp) {
    const int n = static_cast<int>(gt_disp.size());
    AlignedPair p;
    p.pred_aligned = DisparityMap(1, n, std::move(pred_disp));
    p.gt = DisparityMap(1, n, std::move(gt_disp));
    p.mask.assign(static_cast<std::size_t>(n), 1);
    return p;
}

double residual(const DisparityMap& pred, const DisparityMap& gt, double s, double t) {
    double r = 0;
    for (std::size_t i = 0; i < gt.size(); ++i)
        if (gt.data[i] > 0) r += std::pow(s * pred.data[i] + t - gt.data[i], 2);
    return r;
}

}  // namespace

TEST(Align, IdentityAndAffineRecovery) {
    Rng rng(1);
    const DisparityMap gt = testutil::random_map(8, 8, rng, 0.1, 1.0);
    const AlignedPair id = align(gt, gt);
    EXPECT_NEAR(id.s_fit, 1.0, 1e-12);
    EXPECT_NEAR(id.t_fit, 0.0, 1e-12);
    DisparityMap shifted = gt;
    for (double& v : shifted.data) v = (v - 3.0) / 2.0;
    const AlignedPair p = align(shifted, gt);
    EXPECT_NEAR(p.s_fit, 2.0, 1e-10);
    EXPECT_NEAR(p.t_fit, 3.0, 1e-10);
    EXPECT_NEAR(absrel(p), 0.0, 1e-9);
    EXPECT_EQ(delta1(p), 1.0);
}

TEST(Align, Errors) {
    const DisparityMap gt(1, 3, std::vector<double>{0.2, 0.5, 0.9});
    EXPECT_THROW(align(DisparityMap(1, 3, 0.4), gt), InvalidArgument);
    EXPECT_THROW(align(gt, DisparityMap(1, 3, 0.4)), InvalidArgument);
    EXPECT_THROW(align(gt, DisparityMap(1, 3, std::vector<double>{0, 0, 0.5})), InvalidArgument);
    EXPECT_THROW(align(gt, DisparityMap(3, 1, 0.4)), ShapeMismatch);
    EXPECT_THROW(align(gt, gt, ValidMask(2, 1)), ShapeMismatch);
}

TEST(Align, MaskExcludesNonPositiveGt) {
    const DisparityMap gt(1, 4, std::vector<double>{0.0, 0.5, 1.0, 0.25});
    EXPECT_EQ(positive_mask(gt), (ValidMask{0, 1, 1, 1}));
    DisparityMap pred = gt;
    pred.data[0] = 100.0;  // ignored
    const AlignedPair p = align(pred, gt);
    EXPECT_NEAR(p.s_fit, 1.0, 1e-12);
    EXPECT_EQ(evaluate_prediction(pred, gt).n_pixels, 3u);
}

TEST(Align, ResidualIsOptimal) {
    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const DisparityMap gt = testutil::random_map(8, 8, rng, 0.05, 1.0);
        const DisparityMap pred = testutil::random_map(8, 8, rng, -2.0, 5.0);
        const AlignedPair p = align(pred, gt);
        const double r0 = residual(pred, gt, p.s_fit, p.t_fit);
        for (double ds : {-1e-3, 0.0, 1e-3})
            for (double dt : {-1e-3, 0.0, 1e-3})
                ASSERT_GE(residual(pred, gt, p.s_fit + ds, p.t_fit + dt), r0);
    }
}

TEST(Metrics, HandValues) {
    // aligned depths pred [2, 4] vs gt [2, 2]
    EXPECT_DOUBLE_EQ(absrel(identity_pair({0.5, 0.25}, {0.5, 0.5})), 0.5);
    // one of four pixels off by a depth ratio of 1.3
    EXPECT_DOUBLE_EQ(delta1(identity_pair({0.5, 0.5, 0.5, 0.5 / 1.3}, {0.5, 0.5, 0.5, 0.5})), 0.75);
    // a ratio of exactly 1.25 is rejected
    ASSERT_EQ(to_depth(0.4) / to_depth(0.5), 1.25);
    EXPECT_EQ(delta1(identity_pair({0.5, 0.4}, {0.4, 0.5})), 0.0);
    EXPECT_EQ(to_depth(0.0), 1e6);
    EXPECT_EQ(to_depth(-3.0), 1e6);
}

TEST(Metrics, MatchScalarOracle) {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        DisparityMap gt = testutil::random_map(8, 8, rng, 0.0, 1.0);
        gt.data[trial % 64] = 0.0;
        DisparityMap pred = gt;
        for (double& v : pred.data) v = 0.7 * v + 0.2 + rng_normal(rng, 0, 0.15);
        const AlignedPair p = align(pred, gt);
        const OracleMetrics o = oracle(pred, gt);
        ASSERT_NEAR(p.s_fit, o.s, 1e-10);
        ASSERT_NEAR(p.t_fit, o.t, 1e-10);
        ASSERT_NEAR(absrel(p), o.absrel, 1e-10 * std::max(1.0, o.absrel));
        ASSERT_NEAR(delta1(p), o.delta1, 1e-10);
    }
}

TEST(Metrics, SanityOnGeneratedScenes) {
    for (const Sample& s : generate_samples(5, 32, 4)) {
        const ImageMetrics m = evaluate_prediction(*s.gt, *s.gt);
        EXPECT_NEAR(m.absrel, 0.0, 1e-9);
        EXPECT_EQ(m.delta1, 1.0);
        EXPECT_GT(m.n_pixels, 0u);
    }
}

TEST(Ordinal, ConsistentInvertedTiesAndMonotone) {
    Rng rng(5);
    const DisparityMap pred = testutil::random_map(8, 8, rng, 0.1, 1.0);
    std::vector<OrdinalPair> pairs, inverted;
    for (int k = 0; k < 40; ++k) {
        OrdinalPair p{rng_int(rng, 0, 7), rng_int(rng, 0, 7), rng_int(rng, 0, 7), rng_int(rng, 0, 7), true};
        if (p.ax == p.bx && p.ay == p.by) continue;
        p.a_closer = pred.at(p.ay, p.ax) > pred.at(p.by, p.bx);
        pairs.push_back(p);
        p.a_closer = !p.a_closer;
        inverted.push_back(p);
    }
    EXPECT_EQ(ordinal_accuracy(pred, pairs), 1.0);
    EXPECT_EQ(ordinal_accuracy(pred, inverted), 0.0);

    DisparityMap mono = pred;
    for (double& v : mono.data) v = std::exp(3.0 * v) - 7.0;
    EXPECT_EQ(ordinal_accuracy(mono, pairs), 1.0);
    DisparityMap noisy = pred;
    for (double& v : noisy.data) v += rng_normal(rng, 0, 0.2);
    const double acc = ordinal_accuracy(noisy, pairs);
    DisparityMap noisy_mono = noisy;
    for (double& v : noisy_mono.data) v = std::cbrt(v) * 5.0 + 1.0;
    EXPECT_EQ(ordinal_accuracy(noisy_mono, pairs), acc);

    const DisparityMap flat(8, 8, 0.5);
    EXPECT_EQ(ordinal_accuracy(flat, pairs), 0.0);
    EXPECT_THROW(ordinal_accuracy(pred, {}), InvalidArgument);
    EXPECT_THROW(ordinal_accuracy(pred, {OrdinalPair{0, 0, 8, 0, true}}), InvalidArgument);
    EXPECT_THROW(ordinal_accuracy(pred, {OrdinalPair{1, 1, 1, 1, true}}), InvalidArgument);
}

TEST(Ordinal, LoadPairs) {
    testutil::TempDir dir;
    std::ofstream(dir / "p.jsonl") << R"({"image": "a.ppm", "ax": 1, "ay": 2, "bx": 3, "by": 4, "closer": "b"})"
                                   << "\n\n"
                                   << R"({"image": "a.ppm", "ax": 0, "ay": 0, "bx": 1, "by": 0, "closer": "a"})" << "\n";
    const auto pairs = load_ordinal_pairs(dir / "p.jsonl");
    ASSERT_EQ(pairs.at("a.ppm").size(), 2u);
    EXPECT_EQ(pairs.at("a.ppm")[0].ay, 2);
    EXPECT_FALSE(pairs.at("a.ppm")[0].a_closer);
    EXPECT_TRUE(pairs.at("a.ppm")[1].a_closer);

    std::ofstream(dir / "bad.jsonl") << R"({"image": "a", "ax": 0, "ay": 0, "bx": 1, "by": 0, "closer": "c"})" << "\n";
    try {
        load_ordinal_pairs(dir / "bad.jsonl");
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find(":1"), std::string::npos) << e.what();
    }
    EXPECT_THROW(load_ordinal_pairs(dir / "none.jsonl"), Error);
}

TEST(Sweep, RowsOrderAndDeterminism) {
    const auto data = generate_samples(3, 16, 6);
    const DepthNet m = init_model(7, 3);
    const std::vector<CorruptionKind> kinds{CorruptionKind::fog, CorruptionKind::dark};
    const MetricReport a = robustness_sweep(m, data, kinds, {1, 5}, 8);
    const MetricReport b = robustness_sweep(m, data, kinds, {1, 5}, 8);
    ASSERT_EQ(a.rows.size(), 5u);
    EXPECT_EQ(a.rows[0].kind, "clean");
    EXPECT_EQ(a.rows[0].severity, 0);
    EXPECT_EQ(a.rows[1].kind, "fog");
    EXPECT_EQ(a.rows[2].severity, 5);
    EXPECT_EQ(a.rows[3].kind, "dark");
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        EXPECT_EQ(a.rows[i].to_json(), b.rows[i].to_json());
        EXPECT_GE(a.rows[i].absrel, 0.0);
        EXPECT_GE(a.rows[i].delta1, 0.0);
        EXPECT_LE(a.rows[i].delta1, 1.0);
    }
    EXPECT_EQ(a.delta1, a.rows[0].delta1);
    EXPECT_EQ(corrupt_set(data, CorruptionKind::snow, 3, 1), corrupt_set(data, CorruptionKind::snow, 3, 1));
    EXPECT_NE(corrupt_set(data, CorruptionKind::snow, 3, 1), corrupt_set(data, CorruptionKind::snow, 3, 2));

    auto no_gt = data;
    no_gt[1].gt.reset();
    EXPECT_THROW(robustness_sweep(m, no_gt, kinds, {1}, 8), InvalidArgument);
}

TEST(Sweep, FileLevelWritesJsonLines) {
    testutil::TempDir dir;
    generate_dataset(2, 16, 9, dir / "data");
    save_checkpoint(init_model(10, 3), dir / "m.acdk");
    const MetricReport rep = robustness_sweep(dir / "m.acdk", dir / "data", {CorruptionKind::zoom_blur}, {2, 3, 4}, 11,
                                              dir / "r.jsonl");
    std::ifstream in(dir / "r.jsonl");
    std::string line;
    std::vector<nlohmann::json> rows;
    while (std::getline(in, line)) rows.push_back(nlohmann::json::parse(line));
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_EQ(rows[2]["kind"], "zoom_blur");
    EXPECT_EQ(rows[2]["severity"], 3);
    EXPECT_EQ(rows[2]["delta1"].get<double>(), rep.rows[2].delta1);
    EXPECT_THROW(robustness_sweep(dir / "none.acdk", dir / "data", {}, {}, 1, dir / "x.jsonl"), CheckpointError);
}
