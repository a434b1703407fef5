#pragma once

// Relative-depth metrics. Predictions are aligned to ground truth with a
// least-squares scale and shift in disparity space, then both maps are
// inverted to depth for AbsRel and delta1.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "acdk/corruption.hpp"
#include "acdk/datagen.hpp"
#include "acdk/image.hpp"
#include "acdk/model.hpp"
#include "acdk/parallel.hpp"

namespace acdk {

inline constexpr double kDisparityFloor = 1e-6;
inline constexpr double kDelta1Threshold = 1.25;

using ValidMask = std::vector<std::uint8_t>;

struct AlignedPair {
    DisparityMap pred_aligned;
    DisparityMap gt;
    ValidMask mask;
    double s_fit = 1.0;
    double t_fit = 0.0;
};

/// Pixels with positive ground truth.
inline ValidMask positive_mask(const DisparityMap& gt) {
    ValidMask m(gt.size());
    for (std::size_t i = 0; i < gt.size(); ++i) m[i] = gt.data[i] > 0.0 ? 1 : 0;
    return m;
}

/// Closed-form argmin over (s, t) of sum (s * pred + t - gt)^2 on valid pixels.
inline AlignedPair align(const DisparityMap& pred, const DisparityMap& gt, const ValidMask& mask) {
    require_same_shape(pred, gt, "align");
    if (mask.size() != gt.size()) throw ShapeMismatch("align: mask size mismatch");
    double n = 0, sp = 0, sg = 0;
    bool pred_varies = false, gt_varies = false;
    std::size_t first = gt.size();
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (!mask[i]) continue;
        if (first == gt.size()) first = i;
        pred_varies = pred_varies || pred.data[i] != pred.data[first];
        gt_varies = gt_varies || gt.data[i] != gt.data[first];
        n += 1;
        sp += pred.data[i];
        sg += gt.data[i];
    }
    if (n < 2) throw InvalidArgument("align: need at least two valid pixels");
    const double mp = sp / n, mg = sg / n;
    double cov = 0, var = 0, var_g = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (!mask[i]) continue;
        const double dp = pred.data[i] - mp, dg = gt.data[i] - mg;
        cov += dp * dg;
        var += dp * dp;
        var_g += dg * dg;
    }
    if (!pred_varies || !(var > 0.0)) throw InvalidArgument("align: prediction is constant over valid pixels (singular system)");
    if (!gt_varies || !(var_g > 0.0)) throw InvalidArgument("align: ground truth is constant over valid pixels");
    AlignedPair r;
    r.s_fit = cov / var;
    r.t_fit = mg - r.s_fit * mp;
    r.gt = gt;
    r.mask = mask;
    r.pred_aligned = DisparityMap(pred.height, pred.width);
    for (std::size_t i = 0; i < pred.size(); ++i)
        r.pred_aligned.data[i] = std::max(kDisparityFloor, r.s_fit * pred.data[i] + r.t_fit);
    return r;
}

inline AlignedPair align(const DisparityMap& pred, const DisparityMap& gt) { return align(pred, gt, positive_mask(gt)); }

inline double to_depth(double disparity) { return 1.0 / std::max(disparity, kDisparityFloor); }

inline double absrel(const AlignedPair& p) {
    double sum = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < p.gt.size(); ++i) {
        if (!p.mask[i]) continue;
        const double dp = to_depth(p.pred_aligned.data[i]);
        const double dg = to_depth(p.gt.data[i]);
        sum += std::fabs(dp - dg) / dg;
        ++n;
    }
    return n ? sum / static_cast<double>(n) : 0.0;
}

inline double delta1(const AlignedPair& p) {
    std::size_t good = 0, n = 0;
    for (std::size_t i = 0; i < p.gt.size(); ++i) {
        if (!p.mask[i]) continue;
        const double dp = to_depth(p.pred_aligned.data[i]);
        const double dg = to_depth(p.gt.data[i]);
        if (std::max(dp / dg, dg / dp) < kDelta1Threshold) ++good;
        ++n;
    }
    return n ? static_cast<double>(good) / static_cast<double>(n) : 0.0;
}

// ---------------------------------------------------------------------------
// Ordinal pairs

struct OrdinalPair {
    int ax = 0, ay = 0, bx = 0, by = 0;
    bool a_closer = true;
};

/// Fraction of pairs where the labeled-closer point has strictly higher
/// predicted disparity. Ties count as wrong.
inline double ordinal_accuracy(const DisparityMap& pred, const std::vector<OrdinalPair>& pairs) {
    if (pairs.empty()) throw InvalidArgument("ordinal_accuracy: no pairs");
    std::size_t correct = 0;
    for (const auto& p : pairs) {
        for (auto [x, y] : {std::pair{p.ax, p.ay}, std::pair{p.bx, p.by}})
            if (x < 0 || x >= pred.width || y < 0 || y >= pred.height)
                throw InvalidArgument("ordinal_accuracy: point (" + std::to_string(x) + "," + std::to_string(y) +
                                      ") outside the map");
        if (p.ax == p.bx && p.ay == p.by) throw InvalidArgument("ordinal_accuracy: pair points coincide");
        const double a = pred.at(p.ay, p.ax), b = pred.at(p.by, p.bx);
        if (p.a_closer ? a > b : b > a) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

/// JSON-lines {image, ax, ay, bx, by, closer: "a"|"b"}, grouped by image.
inline std::map<std::string, std::vector<OrdinalPair>> load_ordinal_pairs(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::map<std::string, std::vector<OrdinalPair>> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            const std::string closer = j.at("closer").get<std::string>();
            if (closer != "a" && closer != "b") throw Error("closer must be \"a\" or \"b\"");
            out[j.at("image").get<std::string>()].push_back(
                {j.at("ax").get<int>(), j.at("ay").get<int>(), j.at("bx").get<int>(), j.at("by").get<int>(), closer == "a"});
        } catch (const std::exception& e) {
            throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepRow {
    std::string kind;  // "clean" or a corruption tag
    int severity = 0;  // 0 for clean
    double absrel = 0.0;
    double delta1 = 0.0;
    std::size_t n_pixels = 0;

    nlohmann::json to_json() const {
        return {{"kind", kind}, {"severity", severity}, {"absrel", absrel}, {"delta1", delta1}, {"n_pixels", n_pixels}};
    }
};

struct MetricReport {
    double absrel = 0.0;  // clean
    double delta1 = 0.0;  // clean
    std::size_t n_pixels = 0;
    std::vector<SweepRow> rows;  // clean first, then (kind, severity) in request order
};

struct ImageMetrics {
    double absrel = 0.0;
    double delta1 = 0.0;
    std::size_t n_pixels = 0;
};

inline ImageMetrics evaluate_prediction(const DisparityMap& pred, const DisparityMap& gt) {
    const AlignedPair p = align(pred, gt);
    std::size_t n = 0;
    for (auto v : p.mask) n += v;
    return {absrel(p), delta1(p), n};
}

/// Per-image metrics averaged over the set.
template <typename T>
SweepRow evaluate_images(const ModelState<T>& model, const std::vector<ImageBuffer>& images,
                         const std::vector<const DisparityMap*>& gts, std::string kind, int severity) {
    std::vector<ImageMetrics> per(images.size());
    parallel_for(images.size(), [&](std::size_t i) { per[i] = evaluate_prediction(forward(model, images[i]).disparity, *gts[i]); });
    SweepRow row{std::move(kind), severity, 0.0, 0.0, 0};
    for (const auto& m : per) {
        row.absrel += m.absrel;
        row.delta1 += m.delta1;
        row.n_pixels += m.n_pixels;
    }
    row.absrel /= static_cast<double>(per.size());
    row.delta1 /= static_cast<double>(per.size());
    return row;
}

/// Corrupted copy of every sample for one (kind, severity); the stream for
/// image i depends only on (seed, kind, severity, i).
inline std::vector<ImageBuffer> corrupt_set(const std::vector<Sample>& data, CorruptionKind kind, int severity,
                                            std::uint64_t seed) {
    const Rng root = Rng(seed).fork(std::string(to_string(kind)) + "/" + std::to_string(severity));
    std::vector<ImageBuffer> out(data.size());
    parallel_for(data.size(), [&](std::size_t i) {
        Rng r = root.fork("image", i);
        out[i] = apply_corruption(kind, data[i].image, Severity(severity), r);
    });
    return out;
}

template <typename T>
MetricReport robustness_sweep(const ModelState<T>& model, const std::vector<Sample>& data,
                              const std::vector<CorruptionKind>& kinds, const std::vector<int>& severities,
                              std::uint64_t seed) {
    std::vector<ImageBuffer> clean;
    std::vector<const DisparityMap*> gts;
    for (const auto& s : data) {
        if (!s.gt) throw InvalidArgument("robustness_sweep: sample " + s.name + " has no ground truth");
        clean.push_back(s.image);
        gts.push_back(&*s.gt);
    }
    MetricReport rep;
    rep.rows.push_back(evaluate_images(model, clean, gts, "clean", 0));
    rep.absrel = rep.rows[0].absrel;
    rep.delta1 = rep.rows[0].delta1;
    rep.n_pixels = rep.rows[0].n_pixels;
    for (auto k : kinds)
        for (int s : severities)
            rep.rows.push_back(evaluate_images(model, corrupt_set(data, k, s, seed), gts, std::string(to_string(k)), s));
    return rep;
}

inline void write_sweep(const MetricReport& rep, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    for (const auto& r : rep.rows) out << r.to_json().dump() << '\n';
}

/// Checkpoint + dataset directory -> JSON-lines report.
inline MetricReport robustness_sweep(const std::filesystem::path& ckpt, const std::filesystem::path& data_dir,
                                     const std::vector<CorruptionKind>& kinds, const std::vector<int>& severities,
                                     std::uint64_t seed, const std::filesystem::path& report_path) {
    const DepthNet model = load_checkpoint<float>(ckpt);
    const std::vector<Sample> data = load_dataset(data_dir);
    MetricReport rep = robustness_sweep(model, data, kinds, severities, seed);
    write_sweep(rep, report_path);
    return rep;
}

}  // namespace acdk
