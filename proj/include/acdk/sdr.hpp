#pragma once

// Spatial distance relations between patches: planar distance between patch
// indices (min-max normalized), absolute difference of pooled normalized
// disparities, and their combination, plus the squared-discrepancy loss
// between a student's relation matrix and a reference one.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "acdk/image.hpp"
#include "acdk/losses.hpp"

namespace acdk {

enum class DistanceMetric { euclidean, manhattan };
enum class SdrParadigm { kd, consistency };

inline std::string_view to_string(DistanceMetric m) { return m == DistanceMetric::euclidean ? "euclidean" : "manhattan"; }
inline std::string_view to_string(SdrParadigm p) { return p == SdrParadigm::kd ? "kd" : "consistency"; }

inline std::optional<DistanceMetric> parse_metric(std::string_view s) {
    if (s == "euclidean" || s == "E") return DistanceMetric::euclidean;
    if (s == "manhattan" || s == "M") return DistanceMetric::manhattan;
    return std::nullopt;
}

inline std::optional<SdrParadigm> parse_paradigm(std::string_view s) {
    if (s == "kd") return SdrParadigm::kd;
    if (s == "consistency" || s == "con") return SdrParadigm::consistency;
    return std::nullopt;
}

struct SdrConfig {
    DistanceMetric metric = DistanceMetric::euclidean;
    SdrParadigm paradigm = SdrParadigm::kd;
    int patch_size = 14;
};

struct PatchGrid {
    int hp = 0;
    int wp = 0;
    int patch_size = 1;
    std::vector<double> values;                  // row-major hp x wp
    std::vector<std::pair<int, int>> coords;     // (row, col) per patch

    PatchGrid() = default;

    PatchGrid(int rows, int cols, std::vector<double> vals, int patch = 1)
        : hp(rows), wp(cols), patch_size(patch), values(std::move(vals)) {
        if (hp <= 0 || wp <= 0 || patch_size <= 0) throw InvalidArgument("PatchGrid: dimensions must be positive");
        if (values.size() != static_cast<std::size_t>(hp) * wp)
            throw ShapeMismatch("PatchGrid: value count does not match grid");
        coords.reserve(values.size());
        for (int r = 0; r < hp; ++r)
            for (int c = 0; c < wp; ++c) coords.emplace_back(r, c);
    }

    int count() const { return hp * wp; }
    bool same_shape(const PatchGrid& o) const { return hp == o.hp && wp == o.wp; }
};

/// Pairwise n x n relation matrix.
struct SdrMatrix {
    int n = 0;
    std::vector<double> data;

    SdrMatrix() = default;
    explicit SdrMatrix(int size) : n(size), data(static_cast<std::size_t>(size) * size, 0.0) {}

    double& at(int a, int b) { return data[static_cast<std::size_t>(a) * n + b]; }
    double at(int a, int b) const { return data[static_cast<std::size_t>(a) * n + b]; }
};

/// Pools the scale-shift-normalized map into patch means.
inline PatchGrid patchify(const DisparityMap& d, int patch_size) {
    if (patch_size <= 0) throw InvalidArgument("patchify: patch size must be positive");
    if (d.height < patch_size || d.width < patch_size || d.height % patch_size != 0 || d.width % patch_size != 0)
        throw InvalidArgument("patchify: map " + std::to_string(d.height) + "x" + std::to_string(d.width) +
                              " is not divisible by patch size " + std::to_string(patch_size));
    const NormStats st = norm_stats(d);
    const int hp = d.height / patch_size;
    const int wp = d.width / patch_size;
    std::vector<double> vals(static_cast<std::size_t>(hp) * wp, 0.0);
    for (int y = 0; y < d.height; ++y)
        for (int x = 0; x < d.width; ++x)
            vals[static_cast<std::size_t>(y / patch_size) * wp + x / patch_size] += (d.at(y, x) - st.t) / st.s;
    const double inv = 1.0 / (static_cast<double>(patch_size) * patch_size);
    for (double& v : vals) v *= inv;
    return PatchGrid(hp, wp, std::move(vals), patch_size);
}

/// Dense gradient of a loss given its gradient with respect to the patch values.
inline DisparityMap patchify_backward(const DisparityMap& d, int patch_size, std::span<const double> grad_values) {
    const NormStats st = norm_stats(d);
    const int wp = d.width / patch_size;
    const double inv = 1.0 / (static_cast<double>(patch_size) * patch_size);
    std::vector<double> u = normalize(d.data, st);
    std::vector<double> gu(d.size());
    for (int y = 0; y < d.height; ++y)
        for (int x = 0; x < d.width; ++x)
            gu[static_cast<std::size_t>(y) * d.width + x] =
                grad_values[static_cast<std::size_t>(y / patch_size) * wp + x / patch_size] * inv;
    return DisparityMap(d.height, d.width, normalize_backward(d.data, st, u, gu));
}

namespace detail {

inline double planar_distance(std::pair<int, int> a, std::pair<int, int> b, DistanceMetric m) {
    const double dr = a.first - b.first;
    const double dc = a.second - b.second;
    return m == DistanceMetric::euclidean ? std::sqrt(dr * dr + dc * dc) : std::fabs(dr) + std::fabs(dc);
}

inline double combine(double sp, double sd, DistanceMetric m) {
    return m == DistanceMetric::euclidean ? std::sqrt(sp * sp + sd * sd) : sp + sd;
}

}  // namespace detail

/// Min-max normalized planar distances between integer patch indices.
inline SdrMatrix position_relation(int hp, int wp, DistanceMetric metric = DistanceMetric::euclidean) {
    if (hp <= 0 || wp <= 0) throw InvalidArgument("position_relation: grid must be non-empty");
    const int n = hp * wp;
    if (n < 2) throw InvalidArgument("position_relation: need at least two patches");
    SdrMatrix m(n);
    double hi = 0.0;
    for (int a = 0; a < n; ++a) {
        const std::pair<int, int> pa{a / wp, a % wp};
        for (int b = a + 1; b < n; ++b) {
            const double v = detail::planar_distance(pa, {b / wp, b % wp}, metric);
            m.at(a, b) = v;
            m.at(b, a) = v;
            hi = std::max(hi, v);
        }
    }
    // the diagonal holds the minimum (0)
    for (double& v : m.data) v /= hi;
    return m;
}

inline SdrMatrix depth_relation(const PatchGrid& g) {
    const int n = g.count();
    SdrMatrix m(n);
    for (int a = 0; a < n; ++a) {
        for (int b = a + 1; b < n; ++b) {
            const double v = std::fabs(g.values[a] - g.values[b]);
            m.at(a, b) = v;
            m.at(b, a) = v;
        }
    }
    return m;
}

/// Elementwise sqrt(sp^2 + sd^2) (Euclidean) or sp + sd (Manhattan).
inline SdrMatrix spatial_distance(const SdrMatrix& sp, const SdrMatrix& sd,
                                  DistanceMetric metric = DistanceMetric::euclidean) {
    if (sp.n != sd.n) throw ShapeMismatch("spatial_distance: matrix sizes differ");
    SdrMatrix out(sp.n);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = detail::combine(sp.data[i], sd.data[i], metric);
    return out;
}

/// Fused construction of the full relation matrix for a grid. Equivalent to
/// spatial_distance(position_relation, depth_relation) with one pass over the
/// upper triangle.
inline SdrMatrix sdr_matrix(const PatchGrid& g, const SdrMatrix& sp, DistanceMetric metric) {
    const int n = g.count();
    if (sp.n != n) throw ShapeMismatch("sdr_matrix: position relation does not match grid");
    SdrMatrix out(n);
    for (int a = 0; a < n; ++a) {
        const double va = g.values[a];
        const double* sp_row = &sp.data[static_cast<std::size_t>(a) * n];
        double* row = &out.data[static_cast<std::size_t>(a) * n];
        for (int b = a + 1; b < n; ++b) {
            const double v = detail::combine(sp_row[b], std::fabs(va - g.values[b]), metric);
            row[b] = v;
            out.data[static_cast<std::size_t>(b) * n + a] = v;
        }
    }
    return out;
}

inline SdrMatrix sdr_matrix(const PatchGrid& g, DistanceMetric metric = DistanceMetric::euclidean) {
    return sdr_matrix(g, position_relation(g.hp, g.wp, metric), metric);
}

/// Mean over all n^2 entries of (S_D(student) - S_D(reference))^2. `grad`
/// holds d/d(student patch values) as an hp x wp map; the reference is a
/// constant.
inline LossValue sdr_loss(const PatchGrid& student, const PatchGrid& reference,
                          DistanceMetric metric = DistanceMetric::euclidean) {
    if (!student.same_shape(reference)) throw ShapeMismatch("sdr_loss: grid shapes differ");
    const int n = student.count();
    const SdrMatrix sp = position_relation(student.hp, student.wp, metric);
    const SdrMatrix ds = sdr_matrix(student, sp, metric);
    const SdrMatrix dr = sdr_matrix(reference, sp, metric);
    const double nn = static_cast<double>(n) * n;

    LossValue out;
    std::vector<double> g(n, 0.0);
    for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
            const double diff = ds.at(a, b) - dr.at(a, b);
            out.value += diff * diff;
            if (a == b) continue;
            const double d = student.values[a] - student.values[b];
            const double dsd = metric == DistanceMetric::euclidean
                                   ? (ds.at(a, b) > 0.0 ? d / ds.at(a, b) : 0.0)
                                   : sign_of(d);
            const double coef = 2.0 * diff / nn * dsd;
            g[a] += coef;
            g[b] -= coef;
        }
    }
    out.value /= nn;
    out.grad = DisparityMap(student.hp, student.wp, std::move(g));
    return out;
}

/// Top-left crop to the largest multiple of `patch_size` in each dimension.
inline DisparityMap crop_to_patches(const DisparityMap& d, int patch_size) {
    const int h = d.height / patch_size * patch_size;
    const int w = d.width / patch_size * patch_size;
    if (h == 0 || w == 0) throw InvalidArgument("crop_to_patches: map smaller than one patch");
    if (h == d.height && w == d.width) return d;
    DisparityMap out(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out.at(y, x) = d.at(y, x);
    return out;
}

/// SDR loss on dense maps: crop, patchify both, compare, and pull the
/// gradient back to the student's full-resolution map (zero outside the crop).
inline LossValue sdr_loss_dense(const DisparityMap& student, const DisparityMap& reference, const SdrConfig& cfg) {
    require_same_shape(student, reference, "sdr_loss_dense");
    const DisparityMap s = crop_to_patches(student, cfg.patch_size);
    const DisparityMap r = crop_to_patches(reference, cfg.patch_size);
    LossValue patch_loss = sdr_loss(patchify(s, cfg.patch_size), patchify(r, cfg.patch_size), cfg.metric);
    const DisparityMap g_crop = patchify_backward(s, cfg.patch_size, patch_loss.grad->data);
    DisparityMap g(student.height, student.width, 0.0);
    for (int y = 0; y < g_crop.height; ++y)
        for (int x = 0; x < g_crop.width; ++x) g.at(y, x) = g_crop.at(y, x);
    LossValue out;
    out.value = patch_loss.value;
    out.grad = std::move(g);
    return out;
}

/// One row of S_D reshaped to the grid and min-max normalized, for heatmaps.
inline DisparityMap sdr_row_map(const PatchGrid& g, int row, int col, DistanceMetric metric = DistanceMetric::euclidean) {
    if (row < 0 || row >= g.hp || col < 0 || col >= g.wp)
        throw InvalidArgument("sdr_row_map: query (" + std::to_string(row) + "," + std::to_string(col) +
                              ") outside " + std::to_string(g.hp) + "x" + std::to_string(g.wp) + " grid");
    const SdrMatrix sd = sdr_matrix(g, metric);
    const int q = row * g.wp + col;
    DisparityMap out(g.hp, g.wp);
    for (int b = 0; b < g.count(); ++b) out.data[b] = sd.at(q, b);
    const auto [lo, hi] = std::minmax_element(out.data.begin(), out.data.end());
    const double mn = *lo;
    const double range = *hi - *lo;
    for (double& v : out.data) v = range > 0.0 ? (v - mn) / range : 0.0;
    return out;
}

}  // namespace acdk
