#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "acdk/image.hpp"

namespace acdk {

/// Shift (mean) and scale (mean absolute deviation) of a disparity map.
struct NormStats {
    double t = 0.0;
    double s = 0.0;
};

inline NormStats norm_stats(std::span<const double> y) {
    if (y.empty()) throw InvalidArgument("norm_stats: empty map");
    const double n = static_cast<double>(y.size());
    double sum = 0.0;
    for (double v : y) sum += v;
    const double t = sum / n;
    double dev = 0.0;
    for (double v : y) dev += std::fabs(v - t);
    const double s = dev / n;
    const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
    if (!(s > 0.0) || *lo == *hi) throw DegenerateScale("norm_stats: constant map has zero scale");
    return {t, s};
}

inline NormStats norm_stats(const DisparityMap& y) { return norm_stats(std::span<const double>(y.data)); }

inline std::vector<double> normalize(std::span<const double> y, const NormStats& st) {
    std::vector<double> u(y.size());
    for (std::size_t j = 0; j < y.size(); ++j) u[j] = (y[j] - st.t) / st.s;
    return u;
}

inline double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

/// Pulls dL/du back through u = (y - t(y)) / s(y), differentiating t and s.
/// With M pixels and g = dL/du:
///   dL/dy_k = (g_k - mean g) / s - (sum_j g_j u_j) (sgn_k - mean sgn) / (M s)
/// where sgn_k = sign(y_k - t).
inline std::vector<double> normalize_backward(std::span<const double> y, const NormStats& st,
                                              std::span<const double> u, std::span<const double> g) {
    const std::size_t m = y.size();
    const double n = static_cast<double>(m);
    double g_mean = 0.0;
    double gu = 0.0;
    double sgn_mean = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        g_mean += g[j];
        gu += g[j] * u[j];
        sgn_mean += sign_of(y[j] - st.t);
    }
    g_mean /= n;
    sgn_mean /= n;
    std::vector<double> dy(m);
    for (std::size_t k = 0; k < m; ++k)
        dy[k] = (g[k] - g_mean) / st.s - gu * (sign_of(y[k] - st.t) - sgn_mean) / (n * st.s);
    return dy;
}

/// Scalar loss with optional gradients. `grad` is with respect to the first
/// (prediction) argument, `grad_target` with respect to the second when the
/// caller asked for it.
struct LossValue {
    double value = 0.0;
    std::optional<DisparityMap> grad;
    std::optional<DisparityMap> grad_target;
};

/// Mean absolute difference of the two maps after each is shifted by its
/// mean and divided by its mean absolute deviation.
inline LossValue affine_invariant_loss(const DisparityMap& y, const DisparityMap& yhat, bool want_grad = true,
                                       bool want_target_grad = false) {
    require_same_shape(y, yhat, "affine_invariant_loss");
    const NormStats sy = norm_stats(y);
    const NormStats sh = norm_stats(yhat);
    const std::vector<double> u = normalize(y.data, sy);
    const std::vector<double> uh = normalize(yhat.data, sh);
    const double n = static_cast<double>(u.size());

    LossValue out;
    std::vector<double> g(u.size());
    for (std::size_t j = 0; j < u.size(); ++j) {
        const double r = u[j] - uh[j];
        out.value += std::fabs(r);
        g[j] = sign_of(r) / n;  // subgradient 0 at r == 0
    }
    out.value /= n;

    if (want_grad) out.grad = DisparityMap(y.height, y.width, normalize_backward(y.data, sy, u, g));
    if (want_target_grad) {
        for (double& v : g) v = -v;
        out.grad_target = DisparityMap(y.height, y.width, normalize_backward(yhat.data, sh, uh, g));
    }
    return out;
}

enum class ConsistencyMode { stop_grad_weak, both_branches };

/// Strong-branch prediction against the weak-branch prediction. `grad` is
/// d/d(pred_strong); `grad_target` is d/d(pred_weak) and is only filled in
/// both_branches mode.
inline LossValue consistency_loss(const DisparityMap& pred_weak, const DisparityMap& pred_strong,
                                  ConsistencyMode mode = ConsistencyMode::stop_grad_weak) {
    return affine_invariant_loss(pred_strong, pred_weak, true, mode == ConsistencyMode::both_branches);
}

/// Student weak-branch prediction against the frozen teacher; the teacher
/// side never receives a gradient.
inline LossValue kd_loss(const DisparityMap& pred_student_weak, const DisparityMap& pred_teacher_weak) {
    return affine_invariant_loss(pred_student_weak, pred_teacher_weak, true, false);
}

struct LossWeights {
    double consistency = 1.0 / 3.0;
    double distill = 1.0 / 3.0;
    double sdr = 1.0 / 3.0;

    void validate() const {
        if (!(consistency >= 0.0) || !(distill >= 0.0) || !(sdr >= 0.0))
            throw InvalidArgument("loss weights must be non-negative");
    }
};

/// Weighted sum of the three losses. Gradients present on every input are
/// summed with the same weights when they share a shape; a gradient missing
/// from any term with non-zero weight leaves the result without one.
inline LossValue total_loss(const LossValue& lc, const LossValue& lkd, const LossValue& ls, const LossWeights& w) {
    w.validate();
    LossValue out;
    out.value = w.consistency * lc.value + w.distill * lkd.value + w.sdr * ls.value;

    const LossValue* terms[3] = {&lc, &lkd, &ls};
    const double weights[3] = {w.consistency, w.distill, w.sdr};
    std::optional<DisparityMap> sum;
    bool complete = true;
    for (int i = 0; i < 3; ++i) {
        if (weights[i] == 0.0) continue;
        if (!terms[i]->grad) {
            complete = false;
            break;
        }
        if (!sum) {
            sum = DisparityMap(terms[i]->grad->height, terms[i]->grad->width);
        } else {
            require_same_shape(*sum, *terms[i]->grad, "total_loss");
        }
        for (std::size_t j = 0; j < sum->size(); ++j) sum->data[j] += weights[i] * terms[i]->grad->data[j];
    }
    if (complete && sum) out.grad = std::move(sum);
    return out;
}

}  // namespace acdk
