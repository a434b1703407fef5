#pragma once

// Central finite-difference checks of every analytic gradient in the
// library: the affine-invariant loss family, the SDR loss (grid and dense),
// the network backward pass, and the full training objective.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "acdk/losses.hpp"
#include "acdk/model.hpp"
#include "acdk/rng.hpp"
#include "acdk/sdr.hpp"
#include "acdk/trainer.hpp"

namespace acdk {

struct GradCheckOptions {
    std::uint64_t seed = 0;
    bool inject_fault = false;  // corrupt one model gradient entry (test hook)
    int model_samples = 500;
    int pipeline_samples = 200;
};

struct SuiteResult {
    std::string group;  // loss, sdr or model
    std::string name;
    double threshold = 0.0;
    double max_rel_error = 0.0;
    std::string worst;
    std::size_t checked = 0;
    std::size_t skipped = 0;  // coordinates whose perturbation crossed a kink

    SuiteResult() = default;
    SuiteResult(std::string g, std::string n, double thr) : group(std::move(g)), name(std::move(n)), threshold(thr) {}

    bool passed() const { return checked > 0 && max_rel_error < threshold; }
};

struct GradCheckReport {
    std::vector<SuiteResult> suites;

    double max_error(const std::string& group) const {
        double m = 0.0;
        for (const auto& s : suites)
            if (s.group == group) m = std::max(m, s.max_rel_error);
        return m;
    }
    bool passed() const {
        return std::all_of(suites.begin(), suites.end(), [](const SuiteResult& s) { return s.passed(); });
    }
    const SuiteResult* first_failure() const {
        for (const auto& s : suites)
            if (!s.passed()) return &s;
        return nullptr;
    }
};

inline double relative_error(double analytic, double numeric, double floor) {
    const double den = std::max({std::fabs(analytic), std::fabs(numeric), floor});
    return std::fabs(analytic - numeric) / den;
}

namespace detail {

/// Objective value plus the branch pattern (signs at every kink) it was
/// evaluated on.
struct Probe {
    double value = 0.0;
    std::vector<std::int8_t> signature;
};

inline void sign_signature(std::span<const double> v, double pivot, std::vector<std::int8_t>& sig) {
    for (double x : v) sig.push_back(static_cast<std::int8_t>(sign_of(x - pivot)));
}

inline void affine_signature(const DisparityMap& y, const DisparityMap& yhat, std::vector<std::int8_t>& sig) {
    const NormStats a = norm_stats(y), b = norm_stats(yhat);
    sign_signature(y.data, a.t, sig);
    sign_signature(yhat.data, b.t, sig);
    const auto u = normalize(y.data, a), uh = normalize(yhat.data, b);
    for (std::size_t i = 0; i < u.size(); ++i) sig.push_back(static_cast<std::int8_t>(sign_of(u[i] - uh[i])));
}

inline void grid_signature(const PatchGrid& g, std::vector<std::int8_t>& sig) {
    for (int a = 0; a < g.count(); ++a)
        for (int b = a + 1; b < g.count(); ++b)
            sig.push_back(static_cast<std::int8_t>(sign_of(g.values[a] - g.values[b])));
}

inline void dense_sdr_signature(const DisparityMap& student, const SdrConfig& cfg, std::vector<std::int8_t>& sig) {
    const DisparityMap s = crop_to_patches(student, cfg.patch_size);
    sign_signature(s.data, norm_stats(s).t, sig);
    grid_signature(patchify(s, cfg.patch_size), sig);
}

template <typename T>
void relu_signature(const ForwardCache<T>& c, std::vector<std::int8_t>& sig) {
    for (int l = 0; l < kLayerCount - 1; ++l)
        for (T v : c.pre[l].data) sig.push_back(v > T(0) ? 1 : 0);
}

/// Compares analytic[i] against a central difference for each coordinate in
/// `coords`. `eval(i, delta)` evaluates with coordinate i shifted by delta
/// and must leave the state unchanged afterwards.
inline void check_coords(SuiteResult& r, const std::vector<std::size_t>& coords, const std::vector<double>& analytic,
                         const std::function<Probe(std::size_t, double)>& eval,
                         const std::function<std::string(std::size_t)>& describe, double h, double floor,
                         const std::function<bool(std::size_t)>& tamper = {}) {
    const Probe base = eval(0, 0.0);
    for (std::size_t i : coords) {
        const Probe plus = eval(i, h);
        const Probe minus = eval(i, -h);
        if (plus.signature != base.signature || minus.signature != base.signature) {
            ++r.skipped;
            continue;
        }
        const double numeric = (plus.value - minus.value) / (2.0 * h);
        double a = analytic[i];
        if (tamper && tamper(i)) a = a * 1.5 + 1e-3;
        double err = relative_error(a, numeric, floor);
        if (std::isnan(err)) err = std::numeric_limits<double>::infinity();
        ++r.checked;
        if (r.worst.empty() || err > r.max_rel_error) {
            r.max_rel_error = err;
            r.worst = describe(i);
        }
    }
}

inline std::vector<std::size_t> all_coords(std::size_t n) {
    std::vector<std::size_t> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = i;
    return v;
}

inline DisparityMap random_map(int h, int w, Rng& rng, double lo = 0.0, double hi = 1.0) {
    DisparityMap m(h, w);
    for (double& v : m.data) v = rng_uniform(rng, lo, hi);
    return m;
}

inline ImageBuffer random_image(int h, int w, int c, Rng& rng) {
    ImageBuffer img(h, w, c);
    for (double& v : img.data) v = rng.next_unit();
    return img;
}

inline std::string pixel_name(const char* map, const DisparityMap& m, std::size_t i) {
    return std::string(map) + "[" + std::to_string(i / m.width) + "," + std::to_string(i % m.width) + "]";
}

/// Checks dL/dx for a loss of one map, with `x` perturbed in place.
inline SuiteResult check_map_gradient(std::string group, std::string name, DisparityMap& x,
                                      const std::vector<double>& analytic,
                                      const std::function<Probe()>& eval, double h, double threshold, const char* label) {
    SuiteResult r{std::move(group), std::move(name), threshold};
    check_coords(
        r, all_coords(x.size()), analytic,
        [&](std::size_t i, double d) {
            const double keep = x.data[i];
            x.data[i] = keep + d;
            Probe p = eval();
            x.data[i] = keep;
            return p;
        },
        [&](std::size_t i) { return pixel_name(label, x, i); }, h, 1e-8);
    return r;
}

/// Model parameter sample: up to 64 per layer, then uniform fill.
template <typename T>
std::vector<std::size_t> sample_params(const ModelState<T>& m, int count, Rng& rng, bool unfrozen_only) {
    std::set<std::size_t> chosen;
    std::vector<std::size_t> pool;
    for (int l = 0; l < kLayerCount; ++l) {
        if (unfrozen_only && m.frozen[l]) continue;
        const LayerSpec& s = m.layers[l];
        const std::size_t begin = s.weight_offset, end = s.bias_offset + static_cast<std::size_t>(s.out_channels);
        std::vector<std::size_t> idx;
        for (std::size_t p = begin; p < end; ++p) idx.push_back(p);
        pool.insert(pool.end(), idx.begin(), idx.end());
        const std::size_t take = std::min<std::size_t>(idx.size(), 64);
        for (std::size_t k = 0; k < take; ++k) {
            const std::size_t j = k + rng.next_u64() % (idx.size() - k);
            std::swap(idx[k], idx[j]);
            chosen.insert(idx[k]);
        }
    }
    const std::size_t target = std::min<std::size_t>(pool.size(), static_cast<std::size_t>(std::max(count, 0)));
    while (chosen.size() < target) chosen.insert(pool[rng.next_u64() % pool.size()]);
    return {chosen.begin(), chosen.end()};
}

/// Small random biases so no pre-activation sits exactly on a ReLU kink.
template <typename T>
void jitter_biases(ModelState<T>& m, Rng& rng) {
    for (const auto& s : m.layers)
        for (int o = 0; o < s.out_channels; ++o) m.params[s.bias_offset + o] = static_cast<T>(rng_uniform(rng, -0.05, 0.05));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Suites

/// Affine-invariant loss, consistency loss (both modes) and distillation loss
/// on 8x8 random maps, h = 1e-4.
inline std::vector<SuiteResult> check_loss_gradients(std::uint64_t seed) {
    constexpr double h = 1e-4, thr = 1e-4;
    Rng rng = Rng(seed).fork("gradcheck/loss");
    std::vector<SuiteResult> out;
    DisparityMap a = detail::random_map(8, 8, rng), b = detail::random_map(8, 8, rng, -2.0, 3.0);

    auto probe = [&](const DisparityMap& y, const DisparityMap& yh) {
        detail::Probe p{affine_invariant_loss(y, yh, false).value, {}};
        detail::affine_signature(y, yh, p.signature);
        return p;
    };

    {
        const LossValue l = affine_invariant_loss(a, b, true, true);
        out.push_back(detail::check_map_gradient("loss", "affine_invariant d/dy", a, l.grad->data,
                                                 [&] { return probe(a, b); }, h, thr, "y"));
        out.push_back(detail::check_map_gradient("loss", "affine_invariant d/dyhat", b, l.grad_target->data,
                                                 [&] { return probe(a, b); }, h, thr, "yhat"));
    }
    DisparityMap weak = detail::random_map(8, 8, rng), strong = detail::random_map(8, 8, rng);
    {
        const LossValue l = consistency_loss(weak, strong, ConsistencyMode::both_branches);
        out.push_back(detail::check_map_gradient("loss", "consistency d/dstrong", strong, l.grad->data,
                                                 [&] { return probe(strong, weak); }, h, thr, "strong"));
        out.push_back(detail::check_map_gradient("loss", "consistency d/dweak", weak, l.grad_target->data,
                                                 [&] { return probe(strong, weak); }, h, thr, "weak"));
        const LossValue s = consistency_loss(weak, strong, ConsistencyMode::stop_grad_weak);
        if (s.grad_target) throw Error("consistency loss: stop-grad mode produced a weak-branch gradient");
    }
    DisparityMap student = detail::random_map(8, 8, rng), teacher = detail::random_map(8, 8, rng);
    {
        const LossValue l = kd_loss(student, teacher);
        out.push_back(detail::check_map_gradient("loss", "distillation d/dstudent", student, l.grad->data,
                                                 [&] { return probe(student, teacher); }, h, thr, "student"));
    }
    return out;
}

/// SDR loss on 3x3 grids (both metrics) and through patch pooling on 12x12
/// dense maps with 4-pixel patches, h = 1e-4.
inline std::vector<SuiteResult> check_sdr_gradients(std::uint64_t seed) {
    constexpr double h = 1e-4, thr = 1e-4;
    Rng rng = Rng(seed).fork("gradcheck/sdr");
    std::vector<SuiteResult> out;
    for (DistanceMetric metric : {DistanceMetric::euclidean, DistanceMetric::manhattan}) {
        PatchGrid s(3, 3, detail::random_map(3, 3, rng, -1.5, 1.5).data);
        const PatchGrid ref(3, 3, detail::random_map(3, 3, rng, -1.5, 1.5).data);
        const LossValue l = sdr_loss(s, ref, metric);
        SuiteResult r{"sdr", "sdr_loss 3x3 " + std::string(to_string(metric)), thr};
        detail::check_coords(
            r, detail::all_coords(9), l.grad->data,
            [&](std::size_t i, double d) {
                const double keep = s.values[i];
                s.values[i] = keep + d;
                detail::Probe p{sdr_loss(s, ref, metric).value, {}};
                detail::grid_signature(s, p.signature);
                s.values[i] = keep;
                return p;
            },
            [&](std::size_t i) { return "patch[" + std::to_string(i / 3) + "," + std::to_string(i % 3) + "]"; }, h,
            1e-8);
        out.push_back(std::move(r));
    }
    for (DistanceMetric metric : {DistanceMetric::euclidean, DistanceMetric::manhattan}) {
        const SdrConfig cfg{metric, SdrParadigm::kd, 4};
        DisparityMap s = detail::random_map(12, 12, rng);
        const DisparityMap ref = detail::random_map(12, 12, rng);
        const LossValue l = sdr_loss_dense(s, ref, cfg);
        out.push_back(detail::check_map_gradient(
            "sdr", "sdr_loss dense 12x12/4 " + std::string(to_string(metric)), s, l.grad->data,
            [&] {
                detail::Probe p{sdr_loss_dense(s, ref, cfg).value, {}};
                detail::dense_sdr_signature(s, cfg, p.signature);
                return p;
            },
            h, thr, "disparity"));
    }
    return out;
}

/// Network backward on a 16x16 input against a random linear functional of
/// the output, 500 sampled parameters, h = 1e-3.
inline SuiteResult check_model_gradients(const GradCheckOptions& opt) {
    constexpr double h = 1e-3, thr = 1e-3;
    Rng rng = Rng(opt.seed).fork("gradcheck/model");
    ModelState<double> m = init_model<double>(rng.next_u64(), 3);
    detail::jitter_biases(m, rng);
    const ImageBuffer img = detail::random_image(16, 16, 3, rng);
    DisparityMap w(16, 16);
    for (double& v : w.data) v = rng_normal(rng, 0.0, 1.0) / static_cast<double>(w.size());

    auto fwd = forward(m, img);
    backward(m, fwd.cache, w);
    const std::vector<double> analytic = m.grads;
    const auto coords = detail::sample_params(m, opt.model_samples, rng, false);
    bool injected = false;
    // fault hook: the first checked dec2 weight
    auto tamper = [&](std::size_t p) {
        if (!opt.inject_fault || injected || m.layer_of(p) != 4 || p >= m.layers[4].bias_offset) return false;
        return injected = true;
    };

    SuiteResult r{"model", "network backward 16x16", thr};
    detail::check_coords(
        r, coords, analytic,
        [&](std::size_t i, double d) {
            const double keep = m.params[i];
            m.params[i] = keep + d;
            const auto f = forward(m, img);
            m.params[i] = keep;
            detail::Probe p;
            for (std::size_t j = 0; j < w.size(); ++j) p.value += w.data[j] * f.disparity.data[j];
            detail::relu_signature(f.cache, p.signature);
            return p;
        },
        [&](std::size_t i) { return m.describe_param(i); }, h, 1e-8, tamper);
    return r;
}

/// d(total objective)/d(theta) for the training step on one weak/strong pair:
/// backward through both branches versus finite differences of the objective
/// with the detached terms (teacher, stop-grad weak target, SDR reference)
/// held at their unperturbed values.
inline SuiteResult check_pipeline_gradients(const GradCheckOptions& opt, ConsistencyMode mode, SdrParadigm paradigm,
                                            bool freeze_encoder) {
    constexpr double h = 1e-4, thr = 1e-3;
    Rng rng = Rng(opt.seed).fork("gradcheck/pipeline").fork(std::string(to_string(mode)) + "/" +
                                                             std::string(to_string(paradigm)));
    ModelState<double> student = init_model<double>(rng.next_u64(), 3);
    detail::jitter_biases(student, rng);
    ModelState<double> teacher = init_model<double>(rng.next_u64(), 3);
    detail::jitter_biases(teacher, rng);
    student.set_encoder_frozen(freeze_encoder);

    TrainConfig cfg;
    cfg.consistency_mode = mode;
    cfg.sdr = SdrConfig{DistanceMetric::euclidean, paradigm, 4};

    const ImageBuffer weak_img = detail::random_image(16, 16, 3, rng);
    ImageBuffer strong_img = weak_img;
    for (double& v : strong_img.data) v = clamp01(v * 0.7 + 0.2 * rng.next_unit());

    const DisparityMap teacher_pred = forward(teacher, weak_img).disparity;
    auto weak = forward(student, weak_img);
    auto strong = forward(student, strong_img);
    const DisparityMap weak0 = weak.disparity;
    const ObjectiveTerms terms = objective_terms(weak.disparity, strong.disparity, teacher_pred, cfg);
    std::vector<double> analytic(student.params.size(), 0.0);
    backward(student, strong.cache, terms.grad_strong, std::span<double>(analytic));
    backward(student, weak.cache, terms.grad_weak, std::span<double>(analytic));

    const LossWeights& w = cfg.lambda;
    auto objective = [&](const DisparityMap& pw, const DisparityMap& ps, std::vector<std::int8_t>& sig) {
        const DisparityMap& cons_target = mode == ConsistencyMode::both_branches ? pw : weak0;
        const DisparityMap& sdr_ref = paradigm == SdrParadigm::kd ? teacher_pred : weak0;
        detail::affine_signature(ps, cons_target, sig);
        detail::affine_signature(pw, teacher_pred, sig);
        detail::dense_sdr_signature(ps, cfg.sdr, sig);
        return w.consistency * affine_invariant_loss(ps, cons_target, false).value +
               w.distill * affine_invariant_loss(pw, teacher_pred, false).value +
               w.sdr * sdr_loss_dense(ps, sdr_ref, cfg.sdr).value;
    };

    const auto coords = detail::sample_params(student, opt.pipeline_samples, rng, true);
    SuiteResult r{"model",
                  "objective " + std::string(to_string(mode)) + "/" + std::string(to_string(paradigm)) +
                      (freeze_encoder ? " frozen-enc" : ""),
                  thr};
    detail::check_coords(
        r, coords, analytic,
        [&](std::size_t i, double d) {
            const double keep = student.params[i];
            student.params[i] = keep + d;
            const auto fw = forward(student, weak_img);
            const auto fs = forward(student, strong_img);
            student.params[i] = keep;
            detail::Probe p;
            p.value = objective(fw.disparity, fs.disparity, p.signature);
            detail::relu_signature(fw.cache, p.signature);
            detail::relu_signature(fs.cache, p.signature);
            return p;
        },
        [&](std::size_t i) { return student.describe_param(i); }, h, 1e-8);
    return r;
}

inline GradCheckReport run_gradcheck(const GradCheckOptions& opt) {
    GradCheckReport rep;
    for (auto& s : check_loss_gradients(opt.seed)) rep.suites.push_back(std::move(s));
    for (auto& s : check_sdr_gradients(opt.seed)) rep.suites.push_back(std::move(s));
    rep.suites.push_back(check_model_gradients(opt));
    rep.suites.push_back(check_pipeline_gradients(opt, ConsistencyMode::stop_grad_weak, SdrParadigm::kd, false));
    rep.suites.push_back(check_pipeline_gradients(opt, ConsistencyMode::both_branches, SdrParadigm::consistency, true));
    return rep;
}

inline void print_gradcheck(const GradCheckReport& rep, std::ostream& os) {
    char buf[256];
    for (const auto& s : rep.suites) {
        std::snprintf(buf, sizeof buf, "%-6s %-46s max_rel_err %.3e  (< %.0e)  checked %zu  skipped %zu  %s\n",
                      s.group.c_str(), s.name.c_str(), s.max_rel_error, s.threshold, s.checked, s.skipped,
                      s.passed() ? "ok" : "FAIL");
        os << buf;
    }
    for (const char* g : {"loss", "sdr", "model"}) {
        std::snprintf(buf, sizeof buf, "max relative error %-5s %.3e\n", g, rep.max_error(g));
        os << buf;
    }
}

}  // namespace acdk
