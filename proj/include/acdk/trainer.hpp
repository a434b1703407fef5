#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "acdk/corruption.hpp"
#include "acdk/datagen.hpp"
#include "acdk/losses.hpp"
#include "acdk/model.hpp"
#include "acdk/optimizer.hpp"
#include "acdk/parallel.hpp"
#include "acdk/sdr.hpp"

namespace acdk {

inline std::string_view to_string(ConsistencyMode m) {
    return m == ConsistencyMode::stop_grad_weak ? "stop_grad_weak" : "both_branches";
}

struct TrainConfig {
    LossWeights lambda;                // consistency, distill, sdr
    double lr = 1e-3;                  // toy-scale default; a pretrained ViT-S would use 5e-6
    double weight_decay = 0.0;
    int batch_size = 8;
    int epochs = 1;
    SchedulerConfig scheduler;
    SdrConfig sdr{DistanceMetric::euclidean, SdrParadigm::kd, 8};
    bool freeze_encoder = true;
    std::uint64_t seed = 0;
    ConsistencyMode consistency_mode = ConsistencyMode::stop_grad_weak;

    // weak-branch photometric jitter: brightness factor in [1 - j, 1 + j]
    double brightness_jitter = 0.05;
    // supervised stage on ground truth before the teacher is cloned
    int pretrain_steps = 0;
    double pretrain_lr = 1e-3;
    int input_channels = 3;

    void validate() const {
        lambda.validate();
        if (!(lr > 0.0)) throw InvalidArgument("lr must be > 0");
        if (!(pretrain_lr > 0.0)) throw InvalidArgument("pretrain_lr must be > 0");
        if (weight_decay < 0.0) throw InvalidArgument("weight_decay must be >= 0");
        if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
        if (epochs < 0) throw InvalidArgument("epochs must be >= 0");
        if (pretrain_steps < 0) throw InvalidArgument("pretrain_steps must be >= 0");
        if (sdr.patch_size < 1) throw InvalidArgument("sdr.patch_size must be >= 1");
        if (brightness_jitter < 0.0 || brightness_jitter >= 1.0) throw InvalidArgument("brightness_jitter must be in [0,1)");
        scheduler.validate();
    }
};

struct StepReport {
    long step = 0;
    int epoch = 0;
    double loss_consistency = 0.0;
    double loss_distill = 0.0;
    double loss_sdr = 0.0;
    double loss_total = 0.0;
    double grad_norm = 0.0;
    std::vector<std::vector<AppliedCorruption>> applied;

    nlohmann::json to_json() const {
        nlohmann::json kinds = nlohmann::json::array();
        for (const auto& per_image : applied) {
            nlohmann::json row = nlohmann::json::array();
            for (const auto& a : per_image) row.push_back({{"kind", std::string(to_string(a.kind))}, {"severity", a.severity}});
            kinds.push_back(std::move(row));
        }
        return {{"step", step},       {"epoch", epoch},          {"L_c", loss_consistency},
                {"L_kd", loss_distill}, {"L_s", loss_sdr},        {"L_total", loss_total},
                {"grad_norm", grad_norm}, {"applied", std::move(kinds)}};
    }
};

class NonFiniteLoss : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Branches

struct Branches {
    std::vector<ImageBuffer> weak;
    std::vector<ImageBuffer> strong;
    std::vector<bool> flipped;
    std::vector<std::vector<AppliedCorruption>> applied;
};

/// Weak view: random horizontal flip plus brightness jitter. Strong view: the
/// scheduled perturbation of the weak view, so both share one geometry.
inline void make_weak(const ImageBuffer& img, double jitter, Rng& rng, ImageBuffer& weak, bool& flipped) {
    flipped = rng.next_unit() < 0.5;
    weak = flipped ? flip_horizontal(img) : img;
    const double gain = rng_uniform(rng, 1.0 - jitter, 1.0 + jitter);
    if (gain != 1.0)
        for (double& v : weak.data) v = clamp01(v * gain);
}

inline Branches build_branches(std::span<const ImageBuffer> batch, const TrainConfig& cfg, Rng& rng) {
    if (batch.empty()) throw InvalidArgument("build_branches: empty batch");
    const Rng base(rng.next_u64());
    Branches b;
    b.weak.resize(batch.size());
    b.strong.resize(batch.size());
    b.flipped.resize(batch.size());
    b.applied.resize(batch.size());
    parallel_for(batch.size(), [&](std::size_t i) {
        Rng r = base.fork("branch", i);
        bool flipped = false;
        make_weak(batch[i], cfg.brightness_jitter, r, b.weak[i], flipped);
        b.flipped[i] = flipped;
        Rng pr = base.fork("perturb", i);
        ScheduledImage s = schedule_perturb(b.weak[i], cfg.scheduler, pr);
        b.strong[i] = std::move(s.image);
        b.applied[i] = std::move(s.applied);
    });
    return b;
}

// ---------------------------------------------------------------------------
// Steps

namespace detail {

inline void require_finite(double v, const char* what, std::size_t element) {
    if (!std::isfinite(v))
        throw NonFiniteLoss(std::string("non-finite ") + what + " on batch element " + std::to_string(element));
}

template <typename T>
double grad_norm(const ModelState<T>& m) {
    double s = 0.0;
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        if (m.frozen[l]) continue;
        const LayerSpec& spec = m.layers[l];
        for (std::size_t i = spec.weight_offset; i < spec.bias_offset + spec.out_channels; ++i)
            s += static_cast<double>(m.grads[i]) * m.grads[i];
    }
    return std::sqrt(s);
}

template <typename T>
void sum_in_order(ModelState<T>& m, const std::vector<std::vector<T>>& parts) {
    m.zero_grads();
    for (const auto& p : parts)
        for (std::size_t i = 0; i < p.size(); ++i) m.grads[i] += p[i];
}

}  // namespace detail

/// Losses and dense gradients for one element, with the weak/strong branch
/// predictions given. Reference maps carry no gradient.
struct ObjectiveTerms {
    LossValue consistency;
    LossValue distill;
    LossValue sdr;
    DisparityMap grad_strong;
    DisparityMap grad_weak;
    double total = 0.0;
};

inline ObjectiveTerms objective_terms(const DisparityMap& pred_weak, const DisparityMap& pred_strong,
                                      const DisparityMap& pred_teacher, const TrainConfig& cfg, double scale = 1.0) {
    ObjectiveTerms t;
    t.consistency = consistency_loss(pred_weak, pred_strong, cfg.consistency_mode);
    t.distill = kd_loss(pred_weak, pred_teacher);
    const DisparityMap& reference = cfg.sdr.paradigm == SdrParadigm::kd ? pred_teacher : pred_weak;
    t.sdr = sdr_loss_dense(pred_strong, reference, cfg.sdr);
    t.total = total_loss(t.consistency, t.distill, t.sdr, cfg.lambda).value;

    const LossWeights& w = cfg.lambda;
    t.grad_strong = DisparityMap(pred_strong.height, pred_strong.width, 0.0);
    t.grad_weak = DisparityMap(pred_weak.height, pred_weak.width, 0.0);
    for (std::size_t j = 0; j < t.grad_strong.size(); ++j) {
        t.grad_strong.data[j] = scale * (w.consistency * t.consistency.grad->data[j] + w.sdr * t.sdr.grad->data[j]);
        double gw = w.distill * t.distill.grad->data[j];
        if (t.consistency.grad_target) gw += w.consistency * t.consistency.grad_target->data[j];
        t.grad_weak.data[j] = scale * gw;
    }
    return t;
}

/// One fine-tuning step on a batch: student on weak and strong views, frozen
/// teacher on the weak view, weighted consistency + distillation + SDR loss,
/// batch-averaged gradients, AdamW update of the unfrozen layers.
inline StepReport train_step(DepthNet& student, const DepthNet& teacher, std::span<const ImageBuffer> batch,
                             const TrainConfig& cfg, Rng& rng) {
    const Branches br = build_branches(batch, cfg, rng);
    const std::size_t n = batch.size();
    const double inv_n = 1.0 / static_cast<double>(n);

    std::vector<std::vector<float>> grads(n);
    std::vector<ObjectiveTerms> terms(n);
    parallel_for(n, [&](std::size_t i) {
        auto weak = forward(student, br.weak[i]);
        auto strong = forward(student, br.strong[i]);
        const DisparityMap teacher_pred = forward(teacher, br.weak[i]).disparity;
        if (!weak.disparity.all_finite() || !strong.disparity.all_finite() || !teacher_pred.all_finite())
            throw NonFiniteLoss("non-finite prediction on batch element " + std::to_string(i));
        terms[i] = objective_terms(weak.disparity, strong.disparity, teacher_pred, cfg, inv_n);
        detail::require_finite(terms[i].total, "loss", i);
        grads[i].assign(student.params.size(), 0.0f);
        backward(student, strong.cache, terms[i].grad_strong, std::span<float>(grads[i]));
        backward(student, weak.cache, terms[i].grad_weak, std::span<float>(grads[i]));
    });

    detail::sum_in_order(student, grads);
    StepReport rep;
    for (const auto& t : terms) {
        rep.loss_consistency += t.consistency.value * inv_n;
        rep.loss_distill += t.distill.value * inv_n;
        rep.loss_sdr += t.sdr.value * inv_n;
        rep.loss_total += t.total * inv_n;
    }
    rep.grad_norm = detail::grad_norm(student);
    detail::require_finite(rep.grad_norm, "gradient norm", 0);
    rep.applied = br.applied;
    adamw_step(student, AdamWConfig{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
    return rep;
}

/// Supervised affine-invariant regression on ground truth (weak views only).
/// Returns the batch-mean loss before the update.
inline double pretrain_step(DepthNet& model, std::span<const Sample* const> batch, const TrainConfig& cfg, Rng& rng) {
    const std::size_t n = batch.size();
    const double inv_n = 1.0 / static_cast<double>(n);
    const Rng base(rng.next_u64());
    std::vector<std::vector<float>> grads(n);
    std::vector<double> losses(n);
    parallel_for(n, [&](std::size_t i) {
        const Sample& s = *batch[i];
        if (!s.gt) throw InvalidArgument("pretraining needs ground truth for " + s.name);
        Rng r = base.fork("branch", i);
        ImageBuffer weak;
        bool flipped = false;
        make_weak(s.image, cfg.brightness_jitter, r, weak, flipped);
        const DisparityMap gt = flipped ? flip_horizontal(*s.gt) : *s.gt;
        auto f = forward(model, weak);
        LossValue l = affine_invariant_loss(f.disparity, gt);
        detail::require_finite(l.value, "pretraining loss", i);
        losses[i] = l.value;
        for (double& g : l.grad->data) g *= inv_n;
        grads[i].assign(model.params.size(), 0.0f);
        backward(model, f.cache, *l.grad, std::span<float>(grads[i]));
    });
    detail::sum_in_order(model, grads);
    adamw_step(model, AdamWConfig{cfg.pretrain_lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
    return std::accumulate(losses.begin(), losses.end(), 0.0) * inv_n;
}

// ---------------------------------------------------------------------------
// Loops

/// Deterministic epoch order.
inline std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.next_u64() % i]);
    return idx;
}

/// Runs `steps` supervised steps cycling through shuffled epochs.
inline void pretrain(DepthNet& model, const std::vector<Sample>& data, int steps, const TrainConfig& cfg,
                     const std::function<void(long, double)>& on_step = {}) {
    if (data.empty()) throw InvalidArgument("pretrain: empty dataset");
    Rng rng = Rng(cfg.seed).fork("pretrain");
    std::vector<std::size_t> order;
    std::size_t pos = 0;
    for (long step = 0; step < steps; ++step) {
        std::vector<const Sample*> batch;
        while (batch.size() < static_cast<std::size_t>(cfg.batch_size)) {
            if (pos == order.size()) {
                order = shuffled_indices(data.size(), rng);
                pos = 0;
            }
            batch.push_back(&data[order[pos++]]);
            if (batch.size() == data.size()) break;
        }
        const double loss = pretrain_step(model, batch, cfg, rng);
        if (on_step) on_step(step, loss);
    }
}

/// Fine-tuning epochs; each epoch is ceil(|data| / N) steps. `on_epoch` is
/// called after every epoch (checkpointing).
inline std::vector<StepReport> finetune(DepthNet& student, const DepthNet& teacher, const std::vector<Sample>& data,
                                        const TrainConfig& cfg, const std::function<void(const StepReport&)>& on_step = {},
                                        const std::function<void(int)>& on_epoch = {}) {
    cfg.validate();
    if (data.empty()) throw InvalidArgument("finetune: empty dataset");
    student.set_encoder_frozen(cfg.freeze_encoder);
    Rng order_rng = Rng(cfg.seed).fork("shuffle");
    Rng step_rng = Rng(cfg.seed).fork("finetune");
    std::vector<StepReport> reports;
    long step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto order = shuffled_indices(data.size(), order_rng);
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<ImageBuffer> batch;
            for (std::size_t k = start; k < end; ++k) batch.push_back(data[order[k]].image);
            StepReport rep = train_step(student, teacher, batch, cfg, step_rng);
            rep.step = step++;
            rep.epoch = epoch;
            if (on_step) on_step(rep);
            reports.push_back(std::move(rep));
        }
        if (on_epoch) on_epoch(epoch);
    }
    return reports;
}

/// File-level pipeline: load data, initialize (and optionally pretrain) the
/// student, clone the frozen teacher, fine-tune, stream JSON-lines reports
/// to `log`, checkpoint after every epoch and at the end.
inline std::vector<StepReport> train(const TrainConfig& cfg, const std::filesystem::path& data_dir,
                                     const std::filesystem::path& out_ckpt, std::ostream* log = nullptr,
                                     std::ostream* progress = nullptr) {
    cfg.validate();
    const std::vector<Sample> data = load_dataset(data_dir);
    DepthNet student = init_model<float>(cfg.seed, cfg.input_channels);
    if (cfg.pretrain_steps > 0) {
        pretrain(student, data, cfg.pretrain_steps, cfg, [&](long step, double loss) {
            if (progress && (step % 100 == 0 || step + 1 == cfg.pretrain_steps))
                *progress << "pretrain step " << step << " loss " << loss << '\n';
        });
    }
    const DepthNet teacher = clone_frozen(student);
    auto reports = finetune(
        student, teacher, data, cfg,
        [&](const StepReport& r) {
            if (log) *log << r.to_json().dump() << '\n';
        },
        [&](int) { save_checkpoint(student, out_ckpt); });
    save_checkpoint(student, out_ckpt);
    return reports;
}

}  // namespace acdk
