#pragma once

#include <cmath>

#include "acdk/model.hpp"

namespace acdk {

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

/// One decoupled-weight-decay Adam update of every unfrozen layer from the
/// accumulated gradients. Frozen layers, including their moments, are left
/// untouched.
template <typename T>
void adamw_step(ModelState<T>& m, const AdamWConfig& cfg) {
    ++m.optimizer_steps;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(m.optimizer_steps));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(m.optimizer_steps));
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        if (m.frozen[l]) continue;
        const LayerSpec& s = m.layers[l];
        const std::size_t begin = s.weight_offset;
        const std::size_t end = s.bias_offset + static_cast<std::size_t>(s.out_channels);
        for (std::size_t i = begin; i < end; ++i) {
            const double g = m.grads[i];
            const double m1 = cfg.beta1 * m.moment1[i] + (1.0 - cfg.beta1) * g;
            const double m2 = cfg.beta2 * m.moment2[i] + (1.0 - cfg.beta2) * g * g;
            m.moment1[i] = static_cast<T>(m1);
            m.moment2[i] = static_cast<T>(m2);
            const double update = (m1 / bc1) / (std::sqrt(m2 / bc2) + cfg.eps) + cfg.weight_decay * m.params[i];
            m.params[i] = static_cast<T>(m.params[i] - cfg.lr * update);
        }
    }
    ++m.version;
}

}  // namespace acdk
