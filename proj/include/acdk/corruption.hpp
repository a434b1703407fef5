#pragma once

#include <algorithm>
#include <array>
#include <numbers>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "acdk/image.hpp"
#include "acdk/plasma.hpp"
#include "acdk/rng.hpp"
#include "acdk/severity_tables.hpp"

namespace acdk {

enum class CorruptionKind { dark, fog, snow, motion_blur, zoom_blur, contrast, gaussian_noise };

inline constexpr std::array<CorruptionKind, 7> kAllCorruptions{
    CorruptionKind::dark,     CorruptionKind::fog,      CorruptionKind::snow,          CorruptionKind::motion_blur,
    CorruptionKind::zoom_blur, CorruptionKind::contrast, CorruptionKind::gaussian_noise};

inline std::string_view to_string(CorruptionKind k) {
    switch (k) {
        case CorruptionKind::dark: return "dark";
        case CorruptionKind::fog: return "fog";
        case CorruptionKind::snow: return "snow";
        case CorruptionKind::motion_blur: return "motion_blur";
        case CorruptionKind::zoom_blur: return "zoom_blur";
        case CorruptionKind::contrast: return "contrast";
        case CorruptionKind::gaussian_noise: return "gaussian_noise";
    }
    return "?";
}

inline std::optional<CorruptionKind> parse_corruption(std::string_view tag) {
    for (auto k : kAllCorruptions)
        if (to_string(k) == tag) return k;
    if (tag == "motion") return CorruptionKind::motion_blur;
    if (tag == "zoom") return CorruptionKind::zoom_blur;
    if (tag == "noise") return CorruptionKind::gaussian_noise;
    return std::nullopt;
}

class Severity {
public:
    explicit Severity(int level) : level_(level) {
        if (level < 1 || level > 5) throw InvalidArgument("severity must be in 1..5, got " + std::to_string(level));
    }
    int level() const { return level_; }
    std::size_t index() const { return static_cast<std::size_t>(level_ - 1); }
    bool operator==(const Severity&) const = default;

private:
    int level_;
};

// ---------------------------------------------------------------------------
// Kernels and resampling

/// Dense (2r+1) x (2r+1) convolution kernel, row-major.
struct Kernel2D {
    int radius = 0;
    std::vector<double> weights;

    int side() const { return 2 * radius + 1; }
    double at(int ky, int kx) const { return weights[static_cast<std::size_t>(ky) * side() + kx]; }
    double sum() const {
        double s = 0.0;
        for (double w : weights) s += w;
        return s;
    }
};

/// Gaussian-weighted taps at t = -r..r placed along (cos, sin) of the angle
/// (rows grow downward) and splatted bilinearly, normalized to sum 1.
inline Kernel2D motion_blur_kernel(double angle_deg, int radius, double sigma) {
    if (radius < 1) throw InvalidArgument("motion_blur_kernel: radius must be >= 1");
    if (!(sigma > 0.0)) throw InvalidArgument("motion_blur_kernel: sigma must be > 0");
    Kernel2D k{radius, std::vector<double>(static_cast<std::size_t>(2 * radius + 1) * (2 * radius + 1), 0.0)};
    const double theta = angle_deg * std::numbers::pi / 180.0;
    const double dx = std::cos(theta);
    const double dy = std::sin(theta);
    const int side = k.side();
    auto snap = [](double v) {
        const double r = std::round(v);
        return std::fabs(v - r) < 1e-9 ? r : v;
    };
    for (int t = -radius; t <= radius; ++t) {
        const double w = std::exp(-static_cast<double>(t) * t / (2.0 * sigma * sigma));
        const double px = snap(radius + t * dx);
        const double py = snap(radius + t * dy);
        const int x0 = static_cast<int>(std::floor(px));
        const int y0 = static_cast<int>(std::floor(py));
        const double fx = px - x0;
        const double fy = py - y0;
        const double share[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
        const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
        const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
        for (int i = 0; i < 4; ++i) {
            if (share[i] == 0.0) continue;
            if (xs[i] < 0 || xs[i] >= side || ys[i] < 0 || ys[i] >= side) continue;
            k.weights[static_cast<std::size_t>(ys[i]) * side + xs[i]] += w * share[i];
        }
    }
    const double total = k.sum();
    for (double& w : k.weights) w /= total;
    return k;
}

/// Correlation with edge-replicate padding; only non-zero taps are visited.
inline ImageBuffer convolve_replicate(const ImageBuffer& img, const Kernel2D& k) {
    struct Tap {
        int dy, dx;
        double w;
    };
    std::vector<Tap> taps;
    for (int ky = 0; ky < k.side(); ++ky)
        for (int kx = 0; kx < k.side(); ++kx)
            if (k.at(ky, kx) != 0.0) taps.push_back({ky - k.radius, kx - k.radius, k.at(ky, kx)});

    ImageBuffer out(img.height, img.width, img.channels);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < img.channels; ++c) {
                double acc = 0.0;
                for (const Tap& t : taps) {
                    const int sy = std::clamp(y + t.dy, 0, img.height - 1);
                    const int sx = std::clamp(x + t.dx, 0, img.width - 1);
                    acc += t.w * img.at(sy, sx, c);
                }
                out.at(y, x, c) = acc;
            }
        }
    }
    return out;
}

/// Bilinear sample at fractional (y, x), clamping to the border.
inline double sample_bilinear(const ImageBuffer& img, double y, double x, int c) {
    y = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
    x = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
    const int y0 = static_cast<int>(std::floor(y));
    const int x0 = static_cast<int>(std::floor(x));
    const int y1 = std::min(y0 + 1, img.height - 1);
    const int x1 = std::min(x0 + 1, img.width - 1);
    const double fy = y - y0;
    const double fx = x - x0;
    return (1 - fy) * ((1 - fx) * img.at(y0, x0, c) + fx * img.at(y0, x1, c)) +
           fy * ((1 - fx) * img.at(y1, x0, c) + fx * img.at(y1, x1, c));
}

namespace detail {

inline ImageBuffer clamped(ImageBuffer img) {
    for (double& v : img.data) v = clamp01(v);
    return img;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Parameterized corruptions. Each `apply_*` has an overload taking explicit
// parameters (used for overrides in tests) and one taking a Severity.

struct DarkParams {
    double gamma;
    double photons;     // Poisson photon budget at intensity 1
    double read_noise;  // std of additive Gaussian read noise

    static DarkParams at(Severity s) {
        return {tables::kDarkGamma[s.index()], tables::kDarkPhotons[s.index()], tables::kDarkReadNoise[s.index()]};
    }
};

/// Gamma darkening, Poisson shot noise on the darkened signal, Gaussian
/// read noise, clamp.
inline ImageBuffer apply_dark(const ImageBuffer& img, const DarkParams& p, Rng& rng) {
    ImageBuffer out = img;
    for (double& v : out.data) {
        const double signal = std::pow(v, p.gamma);
        const double shot =
            p.photons > 0.0 ? static_cast<double>(rng_poisson(rng, p.photons * signal)) / p.photons : signal;
        v = clamp01(rng_normal(rng, shot, p.read_noise));
    }
    return out;
}
inline ImageBuffer apply_dark(const ImageBuffer& img, Severity s, Rng& rng) {
    return apply_dark(img, DarkParams::at(s), rng);
}

struct FogParams {
    double roughness_decay;
    double strength;  // alpha of the blend toward white

    static FogParams at(Severity s) {
        return {tables::kFogRoughnessDecay[s.index()], tables::kFogStrength[s.index()]};
    }
};

inline DisparityMap fog_field(int height, int width, double roughness_decay, Rng& rng) {
    const int side = plasma_side_for(std::max(height, width));
    return crop_normalized(diamond_square(side, roughness_decay, rng), height, width);
}

inline ImageBuffer apply_fog(const ImageBuffer& img, const FogParams& p, Rng& rng) {
    const DisparityMap field = fog_field(img.height, img.width, p.roughness_decay, rng);
    ImageBuffer out = img;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const double a = p.strength * field.at(y, x);
            for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = clamp01(img.at(y, x, c) * (1.0 - a) + a);
        }
    }
    return out;
}
inline ImageBuffer apply_fog(const ImageBuffer& img, Severity s, Rng& rng) {
    return apply_fog(img, FogParams::at(s), rng);
}

struct SnowParams {
    double mean;
    double sigma;
    double exponent;
    int blur_radius;
    double angle_lo;
    double angle_hi;

    static SnowParams at(Severity s) {
        return {tables::kSnowMean[s.index()], tables::kSnowSigma,      tables::kSnowExponent,
                tables::kSnowBlurRadius[s.index()], tables::kSnowAngleLo, tables::kSnowAngleHi};
    }
};

/// Gaussian field -> clamp and power to sparsify -> streak blur -> lighten.
inline ImageBuffer apply_snow(const ImageBuffer& img, const SnowParams& p, Rng& rng) {
    ImageBuffer flakes(img.height, img.width, 1);
    for (double& v : flakes.data) v = std::pow(clamp01(rng_normal(rng, p.mean, p.sigma)), p.exponent);
    const double angle = rng_uniform(rng, p.angle_lo, p.angle_hi);
    const Kernel2D k = motion_blur_kernel(angle, p.blur_radius, p.blur_radius / 2.0);
    const ImageBuffer streaks = convolve_replicate(flakes, k);
    ImageBuffer out = img;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c)
                out.at(y, x, c) = clamp01(std::max(img.at(y, x, c), streaks.at(y, x, 0)));
    return out;
}
inline ImageBuffer apply_snow(const ImageBuffer& img, Severity s, Rng& rng) {
    return apply_snow(img, SnowParams::at(s), rng);
}

struct MotionBlurParams {
    int radius;
    double sigma;
    double angle_lo;
    double angle_hi;

    static MotionBlurParams at(Severity s) {
        const int r = tables::kMotionRadius[s.index()];
        return {r, r / 2.0, tables::kMotionAngleLo, tables::kMotionAngleHi};
    }
};

inline ImageBuffer apply_motion_blur(const ImageBuffer& img, const MotionBlurParams& p, Rng& rng) {
    const double angle = rng_uniform(rng, p.angle_lo, p.angle_hi);
    return detail::clamped(convolve_replicate(img, motion_blur_kernel(angle, p.radius, p.sigma)));
}
inline ImageBuffer apply_motion_blur(const ImageBuffer& img, Severity s, Rng& rng) {
    return apply_motion_blur(img, MotionBlurParams::at(s), rng);
}

struct ZoomBlurParams {
    int layers;
    double step;

    static ZoomBlurParams at(Severity s) { return {tables::kZoomLayers[s.index()], tables::kZoomStep}; }
};

/// Equal-weight average of layers zoomed about the image centre by
/// 1, 1+step, ..., 1+(layers-1)*step. Deterministic; the Rng is unused.
inline ImageBuffer apply_zoom_blur(const ImageBuffer& img, const ZoomBlurParams& p, Rng& /*rng*/) {
    if (p.layers < 1) throw InvalidArgument("apply_zoom_blur: need at least one layer");
    const double cy = (img.height - 1) / 2.0;
    const double cx = (img.width - 1) / 2.0;
    ImageBuffer acc(img.height, img.width, img.channels, 0.0);
    for (int l = 0; l < p.layers; ++l) {
        const double zoom = 1.0 + l * p.step;
        for (int y = 0; y < img.height; ++y) {
            const double sy = cy + (y - cy) / zoom;
            for (int x = 0; x < img.width; ++x) {
                const double sx = cx + (x - cx) / zoom;
                for (int c = 0; c < img.channels; ++c) acc.at(y, x, c) += sample_bilinear(img, sy, sx, c);
            }
        }
    }
    for (double& v : acc.data) v = clamp01(v / p.layers);
    return acc;
}
inline ImageBuffer apply_zoom_blur(const ImageBuffer& img, Severity s, Rng& rng) {
    return apply_zoom_blur(img, ZoomBlurParams::at(s), rng);
}

struct ContrastParams {
    double coeff;

    static ContrastParams at(Severity s) { return {tables::kContrastCoeff[s.index()]}; }
};

inline std::vector<double> channel_means(const ImageBuffer& img) {
    std::vector<double> mean(img.channels, 0.0);
    for (std::size_t i = 0; i < img.size(); ++i) mean[i % img.channels] += img.data[i];
    for (double& m : mean) m /= static_cast<double>(img.pixels());
    return mean;
}

inline ImageBuffer apply_contrast(const ImageBuffer& img, const ContrastParams& p, Rng& /*rng*/) {
    const std::vector<double> mean = channel_means(img);
    ImageBuffer out = img;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double mu = mean[i % img.channels];
        out.data[i] = clamp01(mu + p.coeff * (img.data[i] - mu));
    }
    return out;
}
inline ImageBuffer apply_contrast(const ImageBuffer& img, Severity s, Rng& rng) {
    return apply_contrast(img, ContrastParams::at(s), rng);
}

struct GaussianNoiseParams {
    double sigma;

    static GaussianNoiseParams at(Severity s) { return {tables::kGaussianNoiseSigma[s.index()]}; }
};

inline ImageBuffer apply_gaussian_noise(const ImageBuffer& img, const GaussianNoiseParams& p, Rng& rng) {
    ImageBuffer out = img;
    for (double& v : out.data) v = clamp01(v + rng_normal(rng, 0.0, p.sigma));
    return out;
}
inline ImageBuffer apply_gaussian_noise(const ImageBuffer& img, Severity s, Rng& rng) {
    return apply_gaussian_noise(img, GaussianNoiseParams::at(s), rng);
}

inline ImageBuffer apply_corruption(CorruptionKind kind, const ImageBuffer& img, Severity s, Rng& rng) {
    switch (kind) {
        case CorruptionKind::dark: return apply_dark(img, s, rng);
        case CorruptionKind::fog: return apply_fog(img, s, rng);
        case CorruptionKind::snow: return apply_snow(img, s, rng);
        case CorruptionKind::motion_blur: return apply_motion_blur(img, s, rng);
        case CorruptionKind::zoom_blur: return apply_zoom_blur(img, s, rng);
        case CorruptionKind::contrast: return apply_contrast(img, s, rng);
        case CorruptionKind::gaussian_noise: return apply_gaussian_noise(img, s, rng);
    }
    throw InvalidArgument("unknown corruption kind");
}

// ---------------------------------------------------------------------------
// Scheduler

struct SchedulerConfig {
    double p_blur = tables::kDefaultBlurProbability;
    double p_weather = tables::kDefaultWeatherProbability;
    bool apply_dark = true;

    void validate() const {
        if (!(p_blur >= 0.0 && p_blur <= 1.0) || !(p_weather >= 0.0 && p_weather <= 1.0))
            throw InvalidArgument("SchedulerConfig: probabilities must lie in [0,1]");
        if (p_blur + p_weather > 1.0 + 1e-12)
            throw InvalidArgument("SchedulerConfig: p_blur + p_weather must not exceed 1");
    }

    static SchedulerConfig disabled() { return {0.0, 0.0, false}; }
};

struct AppliedCorruption {
    CorruptionKind kind;
    int severity;
    bool operator==(const AppliedCorruption&) const = default;
};

struct ScheduledImage {
    ImageBuffer image;
    std::vector<AppliedCorruption> applied;
};

/// Darkness always (when enabled), then at most one of {blur, weather}:
/// u < p_blur picks motion or zoom blur, p_blur <= u < p_blur + p_weather
/// picks one of fog/snow/contrast. Severities are uniform in 1..5.
inline ScheduledImage schedule_perturb(const ImageBuffer& img, const SchedulerConfig& cfg, Rng& rng) {
    cfg.validate();
    ScheduledImage result{img, {}};
    auto apply = [&](CorruptionKind kind) {
        const int level = rng_int(rng, 1, 5);
        result.image = apply_corruption(kind, result.image, Severity(level), rng);
        result.applied.push_back({kind, level});
    };
    if (cfg.apply_dark) apply(CorruptionKind::dark);
    const double u = rng.next_unit();
    if (u < cfg.p_blur) {
        apply(rng_int(rng, 0, 1) == 0 ? CorruptionKind::motion_blur : CorruptionKind::zoom_blur);
    } else if (u < cfg.p_blur + cfg.p_weather) {
        constexpr std::array<CorruptionKind, 3> weather{CorruptionKind::fog, CorruptionKind::snow,
                                                        CorruptionKind::contrast};
        apply(weather[static_cast<std::size_t>(rng_int(rng, 0, 2))]);
    }
    return result;
}

inline bool is_blur(CorruptionKind k) { return k == CorruptionKind::motion_blur || k == CorruptionKind::zoom_blur; }
inline bool is_weather(CorruptionKind k) {
    return k == CorruptionKind::fog || k == CorruptionKind::snow || k == CorruptionKind::contrast;
}

}  // namespace acdk
