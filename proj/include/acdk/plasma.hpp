#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "acdk/image.hpp"
#include "acdk/rng.hpp"

namespace acdk {

/// Square field of side 2^k + 1 produced by midpoint displacement.
struct PlasmaField {
    int side = 0;
    std::vector<double> values;

    double& at(int y, int x) { return values[static_cast<std::size_t>(y) * side + x]; }
    double at(int y, int x) const { return values[static_cast<std::size_t>(y) * side + x]; }
};

/// Smallest 2^k + 1 that is >= extent.
inline int plasma_side_for(int extent) {
    int side = 2;
    while (side + 1 < extent) side *= 2;
    return side + 1;
}

/// Diamond-Square. Displacements are uniform in [-amp, amp]; amp starts at 1
/// and is multiplied by `roughness_decay` after each octave, so a smaller
/// decay keeps less fine detail.
inline PlasmaField diamond_square(int side, double roughness_decay, Rng& rng) {
    if (side < 3 || ((side - 1) & (side - 2)) != 0)
        throw InvalidArgument("diamond_square: side must be 2^k + 1 with k >= 1");
    PlasmaField f{side, std::vector<double>(static_cast<std::size_t>(side) * side, 0.0)};
    double amp = 1.0;
    const int last = side - 1;
    f.at(0, 0) = rng_uniform(rng, -amp, amp);
    f.at(0, last) = rng_uniform(rng, -amp, amp);
    f.at(last, 0) = rng_uniform(rng, -amp, amp);
    f.at(last, last) = rng_uniform(rng, -amp, amp);

    for (int step = last; step > 1; step /= 2) {
        const int half = step / 2;
        // diamond: square centres
        for (int y = 0; y < last; y += step) {
            for (int x = 0; x < last; x += step) {
                const double avg =
                    (f.at(y, x) + f.at(y, x + step) + f.at(y + step, x) + f.at(y + step, x + step)) / 4.0;
                f.at(y + half, x + half) = avg + rng_uniform(rng, -amp, amp);
            }
        }
        // square: edge midpoints, averaging the in-bounds neighbours
        for (int y = 0; y <= last; y += half) {
            for (int x = (y / half) % 2 == 0 ? half : 0; x <= last; x += step) {
                double sum = 0.0;
                int n = 0;
                if (y - half >= 0) { sum += f.at(y - half, x); ++n; }
                if (y + half <= last) { sum += f.at(y + half, x); ++n; }
                if (x - half >= 0) { sum += f.at(y, x - half); ++n; }
                if (x + half <= last) { sum += f.at(y, x + half); ++n; }
                f.at(y, x) = sum / n + rng_uniform(rng, -amp, amp);
            }
        }
        amp *= roughness_decay;
    }
    return f;
}

/// Top-left H x W crop, min-max normalized to [0,1]. A constant crop maps to 0.
inline DisparityMap crop_normalized(const PlasmaField& f, int height, int width) {
    if (height > f.side || width > f.side) throw InvalidArgument("crop_normalized: crop larger than field");
    DisparityMap out(height, width);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) out.at(y, x) = f.at(y, x);
    const auto [lo, hi] = std::minmax_element(out.data.begin(), out.data.end());
    const double mn = *lo;
    const double range = *hi - *lo;
    for (double& v : out.data) v = range > 0.0 ? (v - mn) / range : 0.0;
    return out;
}

}  // namespace acdk
