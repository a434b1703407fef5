#pragma once

// Per-severity calibration for every corruption. Index 0 is severity 1.
// Retune here; nothing else hard-codes these values.

#include <array>

namespace acdk::tables {

inline constexpr std::array<double, 5> kDarkGamma{1.4, 1.8, 2.2, 2.6, 3.0};
inline constexpr std::array<double, 5> kDarkPhotons{200, 120, 80, 50, 30};
inline constexpr std::array<double, 5> kDarkReadNoise{0.01, 0.02, 0.03, 0.04, 0.05};

inline constexpr std::array<double, 5> kFogRoughnessDecay{0.75, 0.7, 0.65, 0.6, 0.55};
inline constexpr std::array<double, 5> kFogStrength{0.3, 0.4, 0.5, 0.6, 0.7};

inline constexpr std::array<double, 5> kSnowMean{0.1, 0.15, 0.2, 0.25, 0.3};
inline constexpr double kSnowSigma = 0.3;
inline constexpr double kSnowExponent = 1.5;
inline constexpr std::array<int, 5> kSnowBlurRadius{4, 6, 8, 10, 12};
inline constexpr double kSnowAngleLo = -135.0;
inline constexpr double kSnowAngleHi = -45.0;

inline constexpr std::array<int, 5> kMotionRadius{3, 5, 7, 9, 12};
inline constexpr double kMotionAngleLo = -45.0;
inline constexpr double kMotionAngleHi = 45.0;

inline constexpr std::array<int, 5> kZoomLayers{5, 8, 11, 14, 17};
inline constexpr double kZoomStep = 0.01;

inline constexpr std::array<double, 5> kContrastCoeff{0.4, 0.3, 0.2, 0.1, 0.05};

inline constexpr std::array<double, 5> kGaussianNoiseSigma{0.04, 0.06, 0.08, 0.09, 0.10};

inline constexpr double kDefaultBlurProbability = 0.1;
inline constexpr double kDefaultWeatherProbability = 0.2;

}  // namespace acdk::tables
