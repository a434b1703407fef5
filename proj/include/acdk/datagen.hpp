#pragma once

// Synthetic orthographic scenes with analytic depth: a far-to-near ground
// ramp plus rectangles and disks at constant depth. Nearest surface wins.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "acdk/image.hpp"
#include "acdk/io.hpp"
#include "acdk/rng.hpp"

namespace acdk {

enum class ShapeKind { rectangle, disk };

struct Primitive {
    ShapeKind shape = ShapeKind::rectangle;
    double depth = 1.0;   // metres, [1, 20]
    double albedo = 0.5;  // [0.2, 1.0]
    std::array<double, 3> tint{1.0, 1.0, 1.0};
    double cx = 0, cy = 0;         // centre, pixels
    double half_w = 1, half_h = 1; // half extents (disk uses half_w as radius)

    bool covers(double x, double y) const {
        if (shape == ShapeKind::rectangle) return std::fabs(x - cx) <= half_w && std::fabs(y - cy) <= half_h;
        const double dx = x - cx, dy = y - cy;
        return dx * dx + dy * dy <= half_w * half_w;
    }
};

struct Scene {
    std::vector<Primitive> primitives;
    double background_far = 20.0;   // depth at the top row
    double background_near = 5.0;   // depth at the bottom row
    double background_albedo = 0.6;
    std::uint64_t texture_seed = 0;
};

inline constexpr double kTextureAmplitude = 0.05;
inline constexpr int kTextureCell = 8;

struct RenderedScene {
    ImageBuffer image;
    DisparityMap disparity;      // min-max normalized 1/depth
    DisparityMap raw_disparity;  // 1/depth before normalization
};

namespace detail {

/// Lattice value noise in [-1, 1], bilinearly interpolated.
inline DisparityMap value_noise(int size, int cell, std::uint64_t seed) {
    const int lattice = size / cell + 2;
    Rng r(seed);
    std::vector<double> grid(static_cast<std::size_t>(lattice) * lattice);
    for (double& v : grid) v = rng_uniform(r, -1.0, 1.0);
    DisparityMap out(size, size);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const double gy = static_cast<double>(y) / cell, gx = static_cast<double>(x) / cell;
            const int y0 = static_cast<int>(gy), x0 = static_cast<int>(gx);
            const double fy = gy - y0, fx = gx - x0;
            auto g = [&](int yy, int xx) { return grid[static_cast<std::size_t>(yy) * lattice + xx]; };
            out.at(y, x) = (1 - fy) * ((1 - fx) * g(y0, x0) + fx * g(y0, x0 + 1)) +
                           fy * ((1 - fx) * g(y0 + 1, x0) + fx * g(y0 + 1, x0 + 1));
        }
    }
    return out;
}

}  // namespace detail

inline Scene random_scene(int size, Rng& rng) {
    Scene s;
    s.background_albedo = rng_uniform(rng, 0.4, 0.8);
    s.texture_seed = rng.next_u64();
    const int count = rng_int(rng, 2, 6);
    for (int i = 0; i < count; ++i) {
        Primitive p;
        p.shape = rng_int(rng, 0, 1) == 0 ? ShapeKind::rectangle : ShapeKind::disk;
        p.depth = rng_uniform(rng, 1.0, 20.0);
        p.albedo = rng_uniform(rng, 0.2, 1.0);
        for (double& t : p.tint) t = rng_uniform(rng, 0.6, 1.0);
        p.cx = rng_uniform(rng, 0.0, size - 1.0);
        p.cy = rng_uniform(rng, 0.0, size - 1.0);
        p.half_w = rng_uniform(rng, size / 16.0, size / 4.0);
        p.half_h = rng_uniform(rng, size / 16.0, size / 4.0);
        s.primitives.push_back(p);
    }
    return s;
}

/// Shading = albedo * (0.5 + 0.5 / depth) with depth in metres (nearest
/// surface is 1 m), plus a shared value-noise texture.
inline RenderedScene render(const Scene& scene, int size) {
    if (size <= 0 || size % 8 != 0) throw InvalidArgument("render: size must be a positive multiple of 8");
    RenderedScene out{ImageBuffer(size, size, 3), DisparityMap(size, size), DisparityMap(size, size)};
    const DisparityMap texture = detail::value_noise(size, kTextureCell, scene.texture_seed);
    for (int y = 0; y < size; ++y) {
        const double ty = size > 1 ? static_cast<double>(y) / (size - 1) : 0.0;
        const double bg_depth = scene.background_far + (scene.background_near - scene.background_far) * ty;
        for (int x = 0; x < size; ++x) {
            double depth = bg_depth;
            double albedo = scene.background_albedo;
            std::array<double, 3> tint{1.0, 1.0, 1.0};
            for (const Primitive& p : scene.primitives) {
                if (p.depth < depth && p.covers(x, y)) {
                    depth = p.depth;
                    albedo = p.albedo;
                    tint = p.tint;
                }
            }
            out.raw_disparity.at(y, x) = 1.0 / depth;
            const double shade = albedo * (0.5 + 0.5 / depth);
            for (int c = 0; c < 3; ++c)
                out.image.at(y, x, c) = clamp01(shade * tint[c] + kTextureAmplitude * texture.at(y, x));
        }
    }
    const auto [lo, hi] = std::minmax_element(out.raw_disparity.data.begin(), out.raw_disparity.data.end());
    const double mn = *lo, range = *hi - *lo;
    for (std::size_t i = 0; i < out.disparity.size(); ++i)
        out.disparity.data[i] = range > 0.0 ? (out.raw_disparity.data[i] - mn) / range : 0.0;
    return out;
}

/// An image with optional ground truth, as loaded from a dataset directory.
struct Sample {
    std::string name;
    ImageBuffer image;
    std::optional<DisparityMap> gt;
};

inline std::vector<Sample> generate_samples(int count, int size, std::uint64_t seed) {
    if (count < 1) throw InvalidArgument("generate_samples: count must be >= 1");
    const Rng root = Rng(seed).fork("datagen");
    std::vector<Sample> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        Rng r = root.fork("scene", static_cast<std::uint64_t>(i));
        RenderedScene rs = render(random_scene(size, r), size);
        char name[32];
        std::snprintf(name, sizeof name, "scene_%05d", i);
        out.push_back({name, std::move(rs.image), std::move(rs.disparity)});
    }
    return out;
}

inline constexpr const char* kManifestName = "manifest.jsonl";

/// Writes <name>.ppm, <name>.pfm and manifest.jsonl lines {image, gt, seed}.
inline std::vector<nlohmann::json> generate_dataset(int count, int size, std::uint64_t seed,
                                                    const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    const std::vector<Sample> samples = generate_samples(count, size, seed);
    std::vector<nlohmann::json> manifest;
    std::ofstream mf(out_dir / kManifestName, std::ios::trunc);
    if (!mf) throw Error("cannot write manifest in " + out_dir.string());
    for (const Sample& s : samples) {
        save_image(s.image, out_dir / (s.name + ".ppm"));
        save_pfm(*s.gt, out_dir / (s.name + ".pfm"));
        nlohmann::json row{{"image", s.name + ".ppm"}, {"gt", s.name + ".pfm"}, {"seed", seed}};
        mf << row.dump() << '\n';
        manifest.push_back(std::move(row));
    }
    return manifest;
}

/// Loads samples listed in manifest.jsonl, or every .ppm/.pgm in the
/// directory (sorted, no ground truth) when there is no manifest.
inline std::vector<Sample> load_dataset(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw Error("dataset directory not found: " + dir.string());
    std::vector<Sample> out;
    const fs::path manifest = dir / kManifestName;
    if (fs::exists(manifest)) {
        std::ifstream in(manifest);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            nlohmann::json row;
            try {
                row = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception& e) {
                throw Error(manifest.string() + ":" + std::to_string(lineno) + ": " + e.what());
            }
            const std::string image = row.at("image").get<std::string>();
            Sample s{fs::path(image).stem().string(), load_image(dir / image), std::nullopt};
            if (row.contains("gt") && !row["gt"].is_null()) s.gt = load_pfm(dir / row["gt"].get<std::string>());
            out.push_back(std::move(s));
        }
    } else {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(dir)) {
            const auto ext = e.path().extension();
            if (ext == ".ppm" || ext == ".pgm") files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) out.push_back({f.stem().string(), load_image(f), std::nullopt});
    }
    if (out.empty()) throw Error("dataset is empty: " + dir.string());
    return out;
}

}  // namespace acdk
