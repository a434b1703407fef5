#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace acdk {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class ShapeMismatch : public Error {
public:
    using Error::Error;
};

/// Raised when a map has zero mean absolute deviation, so it cannot be
/// scale-normalized.
class DegenerateScale : public Error {
public:
    using Error::Error;
};

inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

/// H x W x C intensities in [0,1], interleaved row-major (HWC).
struct ImageBuffer {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> data;

    ImageBuffer() = default;

    ImageBuffer(int h, int w, int c, double fill = 0.0) : height(h), width(w), channels(c) {
        check_dims();
        data.assign(static_cast<std::size_t>(h) * w * c, fill);
    }

    ImageBuffer(int h, int w, int c, std::vector<double> values)
        : height(h), width(w), channels(c), data(std::move(values)) {
        check_dims();
        if (data.size() != static_cast<std::size_t>(h) * w * c)
            throw ShapeMismatch("ImageBuffer: data length does not match dimensions");
    }

    std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }
    std::size_t size() const { return data.size(); }

    std::size_t index(int y, int x, int c) const {
        return (static_cast<std::size_t>(y) * width + x) * channels + c;
    }
    double& at(int y, int x, int c) { return data[index(y, x, c)]; }
    double at(int y, int x, int c) const { return data[index(y, x, c)]; }

    bool same_shape(const ImageBuffer& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }

    bool operator==(const ImageBuffer&) const = default;

private:
    void check_dims() const {
        if (height <= 0 || width <= 0) throw InvalidArgument("ImageBuffer: dimensions must be positive");
        if (channels != 1 && channels != 3) throw InvalidArgument("ImageBuffer: channels must be 1 or 3");
    }
};

/// Dense non-negative disparity field, row-major.
struct DisparityMap {
    int height = 0;
    int width = 0;
    std::vector<double> data;

    DisparityMap() = default;

    DisparityMap(int h, int w, double fill = 0.0) : height(h), width(w) {
        check_dims();
        data.assign(static_cast<std::size_t>(h) * w, fill);
    }

    DisparityMap(int h, int w, std::vector<double> values) : height(h), width(w), data(std::move(values)) {
        check_dims();
        if (data.size() != static_cast<std::size_t>(h) * w)
            throw ShapeMismatch("DisparityMap: data length does not match dimensions");
    }

    std::size_t size() const { return data.size(); }
    double& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
    double at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }

    bool same_shape(const DisparityMap& o) const { return height == o.height && width == o.width; }

    bool all_finite() const {
        return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
    }

    bool operator==(const DisparityMap&) const = default;

private:
    void check_dims() const {
        if (height <= 0 || width <= 0) throw InvalidArgument("DisparityMap: dimensions must be positive");
    }
};

inline void require_same_shape(const DisparityMap& a, const DisparityMap& b, const char* what) {
    if (!a.same_shape(b))
        throw ShapeMismatch(std::string(what) + ": shape mismatch (" + std::to_string(a.height) + "x" +
                            std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                            std::to_string(b.width) + ")");
}

inline DisparityMap flip_horizontal(const DisparityMap& d) {
    DisparityMap out(d.height, d.width);
    for (int y = 0; y < d.height; ++y)
        for (int x = 0; x < d.width; ++x) out.at(y, x) = d.at(y, d.width - 1 - x);
    return out;
}

inline ImageBuffer flip_horizontal(const ImageBuffer& img) {
    ImageBuffer out(img.height, img.width, img.channels);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
    return out;
}

}  // namespace acdk
