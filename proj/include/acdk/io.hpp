#pragma once

// Binary PGM (P5) / PPM (P6) at maxval 255, and single-channel PFM ("Pf").

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "acdk/image.hpp"

namespace acdk {

class ImageIoError : public Error {
public:
    enum class Code { MissingFile, MalformedHeader, UnsupportedMaxval, TruncatedPayload, Unwritable, NonFinite };

    ImageIoError(Code code, const std::string& msg) : Error(msg), code_(code) {}
    Code code() const { return code_; }

private:
    Code code_;
};

namespace detail {

inline std::vector<unsigned char> read_all(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ImageIoError(ImageIoError::Code::MissingFile, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_all(const std::filesystem::path& path, const std::string& header,
                      const std::vector<unsigned char>& payload) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ImageIoError(ImageIoError::Code::Unwritable, "cannot write " + path.string());
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
    if (!out) throw ImageIoError(ImageIoError::Code::Unwritable, "write failed for " + path.string());
}

// Whitespace-separated header tokens with '#' comments. After the last
// token exactly one whitespace byte separates header from payload.
class HeaderReader {
public:
    HeaderReader(const std::vector<unsigned char>& bytes, std::string path) : bytes_(bytes), path_(std::move(path)) {}

    std::string token() {
        for (;;) {
            while (pos_ < bytes_.size() && std::isspace(bytes_[pos_])) ++pos_;
            if (pos_ < bytes_.size() && bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
                continue;
            }
            break;
        }
        std::string tok;
        while (pos_ < bytes_.size() && !std::isspace(bytes_[pos_])) tok.push_back(static_cast<char>(bytes_[pos_++]));
        if (tok.empty()) fail("unexpected end of header");
        return tok;
    }

    long integer() {
        const std::string tok = token();
        char* end = nullptr;
        const long v = std::strtol(tok.c_str(), &end, 10);
        if (end != tok.c_str() + tok.size()) fail("expected integer, got '" + tok + "'");
        return v;
    }

    double real() {
        const std::string tok = token();
        char* end = nullptr;
        const double v = std::strtod(tok.c_str(), &end);
        if (end != tok.c_str() + tok.size()) fail("expected number, got '" + tok + "'");
        return v;
    }

    std::size_t payload_offset() {
        if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) fail("missing separator before payload");
        return pos_ + 1;
    }

    [[noreturn]] void fail(const std::string& why) const {
        throw ImageIoError(ImageIoError::Code::MalformedHeader, path_ + ": " + why);
    }

private:
    const std::vector<unsigned char>& bytes_;
    std::string path_;
    std::size_t pos_ = 0;
};

}  // namespace detail

/// Round-half-up quantization to 8 bits.
inline std::uint8_t quantize_u8(double v) {
    const double scaled = std::floor(clamp01(v) * 255.0 + 0.5);
    return static_cast<std::uint8_t>(scaled);
}

inline ImageBuffer load_image(const std::filesystem::path& path) {
    const auto bytes = detail::read_all(path);
    detail::HeaderReader hdr(bytes, path.string());
    const std::string magic = hdr.token();
    int channels = 0;
    if (magic == "P5") {
        channels = 1;
    } else if (magic == "P6") {
        channels = 3;
    } else {
        hdr.fail("unsupported magic '" + magic + "'");
    }
    const long width = hdr.integer();
    const long height = hdr.integer();
    if (width <= 0 || height <= 0 || width > (1L << 20) || height > (1L << 20)) hdr.fail("bad dimensions");
    const long maxval = hdr.integer();
    if (maxval != 255)
        throw ImageIoError(ImageIoError::Code::UnsupportedMaxval,
                           path.string() + ": maxval " + std::to_string(maxval) + " is not 255");
    const std::size_t offset = hdr.payload_offset();
    const std::size_t count = static_cast<std::size_t>(width) * height * channels;
    if (bytes.size() < offset + count)
        throw ImageIoError(ImageIoError::Code::TruncatedPayload,
                           path.string() + ": payload has " + std::to_string(bytes.size() - std::min(bytes.size(), offset)) +
                               " bytes, expected " + std::to_string(count));
    std::vector<double> data(count);
    for (std::size_t i = 0; i < count; ++i) data[i] = bytes[offset + i] / 255.0;
    return ImageBuffer(static_cast<int>(height), static_cast<int>(width), channels, std::move(data));
}

inline void save_image(const ImageBuffer& img, const std::filesystem::path& path) {
    std::ostringstream header;
    header << (img.channels == 1 ? "P5" : "P6") << '\n' << img.width << ' ' << img.height << "\n255\n";
    std::vector<unsigned char> payload(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) payload[i] = quantize_u8(img.data[i]);
    detail::write_all(path, header.str(), payload);
}

inline std::string pfm_header(int width, int height) {
    return "Pf\n" + std::to_string(width) + ' ' + std::to_string(height) + "\n-1.0\n";
}

/// Values are narrowed to float32; maps holding float-representable values
/// round-trip bit-exactly.
inline void save_pfm(const DisparityMap& map, const std::filesystem::path& path) {
    std::vector<unsigned char> payload(map.size() * 4);
    std::size_t o = 0;
    for (int y = map.height - 1; y >= 0; --y) {
        for (int x = 0; x < map.width; ++x) {
            const double v = map.at(y, x);
            if (!std::isfinite(v))
                throw ImageIoError(ImageIoError::Code::NonFinite, path.string() + ": refusing to save non-finite value");
            const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
            for (int b = 0; b < 4; ++b) payload[o++] = static_cast<unsigned char>((bits >> (8 * b)) & 0xffu);
        }
    }
    detail::write_all(path, pfm_header(map.width, map.height), payload);
}

inline DisparityMap load_pfm(const std::filesystem::path& path) {
    const auto bytes = detail::read_all(path);
    detail::HeaderReader hdr(bytes, path.string());
    const std::string magic = hdr.token();
    if (magic != "Pf") hdr.fail("expected single-channel 'Pf', got '" + magic + "'");
    const long width = hdr.integer();
    const long height = hdr.integer();
    if (width <= 0 || height <= 0 || width > (1L << 20) || height > (1L << 20)) hdr.fail("bad dimensions");
    const double scale = hdr.real();
    if (scale == 0.0 || !std::isfinite(scale)) hdr.fail("scale must be non-zero");
    const bool little = scale < 0.0;
    const std::size_t offset = hdr.payload_offset();
    const std::size_t count = static_cast<std::size_t>(width) * height;
    if (bytes.size() < offset + count * 4)
        throw ImageIoError(ImageIoError::Code::TruncatedPayload, path.string() + ": truncated PFM payload");
    DisparityMap map(static_cast<int>(height), static_cast<int>(width));
    std::size_t o = offset;
    for (long y = height - 1; y >= 0; --y) {
        for (long x = 0; x < width; ++x) {
            std::uint32_t bits = 0;
            for (int b = 0; b < 4; ++b) {
                const int shift = little ? 8 * b : 8 * (3 - b);
                bits |= static_cast<std::uint32_t>(bytes[o++]) << shift;
            }
            map.at(static_cast<int>(y), static_cast<int>(x)) = std::bit_cast<float>(bits);
        }
    }
    return map;
}

/// Min-max scaled grayscale export of a map (constant maps become black).
inline ImageBuffer heatmap_image(const DisparityMap& map) {
    const auto [lo, hi] = std::minmax_element(map.data.begin(), map.data.end());
    const double range = *hi - *lo;
    ImageBuffer img(map.height, map.width, 1);
    for (std::size_t i = 0; i < map.size(); ++i) img.data[i] = range > 0.0 ? (map.data[i] - *lo) / range : 0.0;
    return img;
}

}  // namespace acdk
