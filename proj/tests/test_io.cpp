#include <gtest/gtest.h>

#include <bit>
#include <cstring>
#include <limits>

#include "acdk/io.hpp"
#include "test_util.hpp"

using namespace acdk;
using testutil::TempDir;

namespace {

ImageIoError::Code load_error(const std::filesystem::path& p) {
    try {
        load_image(p);
    } catch (const ImageIoError& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error for " << p;
    return ImageIoError::Code::Unwritable;
}

}  // namespace

TEST(ImageIo, LoadsP5LinearMapping) {
    TempDir d;
    testutil::write_bytes(d / "a.pgm", std::string("P5\n2 2\n255\n") + std::string("\x00\xff\x80\x40", 4));
    const ImageBuffer img = load_image(d / "a.pgm");
    ASSERT_EQ(img.channels, 1);
    ASSERT_EQ(img.width, 2);
    ASSERT_EQ(img.height, 2);
    EXPECT_EQ(img.data, (std::vector<double>{0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0}));
}

TEST(ImageIo, LoadsP6) {
    TempDir d;
    testutil::write_bytes(d / "a.ppm", std::string("P6\n# comment\n1 1\n255\n") + std::string("\xff\x00\x00", 3));
    const ImageBuffer img = load_image(d / "a.ppm");
    EXPECT_EQ(img.channels, 3);
    EXPECT_EQ(img.data, (std::vector<double>{1.0, 0.0, 0.0}));
}

TEST(ImageIo, QuantizesRoundHalfUp) {
    EXPECT_EQ(quantize_u8(0.5), 128);
    EXPECT_EQ(quantize_u8(0.0), 0);
    EXPECT_EQ(quantize_u8(1.0), 255);
    TempDir d;
    save_image(ImageBuffer(1, 3, 1, std::vector<double>{0.5, 0.0, 1.0}), d / "q.pgm");
    const auto bytes = testutil::read_bytes(d / "q.pgm");
    const std::string header = "P5\n3 1\n255\n";
    ASSERT_EQ(bytes.size(), header.size() + 3);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + header.size()), header);
    EXPECT_EQ(bytes[header.size()], 128);
    EXPECT_EQ(bytes[header.size() + 1], 0);
    EXPECT_EQ(bytes[header.size() + 2], 255);
}

TEST(ImageIo, RoundTripIsByteIdentical) {
    TempDir d;
    Rng rng(4);
    for (int c : {1, 3}) {
        ImageBuffer img(5, 7, c);
        for (double& v : img.data) v = static_cast<double>(rng_int(rng, 0, 255)) / 255.0;
        const auto p1 = d / ("a" + std::to_string(c)), p2 = d / ("b" + std::to_string(c));
        save_image(img, p1);
        const ImageBuffer back = load_image(p1);
        EXPECT_EQ(back, img);
        save_image(back, p2);
        EXPECT_EQ(testutil::read_bytes(p1), testutil::read_bytes(p2));
    }
}

TEST(ImageIo, DistinctErrors) {
    TempDir d;
    EXPECT_EQ(load_error(d / "missing.pgm"), ImageIoError::Code::MissingFile);
    testutil::write_bytes(d / "bad.pgm", "P7\n2 2\n255\n....");
    EXPECT_EQ(load_error(d / "bad.pgm"), ImageIoError::Code::MalformedHeader);
    testutil::write_bytes(d / "dims.pgm", "P5\nx 2\n255\n....");
    EXPECT_EQ(load_error(d / "dims.pgm"), ImageIoError::Code::MalformedHeader);
    testutil::write_bytes(d / "deep.pgm", "P5\n2 2\n65535\n........");
    EXPECT_EQ(load_error(d / "deep.pgm"), ImageIoError::Code::UnsupportedMaxval);
    testutil::write_bytes(d / "short.pgm", "P5\n2 2\n255\n...");
    EXPECT_EQ(load_error(d / "short.pgm"), ImageIoError::Code::TruncatedPayload);
    testutil::write_bytes(d / "short.ppm", "P6\n2 2\n255\n.........");
    EXPECT_EQ(load_error(d / "short.ppm"), ImageIoError::Code::TruncatedPayload);
}

TEST(ImageIo, UnwritablePath) {
    TempDir d;
    try {
        save_image(ImageBuffer(1, 1, 1), d / "no" / "such" / "dir.pgm");
        FAIL();
    } catch (const ImageIoError& e) {
        EXPECT_EQ(e.code(), ImageIoError::Code::Unwritable);
    }
}

TEST(Pfm, HeaderFormat) { EXPECT_EQ(pfm_header(3, 2), "Pf\n3 2\n-1.0\n"); }

TEST(Pfm, SinglePixelPayload) {
    TempDir d;
    save_pfm(DisparityMap(1, 1, 2.5), d / "p.pfm");
    const auto bytes = testutil::read_bytes(d / "p.pfm");
    const std::string header = pfm_header(1, 1);
    ASSERT_EQ(bytes.size(), header.size() + 4);
    const std::uint32_t bits = std::bit_cast<std::uint32_t>(2.5f);  // 0x40200000
    for (int b = 0; b < 4; ++b) EXPECT_EQ(bytes[header.size() + b], (bits >> (8 * b)) & 0xff);
    EXPECT_EQ(bytes[header.size() + 3], 0x40);
}

TEST(Pfm, RowsStoredBottomToTop) {
    TempDir d;
    save_pfm(DisparityMap(2, 1, std::vector<double>{1.0, 2.0}), d / "r.pfm");
    const auto bytes = testutil::read_bytes(d / "r.pfm");
    const std::size_t o = pfm_header(1, 2).size();
    float first = 0;
    std::memcpy(&first, &bytes[o], 4);
    EXPECT_EQ(first, 2.0f);
}

TEST(Pfm, RoundTripBitExact) {
    TempDir d;
    Rng rng(8);
    DisparityMap m(6, 9);
    for (double& v : m.data) v = static_cast<float>(rng_uniform(rng, 0.0, 50.0));
    save_pfm(m, d / "m.pfm");
    const DisparityMap back = load_pfm(d / "m.pfm");
    ASSERT_TRUE(back.same_shape(m));
    for (std::size_t i = 0; i < m.size(); ++i)
        EXPECT_EQ(std::bit_cast<std::uint64_t>(back.data[i]), std::bit_cast<std::uint64_t>(m.data[i]));
}

TEST(Pfm, BigEndianScaleIsHonoured) {
    TempDir d;
    const std::uint32_t bits = std::bit_cast<std::uint32_t>(2.5f);
    std::string payload;
    for (int b = 3; b >= 0; --b) payload.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
    testutil::write_bytes(d / "be.pfm", "Pf\n1 1\n1.0\n" + payload);
    EXPECT_EQ(load_pfm(d / "be.pfm").data[0], 2.5);
}

TEST(Pfm, RejectsNonFiniteAndBadFiles) {
    TempDir d;
    DisparityMap m(1, 2, 1.0);
    m.data[1] = std::numeric_limits<double>::quiet_NaN();
    try {
        save_pfm(m, d / "nan.pfm");
        FAIL();
    } catch (const ImageIoError& e) {
        EXPECT_EQ(e.code(), ImageIoError::Code::NonFinite);
    }
    testutil::write_bytes(d / "pf3.pfm", "PF\n1 1\n-1.0\n............");
    EXPECT_THROW(load_pfm(d / "pf3.pfm"), ImageIoError);
    testutil::write_bytes(d / "short.pfm", "Pf\n2 1\n-1.0\n....");
    try {
        load_pfm(d / "short.pfm");
        FAIL();
    } catch (const ImageIoError& e) {
        EXPECT_EQ(e.code(), ImageIoError::Code::TruncatedPayload);
    }
}
