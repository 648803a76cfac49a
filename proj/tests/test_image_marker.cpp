#include <gtest/gtest.h>

#include "autofocus/image.hpp"
#include "autofocus/marker.hpp"

using namespace autofocus;

TEST(Png, RoundTripIsLossless) {
    Image img(7, 5, Rgb{1, 2, 3});
    img.set(6, 4, {250, 0, 17});
    const Image back = decode_png(encode_png(img));
    EXPECT_EQ(back, img);
}

TEST(Png, GrayDecodesToRgb) {
    const std::vector<std::uint8_t> gray{0, 128, 255, 64};
    const Image img = decode_png(encode_png_gray(2, 2, gray));
    EXPECT_EQ(img.at(1, 0), (Rgb{128, 128, 128}));
}

TEST(Png, GarbageThrows) {
    const std::vector<std::uint8_t> junk{1, 2, 3, 4, 5};
    EXPECT_THROW(decode_png(junk), std::runtime_error);
}

TEST(Base64, KnownVectorAndRoundTrip) {
    const std::string s = "any carnal pleas";
    const std::vector<std::uint8_t> bytes(s.begin(), s.end());
    EXPECT_EQ(base64_encode(bytes), "YW55IGNhcm5hbCBwbGVhcw==");
    EXPECT_EQ(base64_decode("YW55IGNhcm5hbCBwbGVhcw=="), bytes);
    EXPECT_THROW(base64_decode("@@@"), std::runtime_error);
}

TEST(Sha256, KnownVector) {
    const std::string s = "abc";
    EXPECT_EQ(sha256_hex(std::vector<std::uint8_t>(s.begin(), s.end())),
              "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Crop, CopiesRectangle) {
    Image img(10, 10);
    img.set(3, 4, {9, 9, 9});
    const Image c = crop(img, {2, 3, 4, 4});
    EXPECT_EQ(c.size(), (ImageSize{4, 4}));
    EXPECT_EQ(c.at(1, 1), (Rgb{9, 9, 9}));
    EXPECT_THROW(crop(img, {8, 8, 4, 4}), InvalidArgument);
}

TEST(Resize, UniformImageStaysUniform) {
    const Image img(13, 7, Rgb{40, 80, 120});
    const Image r = resize_bilinear(img, {50, 21});
    for (int y = 0; y < r.height(); ++y) {
        for (int x = 0; x < r.width(); ++x) ASSERT_EQ(r.at(x, y), (Rgb{40, 80, 120}));
    }
}

TEST(Resize, IntegerUpscaleKeepsBlockInterior) {
    Image img(4, 4, Rgb{0, 0, 0});
    img.fill_rect({1, 1, 2, 2}, {200, 200, 200});
    const Image r = resize_bilinear(img, {16, 16});
    EXPECT_EQ(r.at(7, 7), (Rgb{200, 200, 200}));
    EXPECT_EQ(r.at(0, 0), (Rgb{0, 0, 0}));
}

TEST(Marker, CenterFilledCornersUntouched) {
    const Image canvas(64, 64, Rgb{255, 255, 255});
    const Image m = draw_marker(canvas, {32, 32});
    EXPECT_EQ(m.size(), canvas.size());
    EXPECT_EQ(m.at(32, 32), (MarkerStyle{}.color));
    EXPECT_EQ(m.at(32, 14), (MarkerStyle{}.color));  // up-pointing tip
    EXPECT_EQ(m.at(32, 48), (Rgb{255, 255, 255}));  // notch between the lower points
    EXPECT_EQ(m.at(0, 0), (Rgb{255, 255, 255}));
    EXPECT_EQ(m.at(63, 63), (Rgb{255, 255, 255}));
    EXPECT_EQ(canvas.at(32, 32), (Rgb{255, 255, 255}));
}

TEST(Marker, ClippedAtOrigin) {
    const Image canvas(30, 30, Rgb{0, 0, 0});
    const Image m = draw_marker(canvas, {0, 0});
    EXPECT_EQ(m.at(0, 0), (MarkerStyle{}.color));
    const Image far = draw_marker(canvas, {-500, 900});
    EXPECT_EQ(far.at(0, 29), (MarkerStyle{}.color));
}

TEST(Marker, RejectsTinyRadius) {
    const Image canvas(30, 30);
    EXPECT_THROW(draw_marker(canvas, {5, 5}, MarkerStyle{MarkerShape::star5, 3.0}), InvalidArgument);
}

TEST(Marker, FiveTipsOnOuterCircle) {
    const auto poly = star_polygon({0, 0}, 10);
    EXPECT_NEAR(poly[0].x, 0.0, 1e-12);
    EXPECT_NEAR(poly[0].y, -10.0, 1e-12);
    EXPECT_NEAR(std::hypot(poly[1].x, poly[1].y), 4.0, 1e-12);
}
