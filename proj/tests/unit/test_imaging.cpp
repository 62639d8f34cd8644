#include <doctest.h>

#include <algorithm>
#include <deque>

#include "skycast/base64.hpp"
#include "skycast/error.hpp"
#include "skycast/imaging.hpp"
#include "support.hpp"

using namespace skycast;
using namespace skycast::imaging;
using skytest::handmade_png;
using skytest::random_image;
using skytest::random_quantized_image;
using skytest::solid;

namespace {

// 4x4 JPEG, every pixel (200, 30, 40) before compression.
constexpr const char* kTinyJpeg =
    "/9j/4AAQSkZJRgABAQAAAQABAAD/2wBDAAIBAQEBAQIBAQECAgICAgQDAgICAgUEBAMEBgUGBgYFBgYGBwkIBgcJBwYGCAsICQoKCgoKBggLDAsK"
    "DAkKCgr/2wBDAQICAgICAgUDAwUKBwYHCgoKCgoKCgoKCgoKCgoKCgoKCgoKCgoKCgoKCgoKCgoKCgoKCgoKCgoKCgoKCgoKCgr/wAARCAAEAAQD"
    "ASIAAhEBAxEB/8QAHwAAAQUBAQEBAQEAAAAAAAAAAAECAwQFBgcICQoL/8QAtRAAAgEDAwIEAwUFBAQAAAF9AQIDAAQRBRIhMUEGE1FhByJxFDKB"
    "kaEII0KxwRVS0fAkM2JyggkKFhcYGRolJicoKSo0NTY3ODk6Q0RFRkdISUpTVFVWV1hZWmNkZWZnaGlqc3R1dnd4eXqDhIWGh4iJipKTlJWWl5iZ"
    "mqKjpKWmp6ipqrKztLW2t7i5usLDxMXGx8jJytLT1NXW19jZ2uHi4+Tl5ufo6erx8vP09fb3+Pn6/8QAHwEAAwEBAQEBAQEBAQAAAAAAAAECAwQF"
    "BgcICQoL/8QAtREAAgECBAQDBAcFBAQAAQJ3AAECAxEEBSExBhJBUQdhcRMiMoEIFEKRobHBCSMzUvAVYnLRChYkNOEl8RcYGRomJygpKjU2Nzg5"
    "OkNERUZHSElKU1RVVldYWVpjZGVmZ2hpanN0dXZ3eHl6goOEhYaHiImKkpOUlZaXmJmaoqOkpaanqKmqsrO0tba3uLm6wsPExcbHyMnK0tPU1dbX"
    "2Nna4uPk5ebn6Onq8vP09fb3+Pn6/9oADAMBAAIRAxEAPwD5Hooor8fP9UD/2Q==";

RasterImage decode_vec(const std::vector<std::uint8_t>& bytes) { return decode_image(std::span(bytes.data(), bytes.size())); }

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected a skycast::Error");
    return ErrorCode::InvalidArgument;
}

// Flood fill from the top row over a precomputed predicate grid.
SkyMask flood_oracle(const std::vector<std::vector<bool>>& ok) {
    const int h = static_cast<int>(ok.size());
    const int w = static_cast<int>(ok[0].size());
    SkyMask m(w, h, false);
    std::deque<std::pair<int, int>> q;
    for (int x = 0; x < w; ++x) {
        if (ok[0][x]) {
            m.set(x, 0, true);
            q.emplace_back(x, 0);
        }
    }
    while (!q.empty()) {
        auto [x, y] = q.front();
        q.pop_front();
        const int nb[4][2] = {{x + 1, y}, {x - 1, y}, {x, y + 1}, {x, y - 1}};
        for (auto& p : nb) {
            if (p[0] < 0 || p[1] < 0 || p[0] >= w || p[1] >= h) continue;
            if (!ok[p[1]][p[0]] || m.at(p[0], p[1])) continue;
            m.set(p[0], p[1], true);
            q.emplace_back(p[0], p[1]);
        }
    }
    return m;
}

} // namespace

TEST_CASE("decode: white 1x1 PNG normalizes to 1.0") {
    const auto img = decode_vec(handmade_png(1, 1, 3, {255, 255, 255}));
    CHECK(img.width == 1);
    CHECK(img.height == 1);
    CHECK(img.channels == 3);
    for (double v : img.pixels) CHECK(v == 1.0);
}

TEST_CASE("decode: grayscale PNG keeps one channel") {
    const auto img = decode_vec(handmade_png(2, 1, 1, {0, 51}));
    REQUIRE(img.channels == 1);
    CHECK(img.pixels[0] == 0.0);
    CHECK(img.pixels[1] == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("decode: handmade PNG samples land at byte/255") {
    std::vector<std::uint8_t> samples;
    for (int i = 0; i < 3 * 3 * 3; ++i) samples.push_back(static_cast<std::uint8_t>(i * 9));
    const auto img = decode_vec(handmade_png(3, 3, 3, samples));
    for (std::size_t i = 0; i < samples.size(); ++i) CHECK(img.pixels[i] == samples[i] / 255.0);
}

TEST_CASE("decode: JPEG is accepted and stays close to its source color") {
    const auto bytes = base64_decode(kTinyJpeg);
    const auto img = decode_vec(bytes);
    CHECK(img.width == 4);
    CHECK(img.channels == 3);
    CHECK(img.at(1, 1, 0) == doctest::Approx(200 / 255.0).epsilon(0.05));
    CHECK(img.at(1, 1, 1) < 0.25);
}

TEST_CASE("decode: broken streams") {
    auto png = handmade_png(4, 4, 3, std::vector<std::uint8_t>(48, 7));
    SUBCASE("truncated PNG is malformed") {
        png.resize(png.size() / 2);
        CHECK(code_of([&] { decode_vec(png); }) == ErrorCode::MalformedImage);
    }
    SUBCASE("truncated JPEG is malformed") {
        auto jpg = base64_decode(kTinyJpeg);
        jpg.resize(jpg.size() / 3);
        CHECK(code_of([&] { decode_vec(jpg); }) == ErrorCode::MalformedImage);
    }
    SUBCASE("empty input is malformed") {
        CHECK(code_of([&] { decode_vec({}); }) == ErrorCode::MalformedImage);
    }
    SUBCASE("other formats are unsupported") {
        const std::vector<std::uint8_t> gif = {'G', 'I', 'F', '8', '9', 'a', 1, 0, 1, 0};
        CHECK(code_of([&] { decode_vec(gif); }) == ErrorCode::UnsupportedFormat);
    }
}

TEST_CASE("encode: quantization is round-half-up") {
    CHECK(quantize(0.5) == 128);
    CHECK(quantize(0.0) == 0);
    CHECK(quantize(1.0) == 255);
    CHECK(quantize(-0.2) == 0);
    CHECK(quantize(1.7) == 255);
    RasterImage half(1, 1, 1, 0.5);
    CHECK(decode_vec(encode_png(half)).pixels[0] == 128 / 255.0);
}

TEST_CASE("encode: all-zero image round-trips to zero") {
    RasterImage z(2, 2, 3, 0.0);
    CHECK(decode_vec(encode_png(z)) == z);
}

TEST_CASE("codec round trip is exact on the 8-bit grid and within half a step otherwise") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const int c = seed % 2 ? 3 : 1;
        const auto q = random_quantized_image(8, 8, c, seed);
        CHECK(decode_vec(encode_png(q)) == q);
        const auto r = random_image(8, 8, c, seed + 100);
        const auto back = decode_vec(encode_png(r));
        for (std::size_t i = 0; i < r.pixels.size(); ++i) CHECK(std::abs(back.pixels[i] - r.pixels[i]) <= 0.5 / 255.0 + 1e-15);
    }
}

TEST_CASE("resize: constants stay constant") {
    const auto img = solid(13, 7, 0.3, 0.6, 0.9);
    const auto out = resize_bilinear(img, 29, 4);
    CHECK(out.width == 29);
    CHECK(out.height == 4);
    for (std::size_t i = 0; i < out.pixel_count(); ++i) {
        CHECK(std::abs(out.pixels[i * 3] - 0.3) < 1e-12);
        CHECK(std::abs(out.pixels[i * 3 + 2] - 0.9) < 1e-12);
    }
}

TEST_CASE("resize: 2x2 checker to 1x1 samples the center") {
    RasterImage img(2, 2, 1);
    img.pixels = {0.0, 1.0, 1.0, 0.0};
    // Center of the 2x2 grid is equidistant from all four samples.
    const double oracle = 0.25 * (0.0 + 1.0 + 1.0 + 0.0);
    CHECK(resize_bilinear(img, 1, 1).pixels[0] == doctest::Approx(oracle).epsilon(1e-15));
}

TEST_CASE("resize: 400x400 becomes 200x200 and zero targets are rejected") {
    const auto out = resize_bilinear(RasterImage(400, 400, 3, 0.5), kWorkingSize, kWorkingSize);
    CHECK(out.width == 200);
    CHECK(out.height == 200);
    CHECK(code_of([] { resize_bilinear(RasterImage(4, 4, 1), 0, 3); }) == ErrorCode::ZeroDimension);
}

TEST_CASE("sky mask: uniform blue is all sky") {
    const auto m = heuristic_sky_mask(solid(9, 6, 0.4, 0.6, 0.9));
    CHECK(m.count() == 54u);
}

TEST_CASE("sky mask: uniform dark image has no sky") {
    CHECK(code_of([] { heuristic_sky_mask(solid(8, 8, 0.05, 0.05, 0.05)); }) == ErrorCode::NoSkyDetected);
}

TEST_CASE("sky mask: blue over grass keeps the top half only") {
    auto img = solid(10, 10, 0.4, 0.6, 0.9);
    for (int y = 5; y < 10; ++y)
        for (int x = 0; x < 10; ++x) {
            img.at(x, y, 0) = 0.2;
            img.at(x, y, 1) = 0.6;
            img.at(x, y, 2) = 0.1;
        }
    std::vector<std::vector<bool>> ok(10, std::vector<bool>(10));
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 10; ++x) ok[y][x] = y < 5;
    CHECK(heuristic_sky_mask(img) == flood_oracle(ok));
}

TEST_CASE("sky mask: sky-colored pixels cut off from the top row are excluded") {
    auto img = solid(6, 9, 0.4, 0.6, 0.9);
    // A dark band across row 3 isolates the blue below it.
    for (int x = 0; x < 6; ++x) {
        for (int c = 0; c < 3; ++c) img.at(x, 3, c) = 0.05;
    }
    const auto m = heuristic_sky_mask(img);
    CHECK(m.count() == 18u);
    CHECK_FALSE(m.at(2, 6));
}

TEST_CASE("sky mask: random scenes match the flood-fill oracle and keep dimensions") {
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        const auto img = random_image(12, 9, 3, seed);
        std::vector<std::vector<bool>> ok(9, std::vector<bool>(12));
        for (int y = 0; y < 9; ++y)
            for (int x = 0; x < 12; ++x) {
                const double r = img.at(x, y, 0), g = img.at(x, y, 1), b = img.at(x, y, 2);
                const double lum = 0.299 * r + 0.587 * g + 0.114 * b;
                const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
                const double sat = mx > 0 ? (mx - mn) / mx : 0.0;
                ok[y][x] = (b >= 0.35 && b >= r && lum >= 0.25) || (sat <= 0.15 && lum >= 0.55);
            }
        const auto oracle = flood_oracle(ok);
        if (oracle.count() == 0) {
            CHECK(code_of([&] { heuristic_sky_mask(img); }) == ErrorCode::NoSkyDetected);
        } else {
            const auto m = heuristic_sky_mask(img);
            CHECK(m.width == img.width);
            CHECK(m.height == img.height);
            CHECK(m == oracle);
        }
    }
}

TEST_CASE("augment: identity spec and involutions") {
    const auto img = random_image(11, 8, 3, 5);
    CHECK(augment(img, AugmentationSpec{}) == img);
    CHECK(flip_horizontal(flip_horizontal(img)) == img);
    CHECK(rotate(img, 0.0) == img);
}

TEST_CASE("augment: contrast normalization spans [0,1] per channel") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto img = random_image(7, 5, 3, seed);
        for (double& v : img.pixels) v = 0.2 + 0.5 * v;
        const auto out = contrast_normalize(img);
        for (int c = 0; c < 3; ++c) {
            double lo = 1.0, hi = 0.0;
            for (std::size_t i = 0; i < out.pixel_count(); ++i) {
                lo = std::min(lo, out.pixels[i * 3 + c]);
                hi = std::max(hi, out.pixels[i * 3 + c]);
            }
            CHECK(lo == doctest::Approx(0.0));
            CHECK(hi == doctest::Approx(1.0));
        }
    }
}

TEST_CASE("augment: blur keeps the mean of a constant image") {
    const auto img = solid(20, 20, 0.25, 0.5, 0.75);
    const auto out = gaussian_blur(img, 1.3);
    for (std::size_t i = 0; i < out.pixel_count(); ++i) CHECK(std::abs(out.pixels[i * 3 + 1] - 0.5) < 1e-6);
}

TEST_CASE("augment: fixed order rotate, flip, blur, normalize") {
    const auto img = random_image(16, 12, 3, 9);
    AugmentationSpec spec;
    spec.rotation_degrees = 7.0;
    spec.horizontal_flip = true;
    spec.gaussian_blur_sigma = 0.8;
    spec.contrast_normalize = true;
    const auto manual = contrast_normalize(gaussian_blur(flip_horizontal(rotate(img, 7.0)), 0.8));
    CHECK(augment(img, spec) == manual);
    const auto out = augment(img, spec);
    CHECK(out.width == img.width);
    CHECK(out.height == img.height);
}

TEST_CASE("augment: spec ranges are enforced") {
    AugmentationSpec spec;
    spec.rotation_degrees = 10.5;
    CHECK(code_of([&] { spec.validate(); }) == ErrorCode::InvalidArgument);
    spec.rotation_degrees = -10.0;
    spec.validate();
    spec.gaussian_blur_sigma = -0.1;
    CHECK(code_of([&] { spec.validate(); }) == ErrorCode::InvalidArgument);
    for (std::uint64_t s = 0; s < 200; ++s) {
        const auto r = AugmentationSpec::random(s);
        CHECK(std::abs(r.rotation_degrees) <= 10.0);
        CHECK(r.gaussian_blur_sigma >= 0.0);
        CHECK(r == AugmentationSpec::random(s));
    }
}

TEST_CASE("augment_mask follows the image geometry") {
    SkyMask m(10, 4, false);
    m.set(0, 0, true);
    AugmentationSpec flip;
    flip.horizontal_flip = true;
    const auto out = augment_mask(m, flip);
    CHECK(out.at(9, 0));
    CHECK(out.count() == 1u);
}
