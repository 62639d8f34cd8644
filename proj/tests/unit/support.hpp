#pragma once

// Shared fixtures and independent oracles for the unit suites.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <zlib.h>

#include "skycast/error.hpp"
#include "skycast/imaging.hpp"
#include "skycast/rng.hpp"

namespace skytest {

using skycast::imaging::RasterImage;

inline RasterImage random_image(int w, int h, int c, std::uint64_t seed) {
    skycast::Rng rng(seed);
    RasterImage img(w, h, c);
    for (double& v : img.pixels) v = rng.uniform();
    return img;
}

// Values snapped to the 8-bit grid, so PNG round trips are exact.
inline RasterImage random_quantized_image(int w, int h, int c, std::uint64_t seed) {
    skycast::Rng rng(seed);
    RasterImage img(w, h, c);
    for (double& v : img.pixels) v = static_cast<double>(rng.below(256)) / 255.0;
    return img;
}

inline RasterImage solid(int w, int h, double r, double g, double b) {
    RasterImage img(w, h, 3);
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        img.pixels[i * 3] = r;
        img.pixels[i * 3 + 1] = g;
        img.pixels[i * 3 + 2] = b;
    }
    return img;
}

// Minimal PNG writer (8-bit, filter 0) built directly on zlib, independent of
// the library codec.
inline std::vector<std::uint8_t> handmade_png(int w, int h, int channels, const std::vector<std::uint8_t>& samples) {
    auto be32 = [](std::vector<std::uint8_t>& out, std::uint32_t v) {
        for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
    };
    auto chunk = [&](std::vector<std::uint8_t>& out, const char* type, const std::vector<std::uint8_t>& data) {
        be32(out, static_cast<std::uint32_t>(data.size()));
        const std::size_t start = out.size();
        out.insert(out.end(), type, type + 4);
        out.insert(out.end(), data.begin(), data.end());
        const auto crc = crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
        be32(out, static_cast<std::uint32_t>(crc));
    };
    std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
    std::vector<std::uint8_t> ihdr;
    be32(ihdr, static_cast<std::uint32_t>(w));
    be32(ihdr, static_cast<std::uint32_t>(h));
    ihdr.push_back(8);
    ihdr.push_back(channels == 3 ? 2 : 0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    chunk(out, "IHDR", ihdr);
    std::vector<std::uint8_t> raw;
    const std::size_t row = static_cast<std::size_t>(w) * channels;
    for (int y = 0; y < h; ++y) {
        raw.push_back(0);
        raw.insert(raw.end(), samples.begin() + static_cast<std::ptrdiff_t>(y * row),
                   samples.begin() + static_cast<std::ptrdiff_t>((y + 1) * row));
    }
    uLongf len = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> z(len);
    compress(z.data(), &len, raw.data(), static_cast<uLong>(raw.size()));
    z.resize(len);
    chunk(out, "IDAT", z);
    chunk(out, "IEND", {});
    return out;
}

// Runs fn and returns the error code it throws; fails the test if it returns.
template <class F>
skycast::ErrorCode code_of(F&& fn) {
    try {
        fn();
    } catch (const skycast::Error& e) {
        return e.code();
    }
    throw std::logic_error("expected a skycast::Error");
}

inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("skycast_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace skytest
