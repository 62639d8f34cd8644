#include <algorithm>
#include <cmath>
#include <deque>
#include <string>

#include "skycast/error.hpp"
#include "skycast/imaging.hpp"

namespace skycast::imaging {

RasterImage::RasterImage(int w, int h, int c, double fill) : width(w), height(h), channels(c) {
    if (w < 1 || h < 1) throw Error(ErrorCode::ZeroDimension, "image dimensions must be >= 1");
    if (c != 1 && c != 3) throw Error(ErrorCode::InvalidArgument, "channels must be 1 or 3");
    pixels.assign(static_cast<std::size_t>(w) * h * c, fill);
}

void RasterImage::validate() const {
    if (width < 1 || height < 1) throw Error(ErrorCode::ZeroDimension, "image dimensions must be >= 1");
    if (channels != 1 && channels != 3) throw Error(ErrorCode::InvalidArgument, "channels must be 1 or 3");
    if (pixels.size() != static_cast<std::size_t>(width) * height * channels) {
        throw Error(ErrorCode::InvalidArgument, "pixel buffer size does not match dimensions");
    }
    for (double v : pixels) {
        if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorCode::InvalidArgument, "intensity outside [0,1]");
    }
}

SkyMask::SkyMask(int w, int h, bool fill) : width(w), height(h) {
    if (w < 1 || h < 1) throw Error(ErrorCode::ZeroDimension, "mask dimensions must be >= 1");
    bits.assign(static_cast<std::size_t>(w) * h, fill ? 1 : 0);
}

std::size_t SkyMask::count() const { return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), 1)); }

bool AugmentationSpec::is_identity() const {
    return !horizontal_flip && !contrast_normalize && gaussian_blur_sigma == 0.0 && rotation_degrees == 0.0;
}

void AugmentationSpec::validate() const {
    if (!(gaussian_blur_sigma >= 0.0) || !std::isfinite(gaussian_blur_sigma)) {
        throw Error(ErrorCode::InvalidArgument, "blur sigma must be >= 0");
    }
    if (!(std::abs(rotation_degrees) <= kMaxRotationDegrees)) {
        throw Error(ErrorCode::InvalidArgument, "rotation must be within +/-10 degrees");
    }
}

AugmentationSpec AugmentationSpec::random(std::uint64_t seed) {
    Rng rng(seed);
    AugmentationSpec spec;
    spec.seed = seed;
    spec.horizontal_flip = rng.uniform() < 0.5;
    spec.contrast_normalize = rng.uniform() < 0.5;
    const bool blur = rng.uniform() < 0.5;
    const double sigma = rng.uniform(0.0, kMaxBlurSigma);
    spec.gaussian_blur_sigma = blur ? sigma : 0.0;
    spec.rotation_degrees = rng.uniform(-kMaxRotationDegrees, kMaxRotationDegrees);
    return spec;
}

double saturation(double r, double g, double b) {
    const double mx = std::max({r, g, b});
    const double mn = std::min({r, g, b});
    return mx <= 0.0 ? 0.0 : (mx - mn) / mx;
}

RasterImage to_grayscale(const RasterImage& img) {
    if (img.channels == 1) return img;
    RasterImage out(img.width, img.height, 1);
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        const double* p = &img.pixels[i * 3];
        out.pixels[i] = luminance(p[0], p[1], p[2]);
    }
    return out;
}

double mean_saturation(const RasterImage& img) {
    if (img.channels != 3) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        const double* p = &img.pixels[i * 3];
        sum += saturation(p[0], p[1], p[2]);
    }
    return sum / static_cast<double>(img.pixel_count());
}

namespace {

inline int clamp_index(int v, int n) { return v < 0 ? 0 : (v >= n ? n - 1 : v); }

/// Bilinear sample with clamp-to-edge, at continuous pixel-center coordinates.
inline double sample_bilinear(const RasterImage& img, double sx, double sy, int c) {
    const double fx0 = std::floor(sx);
    const double fy0 = std::floor(sy);
    const double ax = sx - fx0;
    const double ay = sy - fy0;
    const int x0 = clamp_index(static_cast<int>(fx0), img.width);
    const int x1 = clamp_index(static_cast<int>(fx0) + 1, img.width);
    const int y0 = clamp_index(static_cast<int>(fy0), img.height);
    const int y1 = clamp_index(static_cast<int>(fy0) + 1, img.height);
    const double top = (1.0 - ax) * img.at(x0, y0, c) + ax * img.at(x1, y0, c);
    const double bottom = (1.0 - ax) * img.at(x0, y1, c) + ax * img.at(x1, y1, c);
    return (1.0 - ay) * top + ay * bottom;
}

std::vector<double> gaussian_taps(double sigma) {
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> taps(2 * radius + 1);
    double sum = 0.0;
    for (int k = -radius; k <= radius; ++k) {
        taps[k + radius] = std::exp(-(k * k) / (2.0 * sigma * sigma));
        sum += taps[k + radius];
    }
    for (double& t : taps) t /= sum;
    return taps;
}

} // namespace

RasterImage resize_bilinear(const RasterImage& img, int out_w, int out_h) {
    if (out_w < 1 || out_h < 1) throw Error(ErrorCode::ZeroDimension, "resize target must be >= 1x1");
    if (img.empty()) throw Error(ErrorCode::ZeroDimension, "empty image");
    if (out_w == img.width && out_h == img.height) return img;
    RasterImage out(out_w, out_h, img.channels);
    const double scale_x = static_cast<double>(img.width) / out_w;
    const double scale_y = static_cast<double>(img.height) / out_h;
    for (int y = 0; y < out_h; ++y) {
        const double sy = (y + 0.5) * scale_y - 0.5;
        for (int x = 0; x < out_w; ++x) {
            const double sx = (x + 0.5) * scale_x - 0.5;
            for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = sample_bilinear(img, sx, sy, c);
        }
    }
    return out;
}

SkyMask resize_mask(const SkyMask& mask, int out_w, int out_h) {
    if (out_w < 1 || out_h < 1) throw Error(ErrorCode::ZeroDimension, "resize target must be >= 1x1");
    if (out_w == mask.width && out_h == mask.height) return mask;
    SkyMask out(out_w, out_h, false);
    for (int y = 0; y < out_h; ++y) {
        const int sy = clamp_index(static_cast<int>((y + 0.5) * mask.height / out_h), mask.height);
        for (int x = 0; x < out_w; ++x) {
            const int sx = clamp_index(static_cast<int>((x + 0.5) * mask.width / out_w), mask.width);
            out.set(x, y, mask.at(sx, sy));
        }
    }
    return out;
}

RasterImage flip_horizontal(const RasterImage& img) {
    RasterImage out = img;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(img.width - 1 - x, y, c);
        }
    }
    return out;
}

// Positive angles turn the content counterclockwise as displayed (y down).
RasterImage rotate(const RasterImage& img, double degrees) {
    if (degrees == 0.0) return img;
    const double rad = degrees * M_PI / 180.0;
    const double cs = std::cos(rad);
    const double sn = std::sin(rad);
    const double cx = (img.width - 1) / 2.0;
    const double cy = (img.height - 1) / 2.0;
    RasterImage out(img.width, img.height, img.channels);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const double dx = x - cx;
            const double dy = y - cy;
            const double sx = cx + cs * dx - sn * dy;
            const double sy = cy + sn * dx + cs * dy;
            for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = sample_bilinear(img, sx, sy, c);
        }
    }
    return out;
}

RasterImage gaussian_blur(const RasterImage& img, double sigma) {
    if (sigma < 0.0) throw Error(ErrorCode::InvalidArgument, "blur sigma must be >= 0");
    if (sigma == 0.0) return img;
    const auto taps = gaussian_taps(sigma);
    const int radius = static_cast<int>(taps.size() / 2);
    RasterImage tmp(img.width, img.height, img.channels);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < img.channels; ++c) {
                double acc = 0.0;
                for (int k = -radius; k <= radius; ++k) acc += taps[k + radius] * img.at(clamp_index(x + k, img.width), y, c);
                tmp.at(x, y, c) = acc;
            }
        }
    }
    RasterImage out(img.width, img.height, img.channels);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < img.channels; ++c) {
                double acc = 0.0;
                for (int k = -radius; k <= radius; ++k) acc += taps[k + radius] * tmp.at(x, clamp_index(y + k, img.height), c);
                out.at(x, y, c) = std::clamp(acc, 0.0, 1.0);
            }
        }
    }
    return out;
}

RasterImage contrast_normalize(const RasterImage& img) {
    RasterImage out = img;
    for (int c = 0; c < img.channels; ++c) {
        double lo = 1.0, hi = 0.0;
        for (std::size_t i = 0; i < img.pixel_count(); ++i) {
            lo = std::min(lo, img.pixels[i * img.channels + c]);
            hi = std::max(hi, img.pixels[i * img.channels + c]);
        }
        // A constant channel has no range to stretch.
        if (hi - lo <= 0.0) continue;
        for (std::size_t i = 0; i < img.pixel_count(); ++i) {
            double& v = out.pixels[i * img.channels + c];
            v = (v - lo) / (hi - lo);
        }
    }
    return out;
}

RasterImage augment(const RasterImage& img, const AugmentationSpec& spec) {
    spec.validate();
    RasterImage out = rotate(img, spec.rotation_degrees);
    if (spec.horizontal_flip) out = flip_horizontal(out);
    out = gaussian_blur(out, spec.gaussian_blur_sigma);
    if (spec.contrast_normalize) out = contrast_normalize(out);
    return out;
}

SkyMask augment_mask(const SkyMask& mask, const AugmentationSpec& spec) {
    spec.validate();
    SkyMask out = mask;
    if (spec.rotation_degrees != 0.0) {
        const double rad = spec.rotation_degrees * M_PI / 180.0;
        const double cs = std::cos(rad);
        const double sn = std::sin(rad);
        const double cx = (mask.width - 1) / 2.0;
        const double cy = (mask.height - 1) / 2.0;
        for (int y = 0; y < mask.height; ++y) {
            for (int x = 0; x < mask.width; ++x) {
                const double dx = x - cx;
                const double dy = y - cy;
                const int sx = clamp_index(static_cast<int>(std::lround(cx + cs * dx - sn * dy)), mask.width);
                const int sy = clamp_index(static_cast<int>(std::lround(cy + sn * dx + cs * dy)), mask.height);
                out.set(x, y, mask.at(sx, sy));
            }
        }
    }
    if (spec.horizontal_flip) {
        const SkyMask src = out;
        for (int y = 0; y < mask.height; ++y) {
            for (int x = 0; x < mask.width; ++x) out.set(x, y, src.at(mask.width - 1 - x, y));
        }
    }
    return out;
}

bool is_sky_colored(double r, double g, double b) {
    const double lum = luminance(r, g, b);
    const bool blue_sky = b >= 0.35 && b >= r && lum >= 0.25;
    const bool gray_sky = saturation(r, g, b) <= 0.15 && lum >= 0.55;
    return blue_sky || gray_sky;
}

SkyMask heuristic_sky_mask(const RasterImage& img) {
    if (img.channels != 3) throw Error(ErrorCode::InvalidArgument, "sky mask needs a 3-channel image");
    SkyMask colored(img.width, img.height, false);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            colored.set(x, y, is_sky_colored(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2)));
        }
    }
    SkyMask mask(img.width, img.height, false);
    std::deque<std::pair<int, int>> frontier;
    for (int x = 0; x < img.width; ++x) {
        if (colored.at(x, 0)) {
            mask.set(x, 0, true);
            frontier.emplace_back(x, 0);
        }
    }
    constexpr int kDx[4] = {1, -1, 0, 0};
    constexpr int kDy[4] = {0, 0, 1, -1};
    while (!frontier.empty()) {
        const auto [x, y] = frontier.front();
        frontier.pop_front();
        for (int k = 0; k < 4; ++k) {
            const int nx = x + kDx[k];
            const int ny = y + kDy[k];
            if (nx < 0 || ny < 0 || nx >= img.width || ny >= img.height) continue;
            if (!colored.at(nx, ny) || mask.at(nx, ny)) continue;
            mask.set(nx, ny, true);
            frontier.emplace_back(nx, ny);
        }
    }
    if (mask.count() == 0) throw Error(ErrorCode::NoSkyDetected, "no sky-colored region touches the top edge");
    return mask;
}

} // namespace skycast::imaging
