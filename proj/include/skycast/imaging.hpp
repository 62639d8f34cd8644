#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "skycast/rng.hpp"

namespace skycast::imaging {

/// Working resolution of the feature pipeline.
inline constexpr int kWorkingSize = 200;

/// Decoded pixel grid. Intensities are row-major, interleaved per pixel, in [0,1].
struct RasterImage {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> pixels;

    RasterImage() = default;
    RasterImage(int w, int h, int c, double fill = 0.0);

    double& at(int x, int y, int c = 0) {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    double at(int x, int y, int c = 0) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
    bool empty() const { return pixels.empty(); }

    /// Throws InvalidArgument when dimensions, channel count or value range are off.
    void validate() const;

    friend bool operator==(const RasterImage&, const RasterImage&) = default;
};

/// One flag per pixel, true = sky.
struct SkyMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;

    SkyMask() = default;
    SkyMask(int w, int h, bool fill);

    bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
    void set(int x, int y, bool v) { bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
    std::size_t count() const;

    friend bool operator==(const SkyMask&, const SkyMask&) = default;
};

struct AugmentationSpec {
    bool horizontal_flip = false;
    bool contrast_normalize = false;
    double gaussian_blur_sigma = 0.0;
    double rotation_degrees = 0.0;
    std::uint64_t seed = 0;

    static constexpr double kMaxRotationDegrees = 10.0;
    static constexpr double kMaxBlurSigma = 1.5;

    bool is_identity() const;
    void validate() const;

    /// Draws flip/normalize coin flips, sigma in [0, kMaxBlurSigma] (zero half
    /// the time) and rotation in [-10, 10] degrees from `seed`.
    static AugmentationSpec random(std::uint64_t seed);

    friend bool operator==(const AugmentationSpec&, const AugmentationSpec&) = default;
};

// --- codec -----------------------------------------------------------------

RasterImage decode_image(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_png(const RasterImage& img);

RasterImage load_image(const std::filesystem::path& path);
void save_png(const RasterImage& img, const std::filesystem::path& path);

/// Loads a precomputed mask file: any nonzero sample marks sky.
SkyMask load_mask(const std::filesystem::path& path);
SkyMask mask_from_image(const RasterImage& img);

/// round-half-up of v*255 after clamping to [0,1].
std::uint8_t quantize(double v);

// --- color -----------------------------------------------------------------

/// Rec.601 luma.
inline double luminance(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

/// HSV saturation, (max - min) / max; 0 for black.
double saturation(double r, double g, double b);

RasterImage to_grayscale(const RasterImage& img);
double mean_saturation(const RasterImage& img);

// --- geometry and filtering ------------------------------------------------

RasterImage resize_bilinear(const RasterImage& img, int out_w, int out_h);
SkyMask resize_mask(const SkyMask& mask, int out_w, int out_h);

RasterImage flip_horizontal(const RasterImage& img);
RasterImage rotate(const RasterImage& img, double degrees);
RasterImage gaussian_blur(const RasterImage& img, double sigma);
RasterImage contrast_normalize(const RasterImage& img);

/// rotate -> flip -> blur -> contrast normalization.
RasterImage augment(const RasterImage& img, const AugmentationSpec& spec);

/// Geometric part of `augment` applied to a mask (rotation sampled nearest).
SkyMask augment_mask(const SkyMask& mask, const AugmentationSpec& spec);

// --- sky segmentation ------------------------------------------------------

bool is_sky_colored(double r, double g, double b);

/// Sky-colored pixels 4-connected to the top row. Throws NoSkyDetected when
/// the result is empty.
SkyMask heuristic_sky_mask(const RasterImage& img);

} // namespace skycast::imaging
