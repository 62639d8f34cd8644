#pragma once

#include <span>
#include <string>
#include <vector>

#include "skycast/imaging.hpp"

namespace skycast::features {

using imaging::RasterImage;
using imaging::SkyMask;

/// One Gabor pair. Kernel offsets i (horizontal) and j (vertical) span
/// [-half_width, half_width].
struct GaborParams {
    double theta = 0.0;   ///< orientation, radians
    double freq = 0.1;    ///< cycles per pixel
    double sigma = 5.6;   ///< Gaussian envelope scale, pixels
    int half_width = 17;  ///< kernel is (2R+1) x (2R+1)
    double amp_even = 1.0;
    double amp_odd = 1.0;

    void validate() const;

    /// Envelope tied to frequency: sigma = 0.56 / f, R = ceil(3 sigma).
    static GaborParams for_frequency(double theta, double freq);
};

/// Dense 2D real array; `values` is row-major with `height` rows.
struct Plane {
    int width = 0;
    int height = 0;
    std::vector<double> values;

    Plane() = default;
    Plane(int w, int h, double fill = 0.0) : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {}

    double& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
    double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

/// Convolution kernel; anchor is the center element (width/2, height/2).
using Kernel2D = Plane;

struct GaborKernels {
    Kernel2D even;
    Kernel2D odd;

    /// Entry at offset (i, j) from the kernel center.
    static double offset(const Kernel2D& k, int i, int j) { return k.at(i + k.width / 2, j + k.height / 2); }
};

/// Evaluates the cosine/sine pair at integer offsets, subtracts the mean of
/// the even kernel and scales both to unit L2 norm.
GaborKernels make_gabor_kernels(const GaborParams& p);

/// Ordered filter bank, orientation-major: index = o * n_freq + f.
struct GaborBank {
    std::vector<double> orientations_deg;
    std::vector<double> frequencies;
    std::vector<GaborParams> params;

    static GaborBank make(std::vector<double> orientations_deg, std::vector<double> frequencies);
    /// 4 orientations x 3 frequencies.
    static GaborBank standard();

    std::size_t size() const { return params.size(); }
    std::size_t feature_length() const { return params.size() * 4; }
    std::string schema_id() const;

    double orientation_deg_of(std::size_t filter) const { return orientations_deg[filter / frequencies.size()]; }
    double frequency_of(std::size_t filter) const { return frequencies[filter % frequencies.size()]; }
};

/// True convolution (kernel flipped) with clamp-to-edge padding, same-size output.
Plane convolve_2d(const Plane& img, const Kernel2D& kernel);
Plane convolve_2d(const RasterImage& gray, const Kernel2D& kernel);

/// Grayscale plane from an image (Rec.601 luminance for color input).
Plane luminance_plane(const RasterImage& img);

struct PairResponse {
    Plane even;
    Plane odd;
};

/// Even/odd responses computed through the complex-separable factorization
/// of the Gabor pair. Equals convolve_2d with make_gabor_kernels(p) up to
/// rounding, at O(R) instead of O(R^2) per pixel.
PairResponse gabor_pair_response(const Plane& gray, const GaborParams& p);

/// Per-pixel sqrt(even^2 + odd^2).
Plane magnitude_response(const RasterImage& img, const GaborParams& p);
Plane magnitude_response(const Plane& gray, const GaborParams& p);

struct MomentSet {
    double mean = 0.0;
    double variance = 0.0;
    double skewness = 0.0;
    double kurtosis = 0.0;  ///< excess
};

/// Variance below this is treated as degenerate: skewness = kurtosis = 0.
inline constexpr double kDegenerateVariance = 1e-12;

/// Population moments over the included values. `mask`, when given, must have
/// one entry per value (row-major).
MomentSet compute_moments(std::span<const double> values, const SkyMask* mask = nullptr);

struct FeatureVector {
    std::vector<double> values;
    std::string schema_id;

    friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

/// For each filter in bank order: mean, variance, skewness, kurtosis of the
/// masked magnitude response.
FeatureVector extract_features(const RasterImage& img, const SkyMask& mask, const GaborBank& bank);

/// Per-filter moments alongside the flat vector, for reporting.
std::vector<MomentSet> moments_by_filter(const FeatureVector& fv);

} // namespace skycast::features
