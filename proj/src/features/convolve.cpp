#include <cmath>
#include <string>

#include "skycast/error.hpp"
#include "skycast/features.hpp"

namespace skycast::features {

namespace {

inline int clamp_index(int v, int n) { return v < 0 ? 0 : (v >= n ? n - 1 : v); }

void check_kernel_fits(int img_w, int img_h, int k_w, int k_h) {
    if (k_w > img_w || k_h > img_h) {
        throw Error(ErrorCode::KernelTooLarge, "kernel " + std::to_string(k_w) + "x" + std::to_string(k_h) +
                                                   " exceeds image " + std::to_string(img_w) + "x" +
                                                   std::to_string(img_h));
    }
}

// taps[k + r] weights offset k; out(x) = sum_k taps(k) * in(x - k).
Plane convolve_rows(const Plane& in, const std::vector<double>& taps) {
    const int r = static_cast<int>(taps.size() / 2);
    Plane out(in.width, in.height);
    for (int y = 0; y < in.height; ++y) {
        const double* row = &in.values[static_cast<std::size_t>(y) * in.width];
        for (int x = 0; x < in.width; ++x) {
            double acc = 0.0;
            if (x - r >= 0 && x + r < in.width) {
                for (int k = -r; k <= r; ++k) acc += taps[k + r] * row[x - k];
            } else {
                for (int k = -r; k <= r; ++k) acc += taps[k + r] * row[clamp_index(x - k, in.width)];
            }
            out.at(x, y) = acc;
        }
    }
    return out;
}

Plane convolve_cols(const Plane& in, const std::vector<double>& taps) {
    const int r = static_cast<int>(taps.size() / 2);
    Plane out(in.width, in.height);
    for (int y = 0; y < in.height; ++y) {
        double* dst = &out.values[static_cast<std::size_t>(y) * in.width];
        for (int k = -r; k <= r; ++k) {
            const double w = taps[k + r];
            const double* src = &in.values[static_cast<std::size_t>(clamp_index(y - k, in.height)) * in.width];
            for (int x = 0; x < in.width; ++x) dst[x] += w * src[x];
        }
    }
    return out;
}

} // namespace

Plane convolve_2d(const Plane& img, const Kernel2D& kernel) {
    if (kernel.width < 1 || kernel.height < 1) throw Error(ErrorCode::InvalidArgument, "empty kernel");
    check_kernel_fits(img.width, img.height, kernel.width, kernel.height);
    const int ax = kernel.width / 2;
    const int ay = kernel.height / 2;
    Plane out(img.width, img.height);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            double acc = 0.0;
            for (int kj = 0; kj < kernel.height; ++kj) {
                const int sy = clamp_index(y - (kj - ay), img.height);
                for (int ki = 0; ki < kernel.width; ++ki) {
                    const int sx = clamp_index(x - (ki - ax), img.width);
                    acc += kernel.at(ki, kj) * img.at(sx, sy);
                }
            }
            out.at(x, y) = acc;
        }
    }
    return out;
}

Plane luminance_plane(const RasterImage& img) {
    Plane out(img.width, img.height);
    if (img.channels == 1) {
        out.values = img.pixels;
        return out;
    }
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        const double* p = &img.pixels[i * 3];
        out.values[i] = imaging::luminance(p[0], p[1], p[2]);
    }
    return out;
}

Plane convolve_2d(const RasterImage& gray, const Kernel2D& kernel) {
    if (gray.channels != 1) throw Error(ErrorCode::InvalidArgument, "convolve_2d expects a single-channel image");
    return convolve_2d(luminance_plane(gray), kernel);
}

PairResponse gabor_pair_response(const Plane& gray, const GaborParams& p) {
    p.validate();
    const int r = p.half_width;
    const int n = 2 * r + 1;
    check_kernel_fits(gray.width, gray.height, n, n);

    // exp(-(i^2+j^2)/2s^2) cos(a i + b j) = g(i)g(j)[cos(ai)cos(bj) - sin(ai)sin(bj)], likewise for sin.
    const double a = 2.0 * M_PI * p.freq * std::cos(p.theta);
    const double b = 2.0 * M_PI * p.freq * std::sin(p.theta);
    std::vector<double> cx(n), sx(n), cy(n), sy(n), ones(n, 1.0);
    for (int k = -r; k <= r; ++k) {
        const double g = std::exp(-(k * k) / (2.0 * p.sigma * p.sigma));
        cx[k + r] = g * std::cos(a * k);
        sx[k + r] = g * std::sin(a * k);
        cy[k + r] = g * std::cos(b * k);
        sy[k + r] = g * std::sin(b * k);
    }

    double even_sum = 0.0, even_sq = 0.0, odd_sq = 0.0;
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            const double e = cx[i] * cy[j] - sx[i] * sy[j];
            const double o = sx[i] * cy[j] + cx[i] * sy[j];
            even_sum += e;
            even_sq += e * e;
            odd_sq += o * o;
        }
    }
    const double count = static_cast<double>(n) * n;
    const double dc = even_sum / count;
    const double even_norm = std::sqrt(even_sq - count * dc * dc);
    const double odd_norm = std::sqrt(odd_sq);

    const Plane hc = convolve_rows(gray, cx);
    const Plane hs = convolve_rows(gray, sx);
    const Plane h1 = convolve_rows(gray, ones);
    const Plane cc = convolve_cols(hc, cy);
    const Plane ss = convolve_cols(hs, sy);
    const Plane sc = convolve_cols(hs, cy);
    const Plane cs = convolve_cols(hc, sy);
    const Plane box = convolve_cols(h1, ones);

    PairResponse out{Plane(gray.width, gray.height), Plane(gray.width, gray.height)};
    for (std::size_t k = 0; k < gray.values.size(); ++k) {
        out.even.values[k] = (cc.values[k] - ss.values[k] - dc * box.values[k]) / even_norm;
        out.odd.values[k] = (sc.values[k] + cs.values[k]) / odd_norm;
    }
    return out;
}

Plane magnitude_response(const Plane& gray, const GaborParams& p) {
    const PairResponse pair = gabor_pair_response(gray, p);
    Plane mag(gray.width, gray.height);
    for (std::size_t k = 0; k < mag.values.size(); ++k) {
        mag.values[k] = std::hypot(pair.even.values[k], pair.odd.values[k]);
    }
    return mag;
}

Plane magnitude_response(const RasterImage& img, const GaborParams& p) {
    return magnitude_response(luminance_plane(img), p);
}

} // namespace skycast::features
