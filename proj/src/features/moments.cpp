#include <cmath>
#include <string>

#include "skycast/error.hpp"
#include "skycast/features.hpp"

namespace skycast::features {

MomentSet compute_moments(std::span<const double> values, const SkyMask* mask) {
    if (mask != nullptr && mask->bits.size() != values.size()) {
        throw Error(ErrorCode::DimensionMismatch, "mask size does not match value count");
    }
    auto included = [&](std::size_t i) { return mask == nullptr || mask->bits[i] != 0; };

    std::size_t n = 0;
    double sum = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!included(i)) continue;
        sum += values[i];
        ++n;
    }
    if (n == 0) throw Error(ErrorCode::EmptyInput, "no values selected for moment computation");
    const double mean = sum / static_cast<double>(n);

    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!included(i)) continue;
        const double d = values[i] - mean;
        const double d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    m2 *= inv_n;
    m3 *= inv_n;
    m4 *= inv_n;

    MomentSet out;
    out.mean = mean;
    out.variance = m2;
    if (m2 < kDegenerateVariance) return out;
    out.skewness = m3 / std::pow(m2, 1.5);
    out.kurtosis = m4 / (m2 * m2) - 3.0;
    return out;
}

FeatureVector extract_features(const RasterImage& img, const SkyMask& mask, const GaborBank& bank) {
    if (mask.width != img.width || mask.height != img.height) {
        throw Error(ErrorCode::DimensionMismatch, "mask dimensions do not match image");
    }
    if (mask.count() == 0) throw Error(ErrorCode::EmptyInput, "sky mask is empty");
    const Plane gray = luminance_plane(img);
    FeatureVector fv;
    fv.schema_id = bank.schema_id();
    fv.values.reserve(bank.feature_length());
    for (const GaborParams& p : bank.params) {
        const Plane mag = magnitude_response(gray, p);
        const MomentSet m = compute_moments(mag.values, &mask);
        fv.values.insert(fv.values.end(), {m.mean, m.variance, m.skewness, m.kurtosis});
    }
    return fv;
}

std::vector<MomentSet> moments_by_filter(const FeatureVector& fv) {
    if (fv.values.size() % 4 != 0) throw Error(ErrorCode::SchemaMismatch, "feature length is not a multiple of 4");
    std::vector<MomentSet> out(fv.values.size() / 4);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = {fv.values[4 * i], fv.values[4 * i + 1], fv.values[4 * i + 2], fv.values[4 * i + 3]};
    }
    return out;
}

} // namespace skycast::features
