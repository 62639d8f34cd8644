#include <algorithm>
#include <cmath>

#include "skycast/error.hpp"
#include "skycast/synth.hpp"

namespace skycast::synth {

namespace {

using features::Plane;

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::vector<double> window_taps(int size) {
    std::vector<double> taps(size);
    const int r = size / 2;
    double sum = 0.0;
    for (int k = -r; k <= r; ++k) {
        taps[k + r] = std::exp(-(k * k) / (2.0 * kSsimSigma * kSsimSigma));
        sum += taps[k + r];
    }
    for (double& t : taps) t /= sum;
    return taps;
}

// Valid-mode separable filtering: output is (w - n + 1) x (h - n + 1).
Plane filter_valid(const Plane& in, const std::vector<double>& taps) {
    const int n = static_cast<int>(taps.size());
    const int ow = in.width - n + 1;
    const int oh = in.height - n + 1;
    Plane rows(ow, in.height);
    for (int y = 0; y < in.height; ++y) {
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int k = 0; k < n; ++k) acc += taps[k] * in.at(x + k, y);
            rows.at(x, y) = acc;
        }
    }
    Plane out(ow, oh);
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int k = 0; k < n; ++k) acc += taps[k] * rows.at(x, y + k);
            out.at(x, y) = acc;
        }
    }
    return out;
}

Plane product(const Plane& a, const Plane& b) {
    Plane out(a.width, a.height);
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = a.values[i] * b.values[i];
    return out;
}

} // namespace

double ssim(const RasterImage& a, const RasterImage& b) {
    if (a.width != b.width || a.height != b.height) {
        throw Error(ErrorCode::DimensionMismatch, "ssim needs images of equal size");
    }
    const Plane x = features::luminance_plane(a);
    const Plane y = features::luminance_plane(b);
    int window = std::min({kSsimWindow, a.width, a.height});
    if (window % 2 == 0) --window;
    const auto taps = window_taps(window);

    const Plane mu_x = filter_valid(x, taps);
    const Plane mu_y = filter_valid(y, taps);
    const Plane xx = filter_valid(product(x, x), taps);
    const Plane yy = filter_valid(product(y, y), taps);
    const Plane xy = filter_valid(product(x, y), taps);

    double total = 0.0;
    for (std::size_t i = 0; i < mu_x.values.size(); ++i) {
        const double mx = mu_x.values[i];
        const double my = mu_y.values[i];
        const double vx = xx.values[i] - mx * mx;
        const double vy = yy.values[i] - my * my;
        const double cxy = xy.values[i] - mx * my;
        total += ((2.0 * mx * my + kC1) * (2.0 * cxy + kC2)) / ((mx * mx + my * my + kC1) * (vx + vy + kC2));
    }
    return total / static_cast<double>(mu_x.values.size());
}

double frechet_feature_distance(const std::vector<features::FeatureVector>& set_a,
                                const std::vector<features::FeatureVector>& set_b) {
    if (set_a.size() < 2 || set_b.size() < 2) throw Error(ErrorCode::SetTooSmall, "each set needs >= 2 vectors");
    const std::size_t d = set_a.front().values.size();
    const std::string& schema = set_a.front().schema_id;
    for (const auto* set : {&set_a, &set_b}) {
        for (const auto& fv : *set) {
            if (fv.values.size() != d || fv.schema_id != schema) {
                throw Error(ErrorCode::SchemaMismatch, "feature vectors do not share a schema");
            }
        }
    }
    auto stats = [d](const std::vector<features::FeatureVector>& set) {
        std::vector<double> mean(d, 0.0), var(d, 0.0);
        for (const auto& fv : set) {
            for (std::size_t i = 0; i < d; ++i) mean[i] += fv.values[i];
        }
        for (double& m : mean) m /= static_cast<double>(set.size());
        for (const auto& fv : set) {
            for (std::size_t i = 0; i < d; ++i) {
                const double dv = fv.values[i] - mean[i];
                var[i] += dv * dv;
            }
        }
        for (double& v : var) v /= static_cast<double>(set.size() - 1);
        return std::pair{mean, var};
    };
    const auto [mean_a, var_a] = stats(set_a);
    const auto [mean_b, var_b] = stats(set_b);
    double distance = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double dm = mean_a[i] - mean_b[i];
        distance += dm * dm + var_a[i] + var_b[i] - 2.0 * std::sqrt(var_a[i] * var_b[i]);
    }
    // Rounding can leave a tiny negative residue for identical inputs.
    return std::max(distance, 0.0);
}

double consistency_rate(const ImageClassifier& classifier, const std::vector<Variant>& variants) {
    if (variants.empty()) throw Error(ErrorCode::EmptyInput, "no variants to score");
    std::size_t hits = 0;
    for (const auto& v : variants) {
        if (classifier(v.image) == v.grade) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(variants.size());
}

} // namespace skycast::synth
