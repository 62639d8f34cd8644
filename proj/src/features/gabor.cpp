#include <cmath>
#include <sstream>

#include "skycast/error.hpp"
#include "skycast/features.hpp"

namespace skycast::features {

void GaborParams::validate() const {
    if (!(freq > 0.0) || !(sigma > 0.0) || half_width < 1 || !(amp_even > 0.0) || !(amp_odd > 0.0) ||
        !std::isfinite(theta)) {
        throw Error(ErrorCode::InvalidArgument, "gabor params need freq, sigma, amplitudes > 0 and half_width >= 1");
    }
}

GaborParams GaborParams::for_frequency(double theta, double freq) {
    GaborParams p;
    p.theta = theta;
    p.freq = freq;
    p.sigma = 0.56 / freq;
    p.half_width = static_cast<int>(std::ceil(3.0 * p.sigma));
    return p;
}

GaborKernels make_gabor_kernels(const GaborParams& p) {
    p.validate();
    const int r = p.half_width;
    const int size = 2 * r + 1;
    GaborKernels k{Kernel2D(size, size), Kernel2D(size, size)};
    const double ct = std::cos(p.theta);
    const double st = std::sin(p.theta);
    double even_sum = 0.0;
    for (int j = -r; j <= r; ++j) {
        for (int i = -r; i <= r; ++i) {
            const double envelope = std::exp(-(i * i + j * j) / (2.0 * p.sigma * p.sigma));
            const double phase = 2.0 * M_PI * p.freq * (i * ct + j * st);
            const double e = p.amp_even * envelope * std::cos(phase);
            k.even.at(i + r, j + r) = e;
            k.odd.at(i + r, j + r) = p.amp_odd * envelope * std::sin(phase);
            even_sum += e;
        }
    }
    const double dc = even_sum / static_cast<double>(size * size);
    double even_norm = 0.0, odd_norm = 0.0;
    for (std::size_t n = 0; n < k.even.values.size(); ++n) {
        k.even.values[n] -= dc;
        even_norm += k.even.values[n] * k.even.values[n];
        odd_norm += k.odd.values[n] * k.odd.values[n];
    }
    even_norm = std::sqrt(even_norm);
    odd_norm = std::sqrt(odd_norm);
    for (std::size_t n = 0; n < k.even.values.size(); ++n) {
        k.even.values[n] /= even_norm;
        k.odd.values[n] /= odd_norm;
    }
    return k;
}

GaborBank GaborBank::make(std::vector<double> orientations_deg, std::vector<double> frequencies) {
    if (orientations_deg.empty() || frequencies.empty()) {
        throw Error(ErrorCode::InvalidArgument, "gabor bank needs at least one orientation and frequency");
    }
    GaborBank bank;
    bank.orientations_deg = std::move(orientations_deg);
    bank.frequencies = std::move(frequencies);
    for (double o : bank.orientations_deg) {
        for (double f : bank.frequencies) bank.params.push_back(GaborParams::for_frequency(o * M_PI / 180.0, f));
    }
    return bank;
}

GaborBank GaborBank::standard() { return make({0.0, 45.0, 90.0, 135.0}, {0.05, 0.10, 0.20}); }

std::string GaborBank::schema_id() const {
    std::ostringstream os;
    os << "gabor-moments/v1;o=";
    for (std::size_t i = 0; i < orientations_deg.size(); ++i) os << (i ? "," : "") << orientations_deg[i];
    os << ";f=";
    for (std::size_t i = 0; i < frequencies.size(); ++i) os << (i ? "," : "") << frequencies[i];
    return os.str();
}

} // namespace skycast::features
