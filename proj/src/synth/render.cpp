#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "skycast/error.hpp"
#include "skycast/rng.hpp"
#include "skycast/synth.hpp"
#include "skycast_embedded_data.hpp"

namespace skycast::synth {

namespace {

using nlohmann::json;

// Good and Unhealthy/VeryUnhealthy follow the published examples; the two
// middle grades are written in the same register.
constexpr std::array<std::string_view, aqi::kGradeCount> kPrompts = {
    "clear blue sky",
    "a mostly blue sky with a faint veil of haze near the horizon",
    "a pale washed-out sky with noticeable haze and muted colors",
    "a hazy sky with visible particulate matter",
    "thick smog with reddish haze obscuring sunlight",
};

inline double smoothstep(double e0, double e1, double x) {
    const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

std::array<double, 3> channel_means(const RasterImage& img) {
    std::array<double, 3> m{0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        for (int c = 0; c < 3; ++c) m[c] += img.pixels[i * 3 + c];
    }
    for (double& v : m) v /= static_cast<double>(img.pixel_count());
    return m;
}

/// contrast about the channel mean -> warmth -> haze blend. No clamping.
void apply_forward(std::vector<double>& px, std::size_t n, const GradeRender& r, const std::array<double, 3>& mean) {
    for (std::size_t i = 0; i < n; ++i) {
        double* p = &px[i * 3];
        for (int c = 0; c < 3; ++c) p[c] = mean[c] + r.contrast_scale * (p[c] - mean[c]);
        p[0] += r.warmth_shift;
        p[2] -= r.warmth_shift;
        for (int c = 0; c < 3; ++c) p[c] = (1.0 - r.haze_opacity) * p[c] + r.haze_opacity * r.haze_color[c];
    }
}

void apply_inverse(std::vector<double>& px, std::size_t n, const GradeRender& r) {
    for (std::size_t i = 0; i < n; ++i) {
        double* p = &px[i * 3];
        for (int c = 0; c < 3; ++c) p[c] = (p[c] - r.haze_opacity * r.haze_color[c]) / (1.0 - r.haze_opacity);
        p[0] -= r.warmth_shift;
        p[2] += r.warmth_shift;
    }
    // The forward contrast step preserves channel means, so the current mean
    // is the pivot that was used.
    std::array<double, 3> mean{0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i) {
        for (int c = 0; c < 3; ++c) mean[c] += px[i * 3 + c];
    }
    for (double& v : mean) v /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (int c = 0; c < 3; ++c) px[i * 3 + c] = mean[c] + (px[i * 3 + c] - mean[c]) / r.contrast_scale;
    }
}

GradeRender grade_from_json(const json& j, const std::array<double, 3>& haze_color) {
    GradeRender r;
    r.haze_color = haze_color;
    r.haze_opacity = j.at("haze_opacity").get<double>();
    r.contrast_scale = j.at("contrast_scale").get<double>();
    r.warmth_shift = j.at("warmth_shift").get<double>();
    r.noise_gain = j.value("noise_gain", 0.0);
    if (j.contains("haze_color")) {
        const auto hc = j.at("haze_color");
        r.haze_color = {hc.at(0).get<double>(), hc.at(1).get<double>(), hc.at(2).get<double>()};
    }
    return r;
}

} // namespace

std::string_view prompt_for_grade(Grade g) { return kPrompts[aqi::index_of(g)]; }

void RenderParams::validate() const {
    for (Grade g : aqi::kAllGrades) {
        const GradeRender& r = (*this)[g];
        const std::string name(aqi::grade_id(g));
        if (!(r.haze_opacity >= 0.0 && r.haze_opacity < 1.0)) {
            throw Error(ErrorCode::InvalidArgument, name + ": haze_opacity must be in [0,1)");
        }
        if (!(r.contrast_scale > 0.0 && r.contrast_scale <= 1.0)) {
            throw Error(ErrorCode::InvalidArgument, name + ": contrast_scale must be in (0,1]");
        }
        if (!(r.noise_gain >= 0.0 && r.noise_gain <= 1.0)) {
            throw Error(ErrorCode::InvalidArgument, name + ": noise_gain must be in [0,1]");
        }
        if (!std::isfinite(r.warmth_shift)) throw Error(ErrorCode::InvalidArgument, name + ": warmth_shift not finite");
        for (double c : r.haze_color) {
            if (!(c >= 0.0 && c <= 1.0)) throw Error(ErrorCode::InvalidArgument, name + ": haze_color outside [0,1]");
        }
    }
    for (std::size_t i = 1; i < aqi::kGradeCount; ++i) {
        if (!(grades[i].haze_opacity > grades[i - 1].haze_opacity)) {
            throw Error(ErrorCode::InvalidArgument, "haze_opacity must increase strictly with severity");
        }
        if (!(grades[i].contrast_scale < grades[i - 1].contrast_scale)) {
            throw Error(ErrorCode::InvalidArgument, "contrast_scale must decrease strictly with severity");
        }
    }
}

RenderParams RenderParams::from_json(std::string_view text) {
    RenderParams params;
    try {
        const json doc = json::parse(text);
        std::array<double, 3> haze{0.78, 0.74, 0.68};
        if (doc.contains("haze_color")) {
            const auto hc = doc.at("haze_color");
            haze = {hc.at(0).get<double>(), hc.at(1).get<double>(), hc.at(2).get<double>()};
        }
        const auto& grades = doc.at("grades");
        for (Grade g : aqi::kAllGrades) {
            params[g] = grade_from_json(grades.at(std::string(aqi::grade_id(g))), haze);
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("render params: ") + e.what());
    }
    params.validate();
    return params;
}

RenderParams RenderParams::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

RenderParams RenderParams::defaults() {
    static const RenderParams params = from_json(embedded::kRenderParamsJson);
    return params;
}

std::string RenderParams::to_json() const {
    json doc;
    doc["version"] = 1;
    for (Grade g : aqi::kAllGrades) {
        const GradeRender& r = (*this)[g];
        doc["grades"][std::string(aqi::grade_id(g))] = {
            {"haze_opacity", r.haze_opacity}, {"contrast_scale", r.contrast_scale},
            {"warmth_shift", r.warmth_shift}, {"noise_gain", r.noise_gain},
            {"haze_color", {r.haze_color[0], r.haze_color[1], r.haze_color[2]}}};
    }
    return doc.dump(2);
}

std::vector<double> value_noise(int width, int height, int cell, std::uint64_t seed) {
    if (cell < 1) throw Error(ErrorCode::InvalidArgument, "noise cell must be >= 1");
    const int gw = width / cell + 2;
    const int gh = height / cell + 2;
    Rng rng(seed);
    std::vector<double> lattice(static_cast<std::size_t>(gw) * gh);
    for (double& v : lattice) v = rng.uniform(-1.0, 1.0);
    std::vector<double> out(static_cast<std::size_t>(width) * height);
    for (int y = 0; y < height; ++y) {
        const double fy = static_cast<double>(y) / cell;
        const int iy = static_cast<int>(fy);
        const double ty = smoothstep(0.0, 1.0, fy - iy);
        for (int x = 0; x < width; ++x) {
            const double fx = static_cast<double>(x) / cell;
            const int ix = static_cast<int>(fx);
            const double tx = smoothstep(0.0, 1.0, fx - ix);
            const double v00 = lattice[static_cast<std::size_t>(iy) * gw + ix];
            const double v10 = lattice[static_cast<std::size_t>(iy) * gw + ix + 1];
            const double v01 = lattice[static_cast<std::size_t>(iy + 1) * gw + ix];
            const double v11 = lattice[static_cast<std::size_t>(iy + 1) * gw + ix + 1];
            const double top = v00 + tx * (v10 - v00);
            const double bottom = v01 + tx * (v11 - v01);
            out[static_cast<std::size_t>(y) * width + x] = top + ty * (bottom - top);
        }
    }
    return out;
}

RasterImage render_base_sky(int size, std::uint64_t seed) {
    if (size < 1) throw Error(ErrorCode::ZeroDimension, "sky size must be >= 1");
    Rng rng(seed);
    const std::array<double, 3> zenith = {rng.uniform(0.16, 0.26), rng.uniform(0.38, 0.48), rng.uniform(0.80, 0.90)};
    const std::array<double, 3> horizon = {rng.uniform(0.60, 0.70), rng.uniform(0.74, 0.82), rng.uniform(0.91, 0.97)};
    const double coverage = rng.uniform(0.42, 0.52);
    const double density = rng.uniform(0.80, 0.90);

    // Lattice cells scale with the image so cloud shapes are resolution independent.
    const auto cell = [size](double fraction) { return std::max(1, static_cast<int>(std::lround(size * fraction))); };
    const auto coarse = value_noise(size, size, cell(0.16), derive_seed(seed, 1));
    const auto medium = value_noise(size, size, cell(0.06), derive_seed(seed, 2));
    const auto fine = value_noise(size, size, cell(0.025), derive_seed(seed, 3));
    const auto shade = value_noise(size, size, cell(0.10), derive_seed(seed, 4));

    RasterImage img(size, size, 3);
    for (int y = 0; y < size; ++y) {
        const double t = size > 1 ? std::pow(static_cast<double>(y) / (size - 1), 0.8) : 0.0;
        for (int x = 0; x < size; ++x) {
            const std::size_t k = static_cast<std::size_t>(y) * size + x;
            const double n = 0.5 + 0.5 * (0.55 * coarse[k] + 0.30 * medium[k] + 0.15 * fine[k]);
            const double alpha = density * smoothstep(coverage, coverage + 0.25, n);
            const double cloud = 0.93 + 0.05 * shade[k];
            for (int c = 0; c < 3; ++c) {
                const double sky = (1.0 - t) * zenith[c] + t * horizon[c];
                img.at(x, y, c) = std::clamp((1.0 - alpha) * sky + alpha * cloud, 0.0, 1.0);
            }
        }
    }
    return img;
}

RasterImage render_variant(const RasterImage& img, Grade target, const RenderParams& params, std::uint64_t seed,
                           Grade source) {
    if (img.channels != 3) throw Error(ErrorCode::GrayscaleInput, "counterfactual rendering needs a color image");
    if (source == target) return img;
    const GradeRender& to = params[target];
    const std::size_t n = img.pixel_count();
    std::vector<double> px = img.pixels;
    if (source != Grade::Good) {
        apply_inverse(px, n, params[source]);
        for (double& v : px) v = std::clamp(v, 0.0, 1.0);
    }
    if (source == Grade::Good && to.is_identity()) return img;

    RasterImage work(img.width, img.height, 3);
    work.pixels = std::move(px);
    const auto mean = channel_means(work);
    apply_forward(work.pixels, n, to, mean);
    if (to.noise_gain > 0.0) {
        const auto noise = value_noise(img.width, img.height, 4, derive_seed(seed, 0x5EED0000 + aqi::index_of(target)));
        for (std::size_t i = 0; i < n; ++i) {
            for (int c = 0; c < 3; ++c) work.pixels[i * 3 + c] += to.noise_gain * noise[i];
        }
    }
    for (double& v : work.pixels) v = std::clamp(v, 0.0, 1.0);
    return work;
}

std::vector<Variant> synthesize_all_grades(const RasterImage& img, const RenderParams& params, std::uint64_t seed,
                                           Grade source) {
    std::vector<Variant> out;
    out.reserve(aqi::kGradeCount);
    for (Grade g : aqi::kAllGrades) out.push_back({g, render_variant(img, g, params, seed, source)});
    return out;
}

} // namespace skycast::synth
