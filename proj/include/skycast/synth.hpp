#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include "skycast/aqi.hpp"
#include "skycast/features.hpp"
#include "skycast/imaging.hpp"

namespace skycast::synth {

using aqi::Grade;
using imaging::RasterImage;

/// Text prompt describing the sky for a grade.
std::string_view prompt_for_grade(Grade g);

/// Atmospheric transform for one grade.
struct GradeRender {
    double haze_opacity = 0.0;
    std::array<double, 3> haze_color = {0.78, 0.74, 0.68};
    double contrast_scale = 1.0;
    double warmth_shift = 0.0;  ///< added to red, subtracted from blue
    double noise_gain = 0.0;

    bool is_identity() const {
        return haze_opacity == 0.0 && contrast_scale == 1.0 && warmth_shift == 0.0 && noise_gain == 0.0;
    }
};

struct RenderParams {
    std::array<GradeRender, aqi::kGradeCount> grades;

    const GradeRender& operator[](Grade g) const { return grades[aqi::index_of(g)]; }
    GradeRender& operator[](Grade g) { return grades[aqi::index_of(g)]; }

    /// Ranges per field; haze strictly increasing and contrast strictly
    /// decreasing with severity.
    void validate() const;

    static RenderParams defaults();
    static RenderParams from_json(std::string_view text);
    static RenderParams load(const std::filesystem::path& path);
    std::string to_json() const;
};

/// Renders `img` as if observed under `target`. The input is assumed to show
/// `source` conditions; that grade's transform is inverted first (noise is not
/// recoverable and is left in place). With source == Good the output is the
/// forward transform only, and source == target returns the input unchanged.
RasterImage render_variant(const RasterImage& img, Grade target, const RenderParams& params, std::uint64_t seed,
                           Grade source = Grade::Good);

struct Variant {
    Grade grade;
    RasterImage image;
};

/// One variant per grade, severity order.
std::vector<Variant> synthesize_all_grades(const RasterImage& img, const RenderParams& params, std::uint64_t seed,
                                           Grade source = Grade::Good);

/// Seeded lattice value noise in [-1, 1], bilinear-smoothstep interpolated.
std::vector<double> value_noise(int width, int height, int cell, std::uint64_t seed);

/// Procedural clear sky: vertical zenith-to-horizon gradient plus a seeded
/// value-noise cloud layer. This is the Good-grade appearance.
RasterImage render_base_sky(int size, std::uint64_t seed);

/// Mean local SSIM on luminance: 11x11 Gaussian window (sigma 1.5), K1 0.01,
/// K2 0.03, dynamic range 1, valid positions only. Images smaller than the
/// window use a window shrunk to the largest odd size that fits.
double ssim(const RasterImage& a, const RasterImage& b);

/// |muA - muB|^2 + sum_i (vA_i + vB_i - 2 sqrt(vA_i vB_i)) with unbiased
/// per-coordinate variances.
double frechet_feature_distance(const std::vector<features::FeatureVector>& set_a,
                                const std::vector<features::FeatureVector>& set_b);

using ImageClassifier = std::function<Grade(const RasterImage&)>;

/// Fraction of variants whose predicted grade equals the generation target.
double consistency_rate(const ImageClassifier& classifier, const std::vector<Variant>& variants);

// --- generative backend slot ---------------------------------------------------

struct ParsedUrl {
    std::string scheme;
    std::string host;
    int port = 80;
    std::string path;
};

/// Accepts http://host[:port][/path]. Throws InvalidArgument otherwise.
ParsedUrl parse_http_url(std::string_view url);

struct BackendSlot {
    enum class Kind { Procedural, External };
    Kind kind = Kind::Procedural;
    std::string endpoint;
    std::chrono::milliseconds timeout{30000};
    int max_concurrency = 4;

    static BackendSlot procedural() { return {}; }
    static BackendSlot external(std::string endpoint, std::chrono::milliseconds timeout = std::chrono::seconds(30),
                                int max_concurrency = 4);
    void validate() const;
};

/// Client for an external generative service. Sends
/// {prompt, grade, image: base64 PNG} as JSON and expects PNG bytes back with
/// the input's dimensions. At most `max_concurrency` requests are in flight.
class ExternalBackend {
  public:
    explicit ExternalBackend(const BackendSlot& slot);
    ~ExternalBackend();
    ExternalBackend(const ExternalBackend&) = delete;
    ExternalBackend& operator=(const ExternalBackend&) = delete;

    /// Throws BackendError on transport failure, non-200 status, undecodable
    /// payload or dimension mismatch.
    RasterImage render(const RasterImage& img, Grade target, std::string_view prompt);

  private:
    ParsedUrl url_;
    std::chrono::milliseconds timeout_;
    std::counting_semaphore<1024> slots_;
};

struct RenderOutcome {
    RasterImage image;
    bool external = false;        ///< produced by the external backend
    std::string fallback_reason;  ///< nonempty when the external call failed
};

/// Renders through the configured slot, degrading to the procedural path when
/// the external backend fails.
class VariantRenderer {
  public:
    VariantRenderer(RenderParams params, BackendSlot slot = BackendSlot::procedural());
    ~VariantRenderer();

    RenderOutcome render(const RasterImage& img, Grade target, Grade source, std::uint64_t seed) const;
    const RenderParams& params() const { return params_; }
    const BackendSlot& slot() const { return slot_; }

  private:
    RenderParams params_;
    BackendSlot slot_;
    std::unique_ptr<ExternalBackend> backend_;
};

} // namespace skycast::synth
