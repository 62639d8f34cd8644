#include <string>

#include "skycast/dataset.hpp"
#include "skycast/error.hpp"
#include "skycast/parallel.hpp"
#include "skycast/rng.hpp"

namespace skycast::dataset {

namespace fs = std::filesystem;

void SyntheticSkyConfig::validate() const {
    params.validate();
    if (images_per_grade < 1) throw Error(ErrorCode::InvalidArgument, "images_per_grade must be >= 1");
    if (image_size < 16 || image_size > 4096) throw Error(ErrorCode::InvalidArgument, "image_size must be in [16, 4096]");
}

std::vector<SyntheticSample> generate_synthetic_samples(const SyntheticSkyConfig& cfg) {
    cfg.validate();
    const std::size_t per_grade = static_cast<std::size_t>(cfg.images_per_grade);
    std::vector<SyntheticSample> out(per_grade * aqi::kGradeCount);
    parallel_for(out.size(), [&](std::size_t i) {
        const Grade g = aqi::grade_from_index(i / per_grade);
        const std::uint64_t sky_seed = derive_seed(cfg.seed, i);
        const auto base = synth::render_base_sky(cfg.image_size, sky_seed);
        auto img = synth::render_variant(base, g, cfg.params, derive_seed(sky_seed, 1));
        // Snap to 8-bit levels so in-memory samples equal their PNG round trip.
        for (double& v : img.pixels) v = imaging::quantize(v) / 255.0;
        out[i] = {g, std::move(img)};
    });
    return out;
}

std::vector<ManifestEntry> generate_synthetic_dataset(const SyntheticSkyConfig& cfg, const fs::path& out_dir) {
    const auto samples = generate_synthetic_samples(cfg);
    std::error_code ec;
    fs::create_directories(out_dir / "images", ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create " + (out_dir / "images").string() + ": " + ec.message());

    std::vector<ManifestEntry> entries(samples.size());
    const std::size_t per_grade = static_cast<std::size_t>(cfg.images_per_grade);
    parallel_for(samples.size(), [&](std::size_t i) {
        const auto& s = samples[i];
        const std::string name = std::string(aqi::grade_id(s.grade)) + "_" + std::to_string(i % per_grade) + ".png";
        const fs::path path = out_dir / "images" / name;
        imaging::save_png(s.image, path);
        entries[i].image_path = path.string();
        entries[i].grade = s.grade;
    });
    save_manifest(entries, out_dir / "manifest.jsonl");
    return entries;
}

} // namespace skycast::dataset
