#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "skycast/aqi.hpp"
#include "skycast/imaging.hpp"
#include "skycast/synth.hpp"

namespace skycast::dataset {

using aqi::Grade;

enum class Split : std::uint8_t { Train = 0, Val, Test };

std::string_view split_name(Split s);
std::optional<Split> parse_split(std::string_view text);

/// One labeled image. Paths are stored resolved (manifest-relative paths are
/// joined with the manifest directory on load).
struct ManifestEntry {
    std::string image_path;
    std::optional<std::string> mask_path;
    aqi::PollutantRecord pollutants;
    std::optional<double> aqi;
    std::optional<Grade> grade;
    std::optional<Split> split;
    /// Set on records produced by balance_by_augmentation; the image file is
    /// the unaugmented source.
    std::optional<imaging::AugmentationSpec> augment;

    /// Explicit grade, else the grade of the reported AQI, else the grade of
    /// the composite AQI of the pollutants. Throws MissingLabel.
    Grade label() const;
};

/// Parses JSONL text. Blank lines are skipped. Errors carry the 1-based line
/// number as position.
std::vector<ManifestEntry> parse_manifest(std::string_view text, const std::filesystem::path& base_dir = {});
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);

/// One JSON object, no trailing newline. Paths are written relative to
/// `base_dir` when they live under it.
std::string format_entry(const ManifestEntry& entry, const std::filesystem::path& base_dir = {});
void save_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path);

// --- splitting -------------------------------------------------------------

struct SplitRatios {
    double train = 0.70;
    double val = 0.15;
    double test = 0.15;

    void validate() const;
};

struct SplitAssignment {
    std::vector<Split> tags;  ///< one per input entry, same order
    SplitRatios ratios;
    std::uint64_t seed = 0;

    std::size_t count(Split s) const;
    /// Copies of the entries with `split` set from the tags.
    std::vector<ManifestEntry> apply(const std::vector<ManifestEntry>& entries) const;
};

/// Floor of each quota plus one extra for the largest fractional remainders;
/// ties go to the earlier split. Sums to n.
std::array<std::size_t, 3> largest_remainder(std::size_t n, const SplitRatios& ratios);

/// Per class: seeded shuffle, then largest-remainder allocation in
/// train/val/test order. Throws ClassTooSmall for a present class with < 3
/// entries.
SplitAssignment stratified_split(const std::vector<ManifestEntry>& entries, const SplitRatios& ratios,
                                 std::uint64_t seed);

std::vector<ManifestEntry> select_split(const std::vector<ManifestEntry>& entries, Split s);

// --- balancing -------------------------------------------------------------

/// Pads every class below `target` with augmented copies of its unaugmented
/// entries (round-robin over sources). target == 0 means the largest class
/// count. Input order is preserved and new records are appended.
std::vector<ManifestEntry> balance_by_augmentation(const std::vector<ManifestEntry>& entries, std::size_t target,
                                                   std::uint64_t seed);

/// Loads the entry's image and mask with the augmentation applied. The mask is
/// empty when the entry has none.
struct LoadedSample {
    imaging::RasterImage image;
    std::optional<imaging::SkyMask> mask;
};
LoadedSample load_sample(const ManifestEntry& entry);

// --- synthetic corpus --------------------------------------------------------

struct SyntheticSkyConfig {
    synth::RenderParams params = synth::RenderParams::defaults();
    int images_per_grade = 100;
    int image_size = imaging::kWorkingSize;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SyntheticSample {
    Grade grade;
    imaging::RasterImage image;
};

/// Grade-major order: images_per_grade samples of Good, then Moderate, ...
/// Sample i uses base sky seed derive_seed(seed, i).
std::vector<SyntheticSample> generate_synthetic_samples(const SyntheticSkyConfig& cfg);

/// Writes images/<grade>_<k>.png and manifest.jsonl under out_dir and returns
/// the manifest entries.
std::vector<ManifestEntry> generate_synthetic_dataset(const SyntheticSkyConfig& cfg,
                                                      const std::filesystem::path& out_dir);

} // namespace skycast::dataset
