#include <algorithm>
#include <cmath>
#include <numeric>

#include "skycast/dataset.hpp"
#include "skycast/error.hpp"
#include "skycast/log.hpp"
#include "skycast/rng.hpp"

namespace skycast::dataset {

namespace {

// Absorbs representation error such as 0.15 * 20 = 3.0000000000000004.
constexpr double kQuotaSlack = 1e-9;

constexpr std::size_t kMinClassSize = 3;

std::array<std::vector<std::size_t>, aqi::kGradeCount> indices_by_class(const std::vector<ManifestEntry>& entries) {
    std::array<std::vector<std::size_t>, aqi::kGradeCount> by_class;
    for (std::size_t i = 0; i < entries.size(); ++i) by_class[aqi::index_of(entries[i].label())].push_back(i);
    return by_class;
}

} // namespace

void SplitRatios::validate() const {
    for (double r : {train, val, test}) {
        if (!(r >= 0.0 && r <= 1.0)) throw Error(ErrorCode::InvalidArgument, "split ratios must lie in [0, 1]");
    }
    if (std::abs(train + val + test - 1.0) > 1e-6) throw Error(ErrorCode::InvalidArgument, "split ratios must sum to 1");
}

std::size_t SplitAssignment::count(Split s) const { return static_cast<std::size_t>(std::count(tags.begin(), tags.end(), s)); }

std::vector<ManifestEntry> SplitAssignment::apply(const std::vector<ManifestEntry>& entries) const {
    if (entries.size() != tags.size()) throw Error(ErrorCode::LengthMismatch, "assignment does not match entries");
    std::vector<ManifestEntry> out = entries;
    for (std::size_t i = 0; i < out.size(); ++i) out[i].split = tags[i];
    return out;
}

std::array<std::size_t, 3> largest_remainder(std::size_t n, const SplitRatios& ratios) {
    ratios.validate();
    const std::array<double, 3> r = {ratios.train, ratios.val, ratios.test};
    std::array<std::size_t, 3> alloc{};
    std::array<double, 3> rem{};
    std::size_t used = 0;
    for (std::size_t k = 0; k < 3; ++k) {
        const double quota = static_cast<double>(n) * r[k];
        const double fl = std::floor(quota + kQuotaSlack);
        alloc[k] = static_cast<std::size_t>(fl);
        rem[k] = std::max(0.0, quota - fl);
        used += alloc[k];
    }
    std::array<std::size_t, 3> order = {0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
    for (std::size_t k = 0; used < n; k = (k + 1) % 3, ++used) ++alloc[order[k]];
    // Ratios only sum to 1 within 1e-6, so the floors can overshoot n.
    for (std::size_t k = 3; used > n && k-- > 0;) {
        const std::size_t take = std::min(alloc[order[k]], used - n);
        alloc[order[k]] -= take;
        used -= take;
    }
    return alloc;
}

SplitAssignment stratified_split(const std::vector<ManifestEntry>& entries, const SplitRatios& ratios,
                                 std::uint64_t seed) {
    ratios.validate();
    SplitAssignment out;
    out.ratios = ratios;
    out.seed = seed;
    out.tags.assign(entries.size(), Split::Train);
    auto by_class = indices_by_class(entries);
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto& idx = by_class[c];
        if (idx.empty()) continue;
        if (idx.size() < kMinClassSize) {
            throw Error(ErrorCode::ClassTooSmall, std::string(aqi::grade_name(aqi::grade_from_index(c))) + " has " +
                                                      std::to_string(idx.size()) + " entries; need at least 3");
        }
        Rng rng(derive_seed(seed, c));
        rng.shuffle(std::span(idx));
        const auto alloc = largest_remainder(idx.size(), ratios);
        std::size_t pos = 0;
        for (std::size_t k = 0; k < 3; ++k) {
            for (std::size_t j = 0; j < alloc[k]; ++j) out.tags[idx[pos++]] = static_cast<Split>(k);
        }
    }
    return out;
}

std::vector<ManifestEntry> select_split(const std::vector<ManifestEntry>& entries, Split s) {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries) {
        if (e.split == s) out.push_back(e);
    }
    return out;
}

std::vector<ManifestEntry> balance_by_augmentation(const std::vector<ManifestEntry>& entries, std::size_t target,
                                                   std::uint64_t seed) {
    std::vector<ManifestEntry> out = entries;
    const auto by_class = indices_by_class(entries);
    if (target == 0) {
        for (const auto& idx : by_class) target = std::max(target, idx.size());
    }
    std::uint64_t stream = 0;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        const auto& idx = by_class[c];
        if (idx.empty() || idx.size() >= target) continue;
        std::vector<std::size_t> sources;
        for (std::size_t i : idx) {
            if (!entries[i].augment) sources.push_back(i);
        }
        if (sources.empty()) {
            log_warning("class " + std::string(aqi::grade_name(aqi::grade_from_index(c))) +
                        " has only augmented records; not padded");
            continue;
        }
        for (std::size_t k = 0; k < target - idx.size(); ++k) {
            ManifestEntry copy = entries[sources[k % sources.size()]];
            copy.grade = copy.label();
            copy.augment = imaging::AugmentationSpec::random(derive_seed(seed, (c << 32) | stream++));
            out.push_back(std::move(copy));
        }
    }
    return out;
}

} // namespace skycast::dataset
