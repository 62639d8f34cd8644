#include <array>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "skycast/dataset.hpp"
#include "skycast/error.hpp"

namespace skycast::dataset {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr std::array<std::string_view, 3> kSplitNames = {"train", "val", "test"};

constexpr std::array<std::string_view, 11> kFields = {"image", "mask", "pm25", "pm10", "o3",    "co",
                                                      "no2",   "aqi",  "grade", "split", "augment"};
constexpr std::array<std::string_view, 5> kAugmentFields = {"flip", "normalize", "blur_sigma", "rotation", "seed"};

template <std::size_t N>
bool contains(const std::array<std::string_view, N>& names, std::string_view key) {
    for (auto n : names) {
        if (n == key) return true;
    }
    return false;
}

std::string resolve(const std::string& p, const fs::path& base_dir) {
    const fs::path path(p);
    if (path.is_absolute() || base_dir.empty()) return p;
    return (base_dir / path).lexically_normal().string();
}

std::string relativize(const std::string& p, const fs::path& base_dir) {
    if (base_dir.empty()) return p;
    const fs::path abs_p = fs::absolute(fs::path(p)).lexically_normal();
    const fs::path abs_base = fs::absolute(base_dir).lexically_normal();
    const fs::path rel = abs_p.lexically_relative(abs_base);
    return rel.empty() ? abs_p.string() : rel.generic_string();
}

double number_field(const json& obj, const std::string& key, std::size_t line) {
    const auto& v = obj.at(key);
    if (!v.is_number()) throw Error(ErrorCode::ParseError, "field '" + key + "' must be a number", line);
    return v.get<double>();
}

std::string string_field(const json& obj, const std::string& key, std::size_t line) {
    const auto& v = obj.at(key);
    if (!v.is_string()) throw Error(ErrorCode::ParseError, "field '" + key + "' must be a string", line);
    auto s = v.get<std::string>();
    if (s.empty()) throw Error(ErrorCode::ParseError, "field '" + key + "' is empty", line);
    return s;
}

imaging::AugmentationSpec parse_augment(const json& obj, std::size_t line) {
    if (!obj.is_object()) throw Error(ErrorCode::ParseError, "field 'augment' must be an object", line);
    for (const auto& [key, value] : obj.items()) {
        if (!contains(kAugmentFields, key)) throw Error(ErrorCode::ParseError, "unknown augment field '" + key + "'", line);
    }
    imaging::AugmentationSpec spec;
    auto flag = [&](const char* key) {
        if (!obj.contains(key)) return false;
        if (!obj.at(key).is_boolean()) throw Error(ErrorCode::ParseError, std::string(key) + " must be a boolean", line);
        return obj.at(key).get<bool>();
    };
    spec.horizontal_flip = flag("flip");
    spec.contrast_normalize = flag("normalize");
    if (obj.contains("blur_sigma")) spec.gaussian_blur_sigma = number_field(obj, "blur_sigma", line);
    if (obj.contains("rotation")) spec.rotation_degrees = number_field(obj, "rotation", line);
    if (obj.contains("seed")) {
        if (!obj.at("seed").is_number_unsigned()) throw Error(ErrorCode::ParseError, "seed must be unsigned", line);
        spec.seed = obj.at("seed").get<std::uint64_t>();
    }
    try {
        spec.validate();
    } catch (const Error& e) {
        throw Error(ErrorCode::ParseError, e.detail(), line);
    }
    return spec;
}

ManifestEntry parse_line(std::string_view text, std::size_t line, const fs::path& base_dir) {
    json obj;
    try {
        obj = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::ParseError, e.what(), line);
    }
    if (!obj.is_object()) throw Error(ErrorCode::ParseError, "record must be an object", line);
    for (const auto& [key, value] : obj.items()) {
        if (!contains(kFields, key)) throw Error(ErrorCode::ParseError, "unknown field '" + key + "'", line);
    }
    if (!obj.contains("image")) throw Error(ErrorCode::ParseError, "missing field 'image'", line);

    ManifestEntry e;
    e.image_path = resolve(string_field(obj, "image", line), base_dir);
    if (obj.contains("mask")) e.mask_path = resolve(string_field(obj, "mask", line), base_dir);
    for (aqi::Pollutant p : aqi::kAllPollutants) {
        const std::string key(aqi::pollutant_key(p));
        if (!obj.contains(key)) continue;
        const double v = number_field(obj, key, line);
        if (v < 0.0) throw Error(ErrorCode::NegativeConcentration, key + " is negative", line);
        e.pollutants.set(p, v);
    }
    if (obj.contains("aqi")) {
        e.aqi = number_field(obj, "aqi", line);
        if (*e.aqi < 0.0) throw Error(ErrorCode::ParseError, "aqi must be >= 0", line);
    }
    if (obj.contains("grade")) {
        const auto text_grade = string_field(obj, "grade", line);
        e.grade = aqi::parse_grade(text_grade);
        if (!e.grade) throw Error(ErrorCode::ParseError, "unknown grade '" + text_grade + "'", line);
    }
    if (obj.contains("split")) {
        const auto text_split = string_field(obj, "split", line);
        e.split = parse_split(text_split);
        if (!e.split) throw Error(ErrorCode::ParseError, "unknown split '" + text_split + "'", line);
    }
    if (obj.contains("augment")) e.augment = parse_augment(obj.at("augment"), line);

    try {
        e.grade = e.label();
    } catch (const Error& err) {
        throw Error(err.code(), err.detail(), line);
    }
    return e;
}

} // namespace

std::string_view split_name(Split s) { return kSplitNames[static_cast<std::size_t>(s)]; }

std::optional<Split> parse_split(std::string_view text) {
    for (std::size_t i = 0; i < kSplitNames.size(); ++i) {
        if (text == kSplitNames[i]) return static_cast<Split>(i);
    }
    return std::nullopt;
}

Grade ManifestEntry::label() const {
    if (grade) return *grade;
    if (aqi) return aqi::grade_of_aqi(*aqi);
    if (pollutants.any()) return aqi::grade_of_aqi(aqi::composite_aqi(pollutants));
    throw Error(ErrorCode::MissingLabel, "entry has neither grade, aqi nor pollutants: " + image_path);
}

std::vector<ManifestEntry> parse_manifest(std::string_view text, const fs::path& base_dir) {
    std::vector<ManifestEntry> out;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto end = text.find('\n', start);
        std::string_view line = text.substr(start, end == std::string_view::npos ? text.size() - start : end - start);
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.find_first_not_of(" \t") != std::string_view::npos) out.push_back(parse_line(line, line_no, base_dir));
        if (end == std::string_view::npos) break;
        start = end + 1;
    }
    return out;
}

std::vector<ManifestEntry> load_manifest(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open manifest " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_manifest(ss.str(), path.parent_path());
}

std::string format_entry(const ManifestEntry& e, const fs::path& base_dir) {
    json obj = json::object();
    obj["image"] = relativize(e.image_path, base_dir);
    if (e.mask_path) obj["mask"] = relativize(*e.mask_path, base_dir);
    for (aqi::Pollutant p : aqi::kAllPollutants) {
        if (const auto v = e.pollutants.get(p)) obj[std::string(aqi::pollutant_key(p))] = *v;
    }
    if (e.aqi) obj["aqi"] = *e.aqi;
    if (e.grade) obj["grade"] = std::string(aqi::grade_name(*e.grade));
    if (e.split) obj["split"] = std::string(split_name(*e.split));
    if (e.augment) {
        obj["augment"] = {{"flip", e.augment->horizontal_flip},
                          {"normalize", e.augment->contrast_normalize},
                          {"blur_sigma", e.augment->gaussian_blur_sigma},
                          {"rotation", e.augment->rotation_degrees},
                          {"seed", e.augment->seed}};
    }
    return obj.dump();
}

void save_manifest(const std::vector<ManifestEntry>& entries, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write manifest " + path.string());
    const fs::path base = path.parent_path().empty() ? fs::path(".") : path.parent_path();
    for (const auto& e : entries) out << format_entry(e, base) << '\n';
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

LoadedSample load_sample(const ManifestEntry& entry) {
    LoadedSample s;
    s.image = imaging::load_image(entry.image_path);
    if (entry.mask_path) s.mask = imaging::load_mask(*entry.mask_path);
    if (entry.augment && !entry.augment->is_identity()) {
        s.image = imaging::augment(s.image, *entry.augment);
        if (s.mask) s.mask = imaging::augment_mask(*s.mask, *entry.augment);
    }
    return s;
}

} // namespace skycast::dataset
