#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "skycast/aqi.hpp"
#include "skycast/error.hpp"
#include "skycast_embedded_data.hpp"

namespace skycast::aqi {

namespace {

using nlohmann::json;

constexpr std::array<GradeInfo, kGradeCount> kGrades = {{
    {Grade::Good, "Good", "#00E400",
     "Air quality is satisfactory. Enjoy your usual outdoor activities.", 0, 50},
    {Grade::Moderate, "Moderate", "#FFFF00",
     "Air quality is acceptable. Unusually sensitive people should consider limiting prolonged or heavy outdoor "
     "exertion.",
     51, 100},
    {Grade::UnhealthySensitive, "Unhealthy for Sensitive Groups", "#FF7E00",
     "Sensitive groups (children, older adults, people with heart or lung disease) should reduce prolonged or "
     "heavy outdoor exertion.",
     101, 150},
    {Grade::Unhealthy, "Unhealthy", "#FF0000",
     "Everyone may begin to feel health effects. Reduce prolonged outdoor exertion; sensitive groups should avoid "
     "it.",
     151, 200},
    {Grade::VeryUnhealthy, "Very Unhealthy", "#8F3F97",
     "Health alert: everyone should avoid prolonged or heavy outdoor exertion and move activities indoors.", 201,
     -1},
}};

constexpr std::array<std::string_view, kGradeCount> kGradeIds = {"Good", "Moderate", "UnhealthySensitive",
                                                                 "Unhealthy", "VeryUnhealthy"};

} // namespace

Grade grade_from_index(std::size_t i) {
    if (i >= kGradeCount) throw Error(ErrorCode::InvalidArgument, "grade index out of range");
    return static_cast<Grade>(i);
}

std::string_view grade_name(Grade g) { return kGrades[index_of(g)].name; }
std::string_view grade_id(Grade g) { return kGradeIds[index_of(g)]; }

std::optional<Grade> parse_grade(std::string_view text) {
    for (Grade g : kAllGrades) {
        if (text == grade_name(g) || text == grade_id(g)) return g;
    }
    return std::nullopt;
}

const GradeInfo& grade_info(Grade g) { return kGrades[index_of(g)]; }

Recommendation recommendation_of_grade(Grade g) {
    const auto& info = grade_info(g);
    return {info.advice, info.color_hex};
}

std::string_view pollutant_key(Pollutant p) {
    switch (p) {
        case Pollutant::PM25: return "pm25";
        case Pollutant::PM10: return "pm10";
        case Pollutant::O3: return "o3";
        case Pollutant::CO: return "co";
        case Pollutant::NO2: return "no2";
    }
    return "";
}

std::optional<Pollutant> parse_pollutant(std::string_view key) {
    for (Pollutant p : kAllPollutants) {
        if (key == pollutant_key(p)) return p;
    }
    return std::nullopt;
}

std::optional<double> PollutantRecord::get(Pollutant p) const {
    switch (p) {
        case Pollutant::PM25: return pm25;
        case Pollutant::PM10: return pm10;
        case Pollutant::O3: return o3;
        case Pollutant::CO: return co;
        case Pollutant::NO2: return no2;
    }
    return std::nullopt;
}

void PollutantRecord::set(Pollutant p, double v) {
    switch (p) {
        case Pollutant::PM25: pm25 = v; break;
        case Pollutant::PM10: pm10 = v; break;
        case Pollutant::O3: o3 = v; break;
        case Pollutant::CO: co = v; break;
        case Pollutant::NO2: no2 = v; break;
    }
}

bool PollutantRecord::any() const { return pm25 || pm10 || o3 || co || no2; }

void PollutantRecord::validate() const {
    if (!any()) throw Error(ErrorCode::MissingLabel, "pollutant record is empty");
    for (Pollutant p : kAllPollutants) {
        const auto v = get(p);
        if (!v) continue;
        if (!std::isfinite(*v)) throw Error(ErrorCode::InvalidArgument, std::string(pollutant_key(p)) + " is not finite");
        if (*v < 0.0) throw Error(ErrorCode::NegativeConcentration, std::string(pollutant_key(p)) + " is negative");
    }
}

BreakpointTable BreakpointTable::from_json(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::ParseError, std::string("breakpoint table: ") + e.what());
    }
    BreakpointTable table;
    try {
        table.version_ = doc.at("version").get<std::string>();
        for (const auto& [key, entry] : doc.at("pollutants").items()) {
            const auto p = parse_pollutant(key);
            if (!p) throw Error(ErrorCode::UnknownPollutant, "breakpoint table lists unknown pollutant " + key);
            auto& rows = table.rows_[*p];
            for (const auto& row : entry.at("rows")) {
                if (row.size() != 4) throw Error(ErrorCode::ParseError, "breakpoint rows need 4 numbers");
                rows.push_back({row[0].get<double>(), row[1].get<double>(), row[2].get<double>(), row[3].get<double>()});
            }
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("breakpoint table: ") + e.what());
    }
    table.validate();
    return table;
}

BreakpointTable BreakpointTable::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

const BreakpointTable& BreakpointTable::epa_default() {
    static const BreakpointTable table = from_json(embedded::kAqiBreakpointsJson);
    return table;
}

const std::vector<Breakpoint>& BreakpointTable::rows(Pollutant p) const {
    const auto it = rows_.find(p);
    if (it == rows_.end()) {
        throw Error(ErrorCode::UnknownPollutant, std::string(pollutant_key(p)) + " not in breakpoint table");
    }
    return it->second;
}

void BreakpointTable::validate() const {
    if (rows_.empty()) throw Error(ErrorCode::ParseError, "breakpoint table has no pollutants");
    for (const auto& [p, rows] : rows_) {
        if (rows.empty()) throw Error(ErrorCode::ParseError, std::string(pollutant_key(p)) + " has no rows");
        for (std::size_t k = 0; k < rows.size(); ++k) {
            const auto& r = rows[k];
            if (!(r.conc_lo <= r.conc_hi) || !(r.aqi_lo <= r.aqi_hi)) {
                throw Error(ErrorCode::ParseError, std::string(pollutant_key(p)) + " has an inverted row", k + 1);
            }
            if (k > 0 && !(rows[k - 1].conc_hi < r.conc_lo && rows[k - 1].aqi_hi < r.aqi_lo)) {
                throw Error(ErrorCode::ParseError, std::string(pollutant_key(p)) + " rows overlap or are unsorted",
                            k + 1);
            }
        }
        if (rows.front().conc_lo != 0.0) {
            throw Error(ErrorCode::ParseError, std::string(pollutant_key(p)) + " must start at concentration 0");
        }
    }
}

double sub_index(Pollutant p, double conc, const BreakpointTable& table) {
    if (!std::isfinite(conc)) throw Error(ErrorCode::InvalidArgument, "concentration is not finite");
    if (conc < 0.0) throw Error(ErrorCode::NegativeConcentration, "concentration must be >= 0");
    const auto& rows = table.rows(p);
    for (const Breakpoint& r : rows) {
        if (conc > r.conc_hi) continue;
        if (conc <= r.conc_lo) return r.aqi_lo;
        return r.aqi_lo + (r.aqi_hi - r.aqi_lo) * (conc - r.conc_lo) / (r.conc_hi - r.conc_lo);
    }
    return rows.back().aqi_hi;
}

double sub_index(std::string_view pollutant, double conc, const BreakpointTable& table) {
    const auto p = parse_pollutant(pollutant);
    if (!p) throw Error(ErrorCode::UnknownPollutant, "unknown pollutant " + std::string(pollutant));
    return sub_index(*p, conc, table);
}

double composite_aqi(const PollutantRecord& rec, const BreakpointTable& table) {
    rec.validate();
    double best = 0.0;
    for (Pollutant p : kAllPollutants) {
        if (const auto v = rec.get(p)) best = std::max(best, sub_index(p, *v, table));
    }
    return best;
}

Grade grade_of_aqi(double aqi) {
    if (!(aqi >= 0.0)) throw Error(ErrorCode::InvalidArgument, "AQI must be >= 0");
    const double rounded = std::round(aqi);
    for (Grade g : kAllGrades) {
        const auto& info = grade_info(g);
        if (info.aqi_hi < 0 || rounded <= info.aqi_hi) return g;
    }
    return Grade::VeryUnhealthy;
}

} // namespace skycast::aqi
