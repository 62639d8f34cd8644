#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace skycast::aqi {

/// The five-grade label space, in severity order.
enum class Grade : std::uint8_t { Good = 0, Moderate, UnhealthySensitive, Unhealthy, VeryUnhealthy };

inline constexpr std::size_t kGradeCount = 5;
inline constexpr std::array<Grade, kGradeCount> kAllGrades = {
    Grade::Good, Grade::Moderate, Grade::UnhealthySensitive, Grade::Unhealthy, Grade::VeryUnhealthy};

inline constexpr std::size_t index_of(Grade g) { return static_cast<std::size_t>(g); }
Grade grade_from_index(std::size_t i);

/// Display name, e.g. "Unhealthy for Sensitive Groups".
std::string_view grade_name(Grade g);
/// Identifier form, e.g. "UnhealthySensitive".
std::string_view grade_id(Grade g);
/// Accepts either form; nullopt for anything else (e.g. "Hazardous").
std::optional<Grade> parse_grade(std::string_view text);

struct GradeInfo {
    Grade grade;
    std::string_view name;
    std::string_view color_hex;
    std::string_view advice;
    int aqi_lo;
    int aqi_hi;  ///< -1 for the open top band
};

const GradeInfo& grade_info(Grade g);

struct Recommendation {
    std::string_view advice;
    std::string_view color_hex;
};
Recommendation recommendation_of_grade(Grade g);

enum class Pollutant : std::uint8_t { PM25, PM10, O3, CO, NO2 };
inline constexpr std::array<Pollutant, 5> kAllPollutants = {Pollutant::PM25, Pollutant::PM10, Pollutant::O3,
                                                             Pollutant::CO, Pollutant::NO2};
std::string_view pollutant_key(Pollutant p);
std::optional<Pollutant> parse_pollutant(std::string_view key);

/// Ready-to-index concentrations: PM in ug/m3, O3 and NO2 in ppb, CO in ppm.
struct PollutantRecord {
    std::optional<double> pm25;
    std::optional<double> pm10;
    std::optional<double> o3;
    std::optional<double> co;
    std::optional<double> no2;

    std::optional<double> get(Pollutant p) const;
    void set(Pollutant p, double v);
    bool any() const;
    void validate() const;
};

struct Breakpoint {
    double conc_lo;
    double conc_hi;
    double aqi_lo;
    double aqi_hi;
};

class BreakpointTable {
  public:
    static BreakpointTable from_json(std::string_view text);
    static BreakpointTable load(const std::filesystem::path& path);
    /// Compiled-in copy of data/aqi_breakpoints.json.
    static const BreakpointTable& epa_default();

    const std::string& version() const { return version_; }
    bool has(Pollutant p) const { return rows_.count(p) != 0; }
    const std::vector<Breakpoint>& rows(Pollutant p) const;

    /// Throws ParseError if rows are unsorted, overlapping or inverted.
    void validate() const;

  private:
    std::string version_;
    std::map<Pollutant, std::vector<Breakpoint>> rows_;
};

/// Linear interpolation on the containing row. Concentrations falling in the
/// gap between two rows take the upper row's aqi_lo; above the table clamps to
/// the top row's aqi_hi.
double sub_index(Pollutant p, double conc, const BreakpointTable& table = BreakpointTable::epa_default());
double sub_index(std::string_view pollutant, double conc, const BreakpointTable& table = BreakpointTable::epa_default());

/// Maximum sub-index over present pollutants.
double composite_aqi(const PollutantRecord& rec, const BreakpointTable& table = BreakpointTable::epa_default());

/// Rounds to the nearest integer, then bands; anything above 200 is VeryUnhealthy.
Grade grade_of_aqi(double aqi);

} // namespace skycast::aqi
