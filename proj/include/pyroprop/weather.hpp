#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pyroprop/errors.hpp"
#include "pyroprop/raster.hpp"
#include "pyroprop/rng.hpp"

namespace pyroprop {

// Station weather series at a fixed cadence. Wind speed is stored in m/s;
// wind direction is the compass bearing the wind blows TOWARD, in degrees
// clockwise from grid +y.
struct WeatherSeries {
    int interval_minutes = 30;
    std::vector<double> temperature_c;
    std::vector<double> wind_speed_ms;
    std::vector<double> wind_direction_deg;
    std::vector<double> relative_humidity_pct;

    int intervals() const { return static_cast<int>(temperature_c.size()); }
    void validate() const;
};

struct ForcingTerms {
    double curing_pct = 100.0; // [0, 100]
    double drought_index = 5.0; // [0, 10]
    void validate() const;
};

// Random-walk perturbation: each interval adds RAND({-1,+1}) * fraction * mean
// to every non-direction variable; wind direction takes +/- wind_dir_step
// degree steps with modular wrap.
struct NoiseModel {
    double fraction = 0.03;
    double wind_dir_step_deg = 2.0;
};

// Ensemble summary of shape (2, |V|, T): statistic (mean, std) x variable
// (temperature, wind_x, wind_y, humidity) x interval. Wind is decomposed into
// components before the statistics are taken.
struct WeatherSummary {
    static constexpr int kVariables = 4;
    enum Stat { Mean = 0, Std = 1 };
    enum Variable { Temperature = 0, WindX = 1, WindY = 2, Humidity = 3 };

    int T = 0;
    std::vector<float> values; // (2, 4, T) flattened, interval fastest

    WeatherSummary() = default;
    explicit WeatherSummary(int t) : T(t), values(static_cast<std::size_t>(2 * kVariables * t), 0.0f) {}

    std::size_t index(int stat, int var, int t) const {
        return (static_cast<std::size_t>(stat) * kVariables + var) * T + t;
    }
    float& at(int stat, int var, int t) { return values[index(stat, var, t)]; }
    float at(int stat, int var, int t) const { return values[index(stat, var, t)]; }
};

// Per-variable affine normalization ranges; fit on the training split and
// persisted with both dataset manifests and model checkpoints.
struct NormRanges {
    struct Range {
        double lo = 0.0;
        double hi = 1.0;
    };
    Range temperature, wind_x, wind_y, humidity, curing, drought;

    const Range& variable(int v) const;
    nlohmann::json to_json() const;
    static NormRanges from_json(const nlohmann::json& j);
};

// Severe fire-weather scenario generator: values move on piecewise-linear
// tracks between 2-hourly control points sampled inside configured ranges.
// FFDI itself is not computed; "severe" is these ranges.
struct SevereWeatherConfig {
    double duration_hours = 6.0;
    int interval_minutes = 30;
    double control_point_hours = 2.0;
    std::array<double, 2> temp_c{30.0, 45.0};
    std::array<double, 2> rh_pct{5.0, 25.0};
    std::array<double, 2> wind_kmh{20.0, 50.0}; // stored on the series as m/s
    std::array<double, 2> curing_pct{85.0, 100.0};
    std::array<double, 2> drought_index{8.0, 10.0};
    void validate() const;
};

WeatherSeries perturb_series(const WeatherSeries& base, const NoiseModel& model, Rng& rng);

// (wind_x, wind_y) = speed * (sin(bearing), cos(bearing)).
std::pair<double, double> wind_to_components(double speed, double direction_deg);

// Population mean/std across members per variable and interval.
WeatherSummary summarize_ensemble(const std::vector<WeatherSeries>& members);

// Mean slice mapped affinely so lo -> -1 and hi -> +1; std slice scaled by
// 2/(hi-lo) with no shift.
WeatherSummary normalize_summary(const WeatherSummary& s, const NormRanges& ranges);
WeatherSummary denormalize_summary(const WeatherSummary& s, const NormRanges& ranges);
std::array<float, 2> normalize_forcing(const ForcingTerms& f, const NormRanges& ranges);

std::pair<WeatherSeries, ForcingTerms> sample_severe_scenario(const SevereWeatherConfig& cfg, Rng& rng);

nlohmann::json weather_to_json(const WeatherSeries& series, const ForcingTerms& forcing);
std::pair<WeatherSeries, ForcingTerms> weather_from_json(const nlohmann::json& j);

// summary tensors travel as Generic rasters: height=2 (mean/std), width=T,
// channels=4 (temperature, wind_x, wind_y, humidity)
// Contiguous time slice [t0, t0+len) of every (stat, variable) row.
WeatherSummary summary_slice(const WeatherSummary& s, int t0, int len);

nlohmann::json noise_model_to_json(const NoiseModel& m);
NoiseModel noise_model_from_json(const nlohmann::json& j);
nlohmann::json severe_config_to_json(const SevereWeatherConfig& c);
SevereWeatherConfig severe_config_from_json(const nlohmann::json& j);

Raster summary_to_raster(const WeatherSummary& s);
WeatherSummary summary_from_raster(const Raster& r);

} // namespace pyroprop
