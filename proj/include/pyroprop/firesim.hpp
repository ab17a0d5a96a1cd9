#pragma once

#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pyroprop/errors.hpp"
#include "pyroprop/raster.hpp"
#include "pyroprop/weather.hpp"

namespace pyroprop {

struct FuelClass {
    std::string name;
    bool burnable = true;
    double base_ros = 0.0; // m/min at reference conditions
    double wind_coeff = 0.0; // per m/s of wind along the spread direction
    double curing_sensitivity = 1.0;
    double moisture_sensitivity = 1.0;
};

struct FuelModel {
    std::map<int, FuelClass> classes;

    const FuelClass& at(int code) const;
    void validate() const;

    static FuelModel defaults();
    static FuelModel from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

struct SimConfig {
    int output_interval_minutes = 30;
    int substep_minutes = 1;
    std::vector<std::pair<int, int>> ignition; // (row, col)
    double duration_hours = 6.0;
    double slope_factor_base = 2.0; // rate multiplier per 10 degrees upslope

    void validate() const;
    int total_minutes() const;
};

struct ArrivalTimeGrid {
    int width = 0;
    int height = 0;
    float cell_size = 30.0f;
    std::vector<float> minutes; // row-major; unburned cells hold +inf

    ArrivalTimeGrid() = default;
    ArrivalTimeGrid(int h, int w, float cell)
        : width(w), height(h), cell_size(cell),
          minutes(static_cast<std::size_t>(w) * h,
                  std::numeric_limits<float>::infinity()) {}

    float& at(int r, int c) { return minutes[static_cast<std::size_t>(r) * width + c]; }
    float at(int r, int c) const { return minutes[static_cast<std::size_t>(r) * width + c]; }

    Raster to_raster() const;
    static ArrivalTimeGrid from_raster(const Raster& r);
};

// ROS = base_ros * wind_factor * slope_factor * dryness_factor, in m/min.
// (dir_x, dir_y) is the unit spread direction; slope_along_deg is the terrain
// angle along it. Unburnable classes return 0 regardless of conditions.
double rate_of_spread(const FuelModel& fuel, int class_code, double wind_x, double wind_y,
                      double dir_x, double dir_y, double slope_along_deg,
                      const ForcingTerms& forcing, double temp_c, double rh_pct,
                      double slope_factor_base = 2.0);

// Front propagation on the 8-connected grid. Fire progress toward each
// neighbour integrates the (piecewise-constant) ROS over substeps, so arrival
// times are exact whenever the weather is constant across the crossing.
ArrivalTimeGrid simulate(const Raster& land_class, const Raster& gradient,
                         const WeatherSeries& weather, const ForcingTerms& forcing,
                         const FuelModel& fuel, const SimConfig& cfg);

// Binary mask of cells with arrival <= t, as a Probability raster.
Raster perimeter_at(const ArrivalTimeGrid& a, double t_minutes);

} // namespace pyroprop
