#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pyroprop/firesim.hpp"
#include "pyroprop/raster.hpp"
#include "pyroprop/rng.hpp"
#include "pyroprop/weather.hpp"

namespace pyroprop {

// One synthetic fire event: terrain, fuel layout, base weather and ignition.
struct Scenario {
    std::uint64_t id = 0;
    std::uint64_t seed = 0;
    Raster height;
    Raster land_class;
    Raster gradient;
    WeatherSeries base_weather;
    ForcingTerms forcing;
    std::vector<std::pair<int, int>> ignition;
    double duration_hours = 6.0;
};

struct ScenarioConfig {
    int grid_size = 192;
    float cell_size = 30.0f;
    double duration_hours = 6.0;
    double height_amplitude_m = 120.0;
    double feature_scale_cells = 48.0;
    int octaves = 4;
    SevereWeatherConfig severe; // duration_hours is overridden from above
    // target areal fractions per land-class code
    std::vector<std::pair<int, double>> class_mix = {
        {0, 0.106}, {1, 0.554}, {2, 0.113}, {3, 0.101}, {4, 0.126}};

    void validate() const;
};

struct EnsembleConfig {
    int members = 50;
    NoiseModel noise;
    int output_interval_minutes = 30;
    int substep_minutes = 1;
    std::uint64_t seed = 0;

    void validate() const;
};

// Flattened ensemble: P^k is the fraction of members burned by k*interval
// minutes, for k = 0..T. The summary covers the T weather intervals.
struct ProbabilityMapSeries {
    std::vector<Raster> maps;
    WeatherSummary summary;
    int interval_minutes = 30;

    int steps() const { return static_cast<int>(maps.size()) - 1; }
};

struct DatasetSample {
    std::uint64_t scenario_id = 0;
    Raster land_class;
    Raster gradient;
    ProbabilityMapSeries prob;     // raw (un-normalized) summary inside
    WeatherSummary norm_summary;   // normalized with the dataset ranges
    std::array<float, 2> norm_forcing{0.0f, 0.0f};
    ForcingTerms forcing;
};

struct DatasetConfig {
    int num_scenarios = 40;
    double train_fraction = 145.0 / 180.0;
    ScenarioConfig scenario;
    EnsembleConfig ensemble;
    int max_retries = 5;

    void validate() const;
    int train_count() const; // round(num_scenarios * train_fraction), both splits non-empty
};

struct Dataset {
    std::vector<DatasetSample> train;
    std::vector<DatasetSample> val;
    NormRanges ranges;
    nlohmann::json manifest;
};

// One (y0, y_t) supervision pair: aligned crops of everything the inner model
// consumes, dihedral-augmented, weather already normalized.
struct TrainingWindow {
    Raster y0;
    Raster yt;
    Raster land;
    Raster gradient;
    WeatherSummary weather; // normalized slice of length D
    std::array<float, 2> forcing{0.0f, 0.0f};
    int t0 = 0;
    int steps = 0; // D
    int crop = 0;  // c
    int pad = 0;   // p = c/8
    std::pair<int, int> center{0, 0};
    DihedralElement aug;
    bool fallback = false;
};

// Deterministic lattice value noise in [0, 1), seeded per octave and cell.
double value_noise(std::uint64_t seed, double x, double y, int octaves, double base_scale);

Scenario generate_scenario(const ScenarioConfig& cfg, const FuelModel& fuel, std::uint64_t id,
                           std::uint64_t seed);

// N perturbed simulations flattened into probability maps; member i perturbs
// the base weather with an Rng seeded cfg.seed + i.
ProbabilityMapSeries run_ensemble(const Scenario& sc, const FuelModel& fuel,
                                  const EnsembleConfig& cfg, int threads = 1);

// Normalization ranges from training summaries/forcings only. Wind x/y share
// one symmetric range so dihedral wind rotations commute with normalization.
NormRanges fit_norm_ranges(const std::vector<const WeatherSummary*>& summaries,
                           const std::vector<ForcingTerms>& forcings);

// Generates scenarios, runs ensembles, splits by scenario, fits normalization
// on the train split, and (when out_dir is non-empty) materializes the
// directory layout: manifest.json + per-scenario rasters and weather JSON.
Dataset build_dataset(const DatasetConfig& cfg, const FuelModel& fuel, std::uint64_t seed,
                      const std::filesystem::path& out_dir, int threads = 1);

Dataset load_dataset(const std::filesystem::path& dir);

TrainingWindow sample_training_window(const DatasetSample& sample, int steps, int crop, Rng& rng);

// Reconstructs the full scenario (terrain + base weather + ignition) from a
// materialized dataset directory, for re-running the raw simulator.
Scenario load_scenario(const std::filesystem::path& dataset_dir, std::uint64_t id);

nlohmann::json scenario_config_to_json(const ScenarioConfig& c);
ScenarioConfig scenario_config_from_json(const nlohmann::json& j);
nlohmann::json ensemble_config_to_json(const EnsembleConfig& c);
EnsembleConfig ensemble_config_from_json(const nlohmann::json& j);
nlohmann::json dataset_config_to_json(const DatasetConfig& c);
DatasetConfig dataset_config_from_json(const nlohmann::json& j);

} // namespace pyroprop
