#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pyroprop/raster.hpp"

namespace pyroprop {

// Pixelwise mean squared error over all channels of the given rasters; the
// caller restricts the evaluation region (e.g. via strip_border) beforehand.
double mse(const Raster& a, const Raster& b);

// Burned area between target and initial map: sum(y_t - y_0), in pixels.
double burned_area(const Raster& y_t, const Raster& y_0);

struct WmseSample {
    const Raster* y_t;
    const Raster* y_p;
    const Raster* y_0;
};

// WMSE = sum_k MSE(y_t, y_p) * A_k / sum_k A_k with A_k = burned_area.
double wmse(const std::vector<WmseSample>& samples);

// Same aggregation from precomputed per-sample (mse, area) pairs.
double wmse_from_parts(const std::vector<std::pair<double, double>>& mse_area);

// Binarizes both maps at value >= threshold and returns |inter| / |union|;
// two empty sets agree, so an empty union scores 1.
double jaccard_at_threshold(const Raster& target, const Raster& pred, double threshold = 0.10);

// log10((MSE(y_p, y_t) + tau) / (MSE(y_0, y_t) + tau)): negative iff the
// prediction improves on persistence.
double loss_value(const Raster& y_p, const Raster& y_t, const Raster& y_0, double tau = 1e-12);

struct EvalReport {
    struct Entry {
        std::uint64_t scenario_id = 0;
        double mse = 0.0;
        double burned_area = 0.0;
        double jaccard = 0.0;
    };

    std::vector<Entry> samples;
    double wmse = 0.0;
    double mean_jaccard = 0.0;
    double threshold = 0.10;
    std::map<std::string, double> wall_times_s; // omitted from JSON when empty

    nlohmann::json to_json() const;
};

struct EvalItem {
    std::uint64_t scenario_id = 0;
    const Raster* y_t = nullptr;
    const Raster* y_p = nullptr;
    const Raster* y_0 = nullptr;
};

EvalReport evaluate_samples(const std::vector<EvalItem>& items, double threshold = 0.10);

} // namespace pyroprop
