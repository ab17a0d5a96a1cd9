#include "pyroprop/firesim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace pyroprop {

const FuelClass& FuelModel::at(int code) const {
    auto it = classes.find(code);
    if (it == classes.end())
        throw InvalidInput("unknown fuel class code " + std::to_string(code));
    return it->second;
}

void FuelModel::validate() const {
    for (const auto& [code, cls] : classes) {
        if (cls.base_ros < 0.0)
            throw InvalidInput("fuel class " + std::to_string(code) + ": negative base_ros");
        if (!cls.burnable && cls.base_ros != 0.0)
            throw InvalidInput("fuel class " + std::to_string(code) + ": unburnable with base_ros > 0");
    }
}

FuelModel FuelModel::defaults() {
    FuelModel m;
    m.classes[0] = {"water/unburnable", false, 0.0, 0.0, 0.0, 0.0};
    m.classes[1] = {"temperate grassland", true, 2.2, 0.10, 1.0, 1.0};
    m.classes[2] = {"sparse shrubland", true, 1.5, 0.08, 0.8, 1.1};
    m.classes[3] = {"mallee heath", true, 1.8, 0.09, 0.9, 1.2};
    m.classes[4] = {"mixed woodland", true, 1.0, 0.06, 0.6, 0.9};
    return m;
}

FuelModel FuelModel::from_json(const nlohmann::json& j) {
    FuelModel m;
    try {
        for (const auto& e : j.at("classes")) {
            const int code = e.at("code").get<int>();
            if (m.classes.count(code))
                throw FormatError("duplicate fuel class code " + std::to_string(code));
            FuelClass c;
            c.name = e.at("name").get<std::string>();
            c.burnable = e.at("burnable").get<bool>();
            c.base_ros = e.at("base_ros").get<double>();
            c.wind_coeff = e.at("wind_coeff").get<double>();
            c.curing_sensitivity = e.value("curing_sensitivity", 1.0);
            c.moisture_sensitivity = e.value("moisture_sensitivity", 1.0);
            m.classes[code] = c;
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad fuel table JSON: ") + e.what());
    }
    m.validate();
    return m;
}

nlohmann::json FuelModel::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& [code, c] : classes)
        arr.push_back({{"code", code},
                       {"name", c.name},
                       {"burnable", c.burnable},
                       {"base_ros", c.base_ros},
                       {"wind_coeff", c.wind_coeff},
                       {"curing_sensitivity", c.curing_sensitivity},
                       {"moisture_sensitivity", c.moisture_sensitivity}});
    return {{"classes", arr}};
}

void SimConfig::validate() const {
    if (output_interval_minutes <= 0 || substep_minutes <= 0)
        throw InvalidInput("sim intervals must be positive");
    if (output_interval_minutes % substep_minutes != 0)
        throw InvalidInput("substep must divide the output interval");
    if (duration_hours <= 0.0) throw InvalidInput("duration must be positive");
    const double total = duration_hours * 60.0;
    if (std::abs(total - std::round(total)) > 1e-9 ||
        static_cast<long>(std::lround(total)) % output_interval_minutes != 0)
        throw InvalidInput("duration must be a whole number of output intervals");
    if (slope_factor_base <= 0.0) throw InvalidInput("slope_factor_base must be positive");
}

int SimConfig::total_minutes() const {
    return static_cast<int>(std::lround(duration_hours * 60.0));
}

Raster ArrivalTimeGrid::to_raster() const {
    Raster r(height, width, 1, RasterKind::Generic, cell_size);
    for (std::size_t i = 0; i < minutes.size(); ++i)
        r.data[i] = std::isinf(minutes[i]) ? -1.0f : minutes[i];
    r.metadata["content"] = "arrival_minutes";
    r.metadata["unburned_sentinel"] = -1.0;
    return r;
}

ArrivalTimeGrid ArrivalTimeGrid::from_raster(const Raster& r) {
    if (r.channels != 1) throw FormatError("arrival raster must be single-channel");
    if (!r.metadata.contains("unburned_sentinel"))
        throw FormatError("raster is not an arrival grid (missing sentinel flag)");
    ArrivalTimeGrid a(r.height, r.width, r.cell_size);
    for (std::size_t i = 0; i < a.minutes.size(); ++i)
        a.minutes[i] = r.data[i] < 0.0f ? std::numeric_limits<float>::infinity() : r.data[i];
    return a;
}

namespace {

double dryness_factor(const FuelClass& cls, const ForcingTerms& forcing, double temp_c,
                      double rh_pct) {
    // each term is 1 at reference conditions (curing 100, rh 25, temp 20), so
    // the factor is exactly 1 there for any sensitivity
    const double curing_term = 0.6 + 0.4 * forcing.curing_pct / 100.0;
    const double moisture_term = 1.2 - 0.8 * rh_pct / 100.0;
    const double temp_term = 0.8 + 0.01 * temp_c;
    const double d = (1.0 + cls.curing_sensitivity * (curing_term - 1.0)) *
                     (1.0 + cls.moisture_sensitivity * (moisture_term - 1.0)) * temp_term;
    return std::max(0.0, d);
}

double ros_for(const FuelClass& cls, double wind_x, double wind_y, double dir_x, double dir_y,
               double slope_along_deg, double dryness, double slope_factor_base) {
    if (!cls.burnable) return 0.0;
    const double wind_factor = std::max(0.1, 1.0 + cls.wind_coeff * (wind_x * dir_x + wind_y * dir_y));
    const double slope_factor = std::pow(slope_factor_base, slope_along_deg / 10.0);
    return cls.base_ros * wind_factor * slope_factor * dryness;
}

} // namespace

double rate_of_spread(const FuelModel& fuel, int class_code, double wind_x, double wind_y,
                      double dir_x, double dir_y, double slope_along_deg,
                      const ForcingTerms& forcing, double temp_c, double rh_pct,
                      double slope_factor_base) {
    const FuelClass& cls = fuel.at(class_code);
    return ros_for(cls, wind_x, wind_y, dir_x, dir_y, slope_along_deg,
                   dryness_factor(cls, forcing, temp_c, rh_pct), slope_factor_base);
}

ArrivalTimeGrid simulate(const Raster& land_class, const Raster& gradient,
                         const WeatherSeries& weather, const ForcingTerms& forcing,
                         const FuelModel& fuel, const SimConfig& cfg) {
    if (land_class.channels != 1) throw InvalidShape("land class raster must be single-channel");
    if (gradient.channels != 2) throw InvalidShape("gradient raster must have 2 channels");
    if (gradient.width != land_class.width || gradient.height != land_class.height)
        throw InvalidShape("land class and gradient rasters have mismatched dimensions");
    if (land_class.cell_size <= 0.0f) throw InvalidInput("cell size must be positive");
    weather.validate();
    forcing.validate();
    fuel.validate();
    cfg.validate();

    const int H = land_class.height, W = land_class.width;
    const std::size_t n = static_cast<std::size_t>(H) * W;
    const int total = cfg.total_minutes();
    if (weather.intervals() * weather.interval_minutes < total)
        throw InvalidInput("weather series shorter than the simulation duration");
    if (weather.interval_minutes != cfg.output_interval_minutes)
        throw InvalidInput("weather interval must match the output interval");

    // per-cell fuel lookup, hoisted out of the propagation loops
    std::vector<const FuelClass*> uniq;
    std::map<int, std::uint8_t> code_to_idx;
    for (const auto& [code, cls] : fuel.classes) {
        code_to_idx[code] = static_cast<std::uint8_t>(uniq.size());
        uniq.push_back(&cls);
    }
    std::vector<std::uint8_t> cell_ci(n);
    std::vector<const FuelClass*> cell_cls(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int code = static_cast<int>(std::lround(land_class.data[i]));
        auto it = code_to_idx.find(code);
        if (it == code_to_idx.end())
            throw InvalidInput("unknown fuel class code " + std::to_string(code));
        cell_ci[i] = it->second;
        cell_cls[i] = uniq[it->second];
    }

    ArrivalTimeGrid grid(H, W, land_class.cell_size);
    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> arrival(n, kInf);
    std::vector<double> progress(n * 8, 0.0);

    std::vector<int> frontier;
    for (auto [r, c] : cfg.ignition) {
        if (r < 0 || r >= H || c < 0 || c >= W)
            throw InvalidInput("ignition cell out of bounds");
        const std::size_t i = static_cast<std::size_t>(r) * W + c;
        if (!cell_cls[i]->burnable)
            throw InvalidInput("ignition on unburnable cell");
        if (arrival[i] != 0.0) {
            arrival[i] = 0.0;
            frontier.push_back(static_cast<int>(i));
        }
    }

    static constexpr int dr[8] = {-1, -1, -1, 0, 0, 1, 1, 1};
    static constexpr int dc[8] = {-1, 0, 1, -1, 1, -1, 0, 1};
    const double cell = land_class.cell_size;
    double dist[8], ux[8], uy[8];
    for (int d = 0; d < 8; ++d) {
        const double norm = std::sqrt(double(dr[d] * dr[d] + dc[d] * dc[d]));
        dist[d] = cell * norm;
        ux[d] = dc[d] / norm; // +x is the column direction
        uy[d] = dr[d] / norm; // +y is the row direction
    }

    const double dt = cfg.substep_minutes;
    const int nsub = total / cfg.substep_minutes;
    constexpr double kDeg = 180.0 / std::numbers::pi;

    // interval-hoisted weather terms
    double wx = 0.0, wy = 0.0;
    int cached_interval = -1;
    std::vector<double> dryness(uniq.size(), 0.0);

    // progress rate (fraction of the crossing per minute) for fire moving
    // toward the neighbour at (nr, nc) in direction d
    auto edge_rate = [&](int d, int nr, int nc) {
        const std::size_t j = static_cast<std::size_t>(nr) * W + nc;
        const float* g = &gradient.data[j * 2];
        const double slope_deg = std::atan(g[0] * ux[d] + g[1] * uy[d]) * kDeg;
        const double ros = ros_for(*cell_cls[j], wx, wy, ux[d], uy[d], slope_deg,
                                   dryness[cell_ci[j]], cfg.slope_factor_base);
        return ros / dist[d];
    };

    for (int s = 0; s < nsub; ++s) {
        const double t0 = s * dt;
        const double t1 = t0 + dt;
        const int w_idx = std::min((s * cfg.substep_minutes) / weather.interval_minutes,
                                   weather.intervals() - 1);
        if (w_idx != cached_interval) {
            cached_interval = w_idx;
            std::tie(wx, wy) = wind_to_components(weather.wind_speed_ms[w_idx],
                                                  weather.wind_direction_deg[w_idx]);
            for (std::size_t k = 0; k < uniq.size(); ++k)
                dryness[k] = dryness_factor(*uniq[k], forcing, weather.temperature_c[w_idx],
                                            weather.relative_humidity_pct[w_idx]);
        }

        // crossing passes: iterate to a fixpoint so ignitions cascading within
        // this substep land at their exact interpolated times
        bool changed = true;
        while (changed) {
            changed = false;
            for (std::size_t fi = 0; fi < frontier.size(); ++fi) {
                const std::size_t i = frontier[fi];
                const int r = static_cast<int>(i) / W, c = static_cast<int>(i) % W;
                const double start = std::max(t0, arrival[i]);
                for (int d = 0; d < 8; ++d) {
                    const int nr = r + dr[d], nc = c + dc[d];
                    if (nr < 0 || nr >= H || nc < 0 || nc >= W) continue;
                    const std::size_t j = static_cast<std::size_t>(nr) * W + nc;
                    if (arrival[j] <= start) continue;
                    const double rate = edge_rate(d, nr, nc);
                    if (rate <= 0.0) continue;
                    const double t_cross = start + (1.0 - progress[i * 8 + d]) / rate;
                    if (t_cross < t1 && t_cross < arrival[j]) {
                        const bool fresh = arrival[j] == kInf;
                        arrival[j] = t_cross;
                        if (fresh) frontier.push_back(static_cast<int>(j));
                        changed = true;
                    }
                }
            }
        }

        // accrue partial progress for edges that did not cross, and retire
        // cells whose whole neighbourhood is burned or unburnable
        std::size_t keep = 0;
        for (std::size_t fi = 0; fi < frontier.size(); ++fi) {
            const std::size_t i = frontier[fi];
            const int r = static_cast<int>(i) / W, c = static_cast<int>(i) % W;
            const double start = std::max(t0, arrival[i]);
            bool active = false;
            for (int d = 0; d < 8; ++d) {
                const int nr = r + dr[d], nc = c + dc[d];
                if (nr < 0 || nr >= H || nc < 0 || nc >= W) continue;
                const std::size_t j = static_cast<std::size_t>(nr) * W + nc;
                if (arrival[j] < kInf || !cell_cls[j]->burnable) continue;
                active = true;
                const double rate = edge_rate(d, nr, nc);
                if (rate > 0.0) progress[i * 8 + d] += (t1 - start) * rate;
            }
            if (active) frontier[keep++] = frontier[fi];
        }
        frontier.resize(keep);
    }

    for (std::size_t i = 0; i < n; ++i)
        grid.minutes[i] = static_cast<float>(arrival[i]);
    return grid;
}

Raster perimeter_at(const ArrivalTimeGrid& a, double t_minutes) {
    if (t_minutes < 0.0) throw InvalidInput("perimeter time must be non-negative");
    Raster mask(a.height, a.width, 1, RasterKind::Probability, a.cell_size);
    for (std::size_t i = 0; i < a.minutes.size(); ++i)
        mask.data[i] = a.minutes[i] <= t_minutes ? 1.0f : 0.0f;
    return mask;
}

} // namespace pyroprop
