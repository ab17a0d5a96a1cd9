#include "pyroprop/weather.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pyroprop/jsonutil.hpp"

namespace pyroprop {

namespace {

double series_mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double wrap_degrees(double d) {
    d = std::fmod(d, 360.0);
    if (d < 0.0) d += 360.0;
    return d;
}

} // namespace

void WeatherSeries::validate() const {
    const std::size_t n = temperature_c.size();
    if (wind_speed_ms.size() != n || wind_direction_deg.size() != n ||
        relative_humidity_pct.size() != n)
        throw InvalidInput("weather series variables have mismatched lengths");
    if (interval_minutes <= 0) throw InvalidInput("weather interval must be positive");
    for (double w : wind_speed_ms)
        if (w < 0.0) throw InvalidInput("wind speed must be non-negative");
    for (double h : relative_humidity_pct)
        if (h < 0.0 || h > 100.0) throw InvalidInput("relative humidity out of [0,100]");
    for (double d : wind_direction_deg)
        if (d < 0.0 || d >= 360.0) throw InvalidInput("wind direction out of [0,360)");
}

void ForcingTerms::validate() const {
    if (curing_pct < 0.0 || curing_pct > 100.0) throw InvalidInput("curing out of [0,100]");
    if (drought_index < 0.0 || drought_index > 10.0) throw InvalidInput("drought out of [0,10]");
}

void SevereWeatherConfig::validate() const {
    auto check = [](const std::array<double, 2>& r, const char* name) {
        if (r[0] > r[1]) throw InvalidInput(std::string("severe range inverted: ") + name);
    };
    check(temp_c, "temp_c");
    check(rh_pct, "rh_pct");
    check(wind_kmh, "wind_kmh");
    check(curing_pct, "curing_pct");
    check(drought_index, "drought_index");
    if (duration_hours <= 0.0 || interval_minutes <= 0 || control_point_hours <= 0.0)
        throw InvalidInput("severe weather config has non-positive duration/interval");
    const double ipm = duration_hours * 60.0 / interval_minutes;
    if (std::abs(ipm - std::round(ipm)) > 1e-9)
        throw InvalidInput("duration must be a whole number of intervals");
}

WeatherSeries perturb_series(const WeatherSeries& base, const NoiseModel& model, Rng& rng) {
    base.validate();
    const int T = base.intervals();
    if (T == 0) throw InvalidInput("perturb_series: empty series");
    if (model.fraction < 0.0 || model.wind_dir_step_deg < 0.0)
        throw InvalidInput("noise model must be non-negative");

    WeatherSeries out = base;

    // Walk each variable independently; a walk's step size is fixed by the
    // base series mean, and the walk state is never clamped (only emitted
    // values are).
    auto walk = [&](const std::vector<double>& src, std::vector<double>& dst,
                    double lo, double hi) {
        const double step = model.fraction * series_mean(src);
        double acc = 0.0;
        for (int t = 0; t < T; ++t) {
            acc += rng.next_sign() * step;
            dst[t] = std::clamp(src[t] + acc, lo, hi);
        }
    };
    constexpr double kInf = std::numeric_limits<double>::infinity();
    walk(base.temperature_c, out.temperature_c, -kInf, kInf);
    walk(base.wind_speed_ms, out.wind_speed_ms, 0.0, kInf);
    {
        double acc = 0.0;
        for (int t = 0; t < T; ++t) {
            acc += rng.next_sign() * model.wind_dir_step_deg;
            out.wind_direction_deg[t] = wrap_degrees(base.wind_direction_deg[t] + acc);
        }
    }
    walk(base.relative_humidity_pct, out.relative_humidity_pct, 0.0, 100.0);
    return out;
}

std::pair<double, double> wind_to_components(double speed, double direction_deg) {
    if (speed < 0.0) throw InvalidInput("wind speed must be non-negative");
    // cardinal bearings get exact components, so quarter-turn symmetries of a
    // scenario map to bit-identical wind vectors
    if (std::fmod(direction_deg, 90.0) == 0.0) {
        const int q = static_cast<int>(wrap_degrees(direction_deg) / 90.0) % 4;
        switch (q) {
            case 0: return {0.0, speed};
            case 1: return {speed, 0.0};
            case 2: return {0.0, -speed};
            default: return {-speed, 0.0};
        }
    }
    const double rad = direction_deg * std::numbers::pi / 180.0;
    return {speed * std::sin(rad), speed * std::cos(rad)};
}

WeatherSummary summarize_ensemble(const std::vector<WeatherSeries>& members) {
    if (members.empty()) throw InvalidInput("summarize_ensemble: no members");
    const int T = members.front().intervals();
    for (const auto& m : members)
        if (m.intervals() != T)
            throw InvalidInput("summarize_ensemble: members have mismatched lengths");

    const int N = static_cast<int>(members.size());
    WeatherSummary s(T);
    std::vector<double> vals(N);
    for (int v = 0; v < WeatherSummary::kVariables; ++v) {
        for (int t = 0; t < T; ++t) {
            for (int i = 0; i < N; ++i) {
                const WeatherSeries& m = members[i];
                switch (v) {
                    case WeatherSummary::Temperature: vals[i] = m.temperature_c[t]; break;
                    case WeatherSummary::WindX:
                        vals[i] = wind_to_components(m.wind_speed_ms[t], m.wind_direction_deg[t]).first;
                        break;
                    case WeatherSummary::WindY:
                        vals[i] = wind_to_components(m.wind_speed_ms[t], m.wind_direction_deg[t]).second;
                        break;
                    case WeatherSummary::Humidity: vals[i] = m.relative_humidity_pct[t]; break;
                }
            }
            double mean = 0.0;
            for (double x : vals) mean += x;
            mean /= N;
            double var = 0.0;
            for (double x : vals) var += (x - mean) * (x - mean);
            var /= N; // population std: the finite ensemble is the population
            s.at(WeatherSummary::Mean, v, t) = static_cast<float>(mean);
            s.at(WeatherSummary::Std, v, t) = static_cast<float>(std::sqrt(var));
        }
    }
    return s;
}

const NormRanges::Range& NormRanges::variable(int v) const {
    switch (v) {
        case WeatherSummary::Temperature: return temperature;
        case WeatherSummary::WindX: return wind_x;
        case WeatherSummary::WindY: return wind_y;
        case WeatherSummary::Humidity: return humidity;
    }
    throw InvalidInput("NormRanges: bad variable index");
}

nlohmann::json NormRanges::to_json() const {
    auto r = [](const Range& x) { return nlohmann::json{x.lo, x.hi}; };
    return {{"temperature", r(temperature)}, {"wind_x", r(wind_x)},
            {"wind_y", r(wind_y)},           {"humidity", r(humidity)},
            {"curing", r(curing)},           {"drought", r(drought)}};
}

NormRanges NormRanges::from_json(const nlohmann::json& j) {
    NormRanges n;
    auto r = [&](const char* key) {
        const auto& a = j.at(key);
        return Range{a.at(0).get<double>(), a.at(1).get<double>()};
    };
    n.temperature = r("temperature");
    n.wind_x = r("wind_x");
    n.wind_y = r("wind_y");
    n.humidity = r("humidity");
    n.curing = r("curing");
    n.drought = r("drought");
    return n;
}

namespace {

void check_range(const NormRanges::Range& r, const char* name) {
    if (!(r.lo < r.hi))
        throw InvalidInput(std::string("degenerate normalization range: ") + name);
}

} // namespace

WeatherSummary normalize_summary(const WeatherSummary& s, const NormRanges& ranges) {
    static const char* names[] = {"temperature", "wind_x", "wind_y", "humidity"};
    WeatherSummary out(s.T);
    for (int v = 0; v < WeatherSummary::kVariables; ++v) {
        const auto& r = ranges.variable(v);
        check_range(r, names[v]);
        const double span = r.hi - r.lo;
        for (int t = 0; t < s.T; ++t) {
            out.at(WeatherSummary::Mean, v, t) =
                static_cast<float>((s.at(WeatherSummary::Mean, v, t) - r.lo) / span * 2.0 - 1.0);
            out.at(WeatherSummary::Std, v, t) =
                static_cast<float>(s.at(WeatherSummary::Std, v, t) / span * 2.0);
        }
    }
    return out;
}

WeatherSummary denormalize_summary(const WeatherSummary& s, const NormRanges& ranges) {
    WeatherSummary out(s.T);
    for (int v = 0; v < WeatherSummary::kVariables; ++v) {
        const auto& r = ranges.variable(v);
        check_range(r, "variable");
        const double span = r.hi - r.lo;
        for (int t = 0; t < s.T; ++t) {
            out.at(WeatherSummary::Mean, v, t) =
                static_cast<float>((s.at(WeatherSummary::Mean, v, t) + 1.0) / 2.0 * span + r.lo);
            out.at(WeatherSummary::Std, v, t) =
                static_cast<float>(s.at(WeatherSummary::Std, v, t) / 2.0 * span);
        }
    }
    return out;
}

std::array<float, 2> normalize_forcing(const ForcingTerms& f, const NormRanges& ranges) {
    check_range(ranges.curing, "curing");
    check_range(ranges.drought, "drought");
    auto map = [](double v, const NormRanges::Range& r) {
        return static_cast<float>((v - r.lo) / (r.hi - r.lo) * 2.0 - 1.0);
    };
    return {map(f.curing_pct, ranges.curing), map(f.drought_index, ranges.drought)};
}

std::pair<WeatherSeries, ForcingTerms> sample_severe_scenario(const SevereWeatherConfig& cfg, Rng& rng) {
    cfg.validate();
    const int T = static_cast<int>(std::lround(cfg.duration_hours * 60.0 / cfg.interval_minutes));
    const double cp_minutes = cfg.control_point_hours * 60.0;
    const int n_cp = static_cast<int>(std::ceil(cfg.duration_hours * 60.0 / cp_minutes)) + 1;

    auto track = [&](std::array<double, 2> range) {
        std::vector<double> cps(n_cp);
        for (auto& c : cps) c = rng.uniform(range[0], range[1]);
        std::vector<double> out(T);
        for (int t = 0; t < T; ++t) {
            const double m = t * cfg.interval_minutes;
            int k = static_cast<int>(m / cp_minutes);
            k = std::min(k, n_cp - 2);
            const double a = (m - k * cp_minutes) / cp_minutes;
            out[t] = cps[k] * (1.0 - a) + cps[k + 1] * a;
        }
        return out;
    };

    WeatherSeries w;
    w.interval_minutes = cfg.interval_minutes;
    w.temperature_c = track(cfg.temp_c);
    {
        auto kmh = track(cfg.wind_kmh);
        w.wind_speed_ms.resize(T);
        for (int t = 0; t < T; ++t) w.wind_speed_ms[t] = kmh[t] / 3.6;
    }
    {
        // direction: one base bearing plus smooth deviations, interpolated on
        // the shortest arc so wrap never produces a jump
        const double base = rng.uniform(0.0, 360.0);
        std::vector<double> dev(n_cp);
        for (auto& d : dev) d = rng.uniform(-30.0, 30.0);
        w.wind_direction_deg.resize(T);
        for (int t = 0; t < T; ++t) {
            const double m = t * cfg.interval_minutes;
            int k = static_cast<int>(m / cp_minutes);
            k = std::min(k, n_cp - 2);
            const double a = (m - k * cp_minutes) / cp_minutes;
            w.wind_direction_deg[t] = wrap_degrees(base + dev[k] * (1.0 - a) + dev[k + 1] * a);
        }
    }
    w.relative_humidity_pct = track(cfg.rh_pct);

    ForcingTerms f;
    f.curing_pct = rng.uniform(cfg.curing_pct[0], cfg.curing_pct[1]);
    f.drought_index = rng.uniform(cfg.drought_index[0], cfg.drought_index[1]);
    return {w, f};
}

WeatherSummary summary_slice(const WeatherSummary& s, int t0, int len) {
    if (t0 < 0 || len <= 0 || t0 + len > s.T)
        throw InvalidInput("summary slice out of range");
    WeatherSummary out(len);
    for (int stat = 0; stat < 2; ++stat)
        for (int v = 0; v < WeatherSummary::kVariables; ++v)
            for (int t = 0; t < len; ++t) out.at(stat, v, t) = s.at(stat, v, t0 + t);
    return out;
}

Raster summary_to_raster(const WeatherSummary& s) {
    if (s.T <= 0) throw InvalidInput("summary has no intervals");
    Raster r(2, s.T, WeatherSummary::kVariables, RasterKind::Generic, 1.0f);
    for (int stat = 0; stat < 2; ++stat)
        for (int v = 0; v < WeatherSummary::kVariables; ++v)
            for (int t = 0; t < s.T; ++t) r.at(stat, t, v) = s.at(stat, v, t);
    r.metadata["content"] = "weather_summary";
    return r;
}

WeatherSummary summary_from_raster(const Raster& r) {
    if (r.height != 2 || r.channels != WeatherSummary::kVariables)
        throw FormatError("raster is not a weather summary");
    WeatherSummary s(r.width);
    for (int stat = 0; stat < 2; ++stat)
        for (int v = 0; v < WeatherSummary::kVariables; ++v)
            for (int t = 0; t < s.T; ++t) s.at(stat, v, t) = r.at(stat, t, v);
    return s;
}

nlohmann::json noise_model_to_json(const NoiseModel& m) {
    return {{"fraction", m.fraction}, {"wind_dir_step_deg", m.wind_dir_step_deg}};
}

NoiseModel noise_model_from_json(const nlohmann::json& j) {
    check_keys(j, {"fraction", "wind_dir_step_deg"}, "noise");
    NoiseModel m;
    m.fraction = config_get(j, "fraction", m.fraction, "noise");
    m.wind_dir_step_deg = config_get(j, "wind_dir_step_deg", m.wind_dir_step_deg, "noise");
    return m;
}

nlohmann::json severe_config_to_json(const SevereWeatherConfig& c) {
    return {{"duration_hours", c.duration_hours},
            {"interval_minutes", c.interval_minutes},
            {"control_point_hours", c.control_point_hours},
            {"temp_c", c.temp_c},
            {"rh_pct", c.rh_pct},
            {"wind_kmh", c.wind_kmh},
            {"curing_pct", c.curing_pct},
            {"drought_index", c.drought_index}};
}

SevereWeatherConfig severe_config_from_json(const nlohmann::json& j) {
    check_keys(j,
               {"duration_hours", "interval_minutes", "control_point_hours", "temp_c", "rh_pct",
                "wind_kmh", "curing_pct", "drought_index"},
               "severe");
    SevereWeatherConfig c;
    c.duration_hours = config_get(j, "duration_hours", c.duration_hours, "severe");
    c.interval_minutes = config_get(j, "interval_minutes", c.interval_minutes, "severe");
    c.control_point_hours = config_get(j, "control_point_hours", c.control_point_hours, "severe");
    c.temp_c = config_get(j, "temp_c", c.temp_c, "severe");
    c.rh_pct = config_get(j, "rh_pct", c.rh_pct, "severe");
    c.wind_kmh = config_get(j, "wind_kmh", c.wind_kmh, "severe");
    c.curing_pct = config_get(j, "curing_pct", c.curing_pct, "severe");
    c.drought_index = config_get(j, "drought_index", c.drought_index, "severe");
    return c;
}

nlohmann::json weather_to_json(const WeatherSeries& series, const ForcingTerms& forcing) {
    return {{"interval_minutes", series.interval_minutes},
            {"series",
             {{"temperature_c", series.temperature_c},
              {"wind_speed_ms", series.wind_speed_ms},
              {"wind_direction_deg", series.wind_direction_deg},
              {"relative_humidity_pct", series.relative_humidity_pct}}},
            {"forcing", {{"curing_pct", forcing.curing_pct}, {"drought_index", forcing.drought_index}}}};
}

std::pair<WeatherSeries, ForcingTerms> weather_from_json(const nlohmann::json& j) {
    WeatherSeries w;
    ForcingTerms f;
    try {
        w.interval_minutes = j.at("interval_minutes").get<int>();
        const auto& s = j.at("series");
        w.temperature_c = s.at("temperature_c").get<std::vector<double>>();
        w.wind_speed_ms = s.at("wind_speed_ms").get<std::vector<double>>();
        w.wind_direction_deg = s.at("wind_direction_deg").get<std::vector<double>>();
        w.relative_humidity_pct = s.at("relative_humidity_pct").get<std::vector<double>>();
        f.curing_pct = j.at("forcing").at("curing_pct").get<double>();
        f.drought_index = j.at("forcing").at("drought_index").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad weather JSON: ") + e.what());
    }
    w.validate();
    f.validate();
    return {w, f};
}

} // namespace pyroprop
