#include "pyroprop/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <thread>

#include "pyroprop/jsonutil.hpp"

namespace pyroprop {

void ScenarioConfig::validate() const {
    if (grid_size < 16) throw InvalidInput("grid_size must be at least 16");
    if (cell_size <= 0.0f) throw InvalidInput("cell_size must be positive");
    if (duration_hours <= 0.0) throw InvalidInput("duration must be positive");
    if (height_amplitude_m < 0.0) throw InvalidInput("height amplitude must be non-negative");
    if (feature_scale_cells <= 0.0) throw InvalidInput("feature scale must be positive");
    if (octaves < 1) throw InvalidInput("octaves must be at least 1");
    if (class_mix.empty()) throw InvalidInput("class mix is empty");
    double sum = 0.0;
    for (auto [code, frac] : class_mix) {
        if (frac <= 0.0) throw InvalidInput("class fraction must be positive");
        sum += frac;
    }
    if (std::abs(sum - 1.0) > 1e-6) throw InvalidInput("class fractions must sum to 1");
}

void EnsembleConfig::validate() const {
    if (members < 1) throw InvalidInput("ensemble needs at least one member");
    if (output_interval_minutes <= 0 || substep_minutes <= 0 ||
        output_interval_minutes % substep_minutes != 0)
        throw InvalidInput("substep must divide the output interval");
    if (noise.fraction < 0.0 || noise.wind_dir_step_deg < 0.0)
        throw InvalidInput("noise model must be non-negative");
}

void DatasetConfig::validate() const {
    if (num_scenarios < 2) throw InvalidInput("dataset needs at least 2 scenarios");
    if (train_fraction <= 0.0 || train_fraction >= 1.0)
        throw InvalidInput("train_fraction must lie strictly between 0 and 1");
    if (max_retries < 1) throw InvalidInput("max_retries must be at least 1");
    scenario.validate();
    ensemble.validate();
}

int DatasetConfig::train_count() const {
    const long k = std::lround(num_scenarios * train_fraction);
    return static_cast<int>(std::clamp(k, 1L, static_cast<long>(num_scenarios - 1)));
}

namespace {

double lattice_value(std::uint64_t seed, std::int64_t ix, std::int64_t iy) {
    const std::uint64_t h =
        hash_combine(hash_combine(seed, static_cast<std::uint64_t>(ix)),
                     static_cast<std::uint64_t>(iy));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

} // namespace

double value_noise(std::uint64_t seed, double x, double y, int octaves, double base_scale) {
    double total = 0.0, weight = 0.0, amp = 1.0;
    for (int o = 0; o < octaves; ++o) {
        const double scale = base_scale / static_cast<double>(1 << o);
        const double fx = x / scale, fy = y / scale;
        const std::int64_t ix = static_cast<std::int64_t>(std::floor(fx));
        const std::int64_t iy = static_cast<std::int64_t>(std::floor(fy));
        const double tx = smoothstep(fx - static_cast<double>(ix));
        const double ty = smoothstep(fy - static_cast<double>(iy));
        const std::uint64_t os = hash_combine(seed, static_cast<std::uint64_t>(o));
        const double v00 = lattice_value(os, ix, iy);
        const double v10 = lattice_value(os, ix + 1, iy);
        const double v01 = lattice_value(os, ix, iy + 1);
        const double v11 = lattice_value(os, ix + 1, iy + 1);
        const double v = (v00 * (1 - tx) + v10 * tx) * (1 - ty) + (v01 * (1 - tx) + v11 * tx) * ty;
        total += amp * v;
        weight += amp;
        amp *= 0.5;
    }
    return total / weight;
}

Scenario generate_scenario(const ScenarioConfig& cfg, const FuelModel& fuel, std::uint64_t id,
                           std::uint64_t seed) {
    cfg.validate();
    fuel.validate();
    for (auto [code, frac] : cfg.class_mix) (void)fuel.at(code);

    Scenario sc;
    sc.id = id;
    sc.seed = seed;
    sc.duration_hours = cfg.duration_hours;
    const int n = cfg.grid_size;

    const std::uint64_t height_seed = hash_combine(seed, 0x68);
    sc.height = Raster(n, n, 1, RasterKind::Height, cfg.cell_size);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c)
            sc.height.at(r, c) = static_cast<float>(
                cfg.height_amplitude_m *
                value_noise(height_seed, c, r, cfg.octaves, cfg.feature_scale_cells));
    sc.gradient = height_to_gradient(sc.height);

    // land classes: rank the pixels of an independent noise field and cut at
    // the cumulative target fractions, so the areal mix is hit exactly
    const std::uint64_t land_seed = hash_combine(seed, 0x6C);
    const std::size_t npix = static_cast<std::size_t>(n) * n;
    std::vector<double> field(npix);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c)
            field[static_cast<std::size_t>(r) * n + c] =
                value_noise(land_seed, c, r, cfg.octaves, cfg.feature_scale_cells);
    std::vector<std::uint32_t> order(npix);
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(),
              [&](std::uint32_t a, std::uint32_t b) {
                  return field[a] != field[b] ? field[a] < field[b] : a < b;
              });
    sc.land_class = Raster(n, n, 1, RasterKind::LandClass, cfg.cell_size);
    std::size_t pos = 0;
    double cum = 0.0;
    for (std::size_t k = 0; k < cfg.class_mix.size(); ++k) {
        cum += cfg.class_mix[k].second;
        const std::size_t end =
            k + 1 == cfg.class_mix.size()
                ? npix
                : std::min(npix, static_cast<std::size_t>(std::llround(cum * npix)));
        for (; pos < end; ++pos)
            sc.land_class.data[order[pos]] = static_cast<float>(cfg.class_mix[k].first);
    }

    SevereWeatherConfig wcfg = cfg.severe;
    wcfg.duration_hours = cfg.duration_hours;
    Rng wrng(hash_combine(seed, 0x77));
    std::tie(sc.base_weather, sc.forcing) = sample_severe_scenario(wcfg, wrng);

    Rng irng(hash_combine(seed, 0x69));
    for (int tries = 0; tries < 200; ++tries) {
        const int r = static_cast<int>(irng.next_below(n));
        const int c = static_cast<int>(irng.next_below(n));
        const int code = static_cast<int>(std::lround(sc.land_class.at(r, c)));
        if (fuel.at(code).burnable) {
            sc.ignition = {{r, c}};
            return sc;
        }
    }
    throw DataError("scenario " + std::to_string(id) + ": no burnable ignition cell found");
}

ProbabilityMapSeries run_ensemble(const Scenario& sc, const FuelModel& fuel,
                                  const EnsembleConfig& cfg, int threads) {
    cfg.validate();
    SimConfig sim;
    sim.output_interval_minutes = cfg.output_interval_minutes;
    sim.substep_minutes = cfg.substep_minutes;
    sim.ignition = sc.ignition;
    sim.duration_hours = sc.duration_hours;
    sim.validate();

    const int T = sim.total_minutes() / sim.output_interval_minutes;
    const int N = cfg.members;
    const std::size_t npix =
        static_cast<std::size_t>(sc.land_class.height) * sc.land_class.width;

    std::vector<WeatherSeries> perturbed(N);
    for (int i = 0; i < N; ++i) {
        Rng rng(cfg.seed + static_cast<std::uint64_t>(i));
        perturbed[i] = perturb_series(sc.base_weather, cfg.noise, rng);
    }

    // first_burned[k][pix] counts members whose earliest map index is k; a
    // running sum over k then yields the burned-member count per interval
    const int nthreads = std::clamp(threads, 1, N);
    std::vector<std::vector<std::uint32_t>> first_burned(
        nthreads, std::vector<std::uint32_t>(static_cast<std::size_t>(T + 1) * npix, 0));
    auto worker = [&](int tid) {
        auto& mine = first_burned[tid];
        for (int i = tid; i < N; i += nthreads) {
            const ArrivalTimeGrid a =
                simulate(sc.land_class, sc.gradient, perturbed[i], sc.forcing, fuel, sim);
            for (std::size_t p = 0; p < npix; ++p) {
                const float arr = a.minutes[p];
                if (!std::isfinite(arr)) continue;
                const int k = static_cast<int>(
                    std::ceil(static_cast<double>(arr) / cfg.output_interval_minutes));
                if (k <= T) ++mine[static_cast<std::size_t>(k) * npix + p];
            }
        }
    };
    if (nthreads == 1) {
        worker(0);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker, t);
        for (auto& t : pool) t.join();
        for (int t = 1; t < nthreads; ++t)
            for (std::size_t i = 0; i < first_burned[0].size(); ++i)
                first_burned[0][i] += first_burned[t][i];
    }

    ProbabilityMapSeries out;
    out.interval_minutes = cfg.output_interval_minutes;
    out.maps.reserve(T + 1);
    std::vector<std::uint32_t> burned(npix, 0);
    for (int k = 0; k <= T; ++k) {
        Raster m(sc.land_class.height, sc.land_class.width, 1, RasterKind::Probability,
                 sc.land_class.cell_size);
        const std::uint32_t* add = &first_burned[0][static_cast<std::size_t>(k) * npix];
        for (std::size_t p = 0; p < npix; ++p) {
            burned[p] += add[p];
            m.data[p] = static_cast<float>(burned[p]) / static_cast<float>(N);
        }
        m.metadata["t_minutes"] = k * cfg.output_interval_minutes;
        out.maps.push_back(std::move(m));
    }
    out.summary = summarize_ensemble(perturbed);
    return out;
}

NormRanges fit_norm_ranges(const std::vector<const WeatherSummary*>& summaries,
                           const std::vector<ForcingTerms>& forcings) {
    if (summaries.empty() || forcings.empty())
        throw InvalidInput("fit_norm_ranges needs at least one summary and forcing");

    constexpr double kInf = std::numeric_limits<double>::infinity();
    double tlo = kInf, thi = -kInf, hlo = kInf, hhi = -kInf, wmax = 0.0;
    for (const WeatherSummary* s : summaries) {
        for (int t = 0; t < s->T; ++t) {
            tlo = std::min(tlo, double(s->at(WeatherSummary::Mean, WeatherSummary::Temperature, t)));
            thi = std::max(thi, double(s->at(WeatherSummary::Mean, WeatherSummary::Temperature, t)));
            hlo = std::min(hlo, double(s->at(WeatherSummary::Mean, WeatherSummary::Humidity, t)));
            hhi = std::max(hhi, double(s->at(WeatherSummary::Mean, WeatherSummary::Humidity, t)));
            wmax = std::max({wmax,
                             std::abs(double(s->at(WeatherSummary::Mean, WeatherSummary::WindX, t))),
                             std::abs(double(s->at(WeatherSummary::Mean, WeatherSummary::WindY, t)))});
        }
    }
    double clo = kInf, chi = -kInf, dlo = kInf, dhi = -kInf;
    for (const ForcingTerms& f : forcings) {
        clo = std::min(clo, f.curing_pct);
        chi = std::max(chi, f.curing_pct);
        dlo = std::min(dlo, f.drought_index);
        dhi = std::max(dhi, f.drought_index);
    }

    auto widen = [](double lo, double hi) {
        if (hi - lo < 1e-6) {
            const double mid = (lo + hi) / 2.0;
            return NormRanges::Range{mid - 0.5, mid + 0.5};
        }
        return NormRanges::Range{lo, hi};
    };
    NormRanges r;
    r.temperature = widen(tlo, thi);
    r.humidity = widen(hlo, hhi);
    wmax = std::max(wmax, 0.5);
    r.wind_x = {-wmax, wmax};
    r.wind_y = {-wmax, wmax};
    r.curing = widen(clo, chi);
    r.drought = widen(dlo, dhi);
    return r;
}

namespace {

std::string scenario_dir_name(std::uint64_t id) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "scenario_%03llu", static_cast<unsigned long long>(id));
    return buf;
}

Raster pack_maps(const ProbabilityMapSeries& p) {
    const Raster& first = p.maps.at(0);
    const int ch = static_cast<int>(p.maps.size());
    Raster out(first.height, first.width, ch, RasterKind::Probability, first.cell_size);
    for (int k = 0; k < ch; ++k) {
        const Raster& m = p.maps[k];
        for (int r = 0; r < first.height; ++r)
            for (int c = 0; c < first.width; ++c) out.at(r, c, k) = m.at(r, c);
    }
    out.metadata["content"] = "probability_maps";
    out.metadata["interval_minutes"] = p.interval_minutes;
    return out;
}

std::vector<Raster> unpack_maps(const Raster& packed) {
    std::vector<Raster> maps;
    maps.reserve(packed.channels);
    const int interval = packed.metadata.value("interval_minutes", 30);
    for (int k = 0; k < packed.channels; ++k) {
        Raster m(packed.height, packed.width, 1, RasterKind::Probability, packed.cell_size);
        for (int r = 0; r < packed.height; ++r)
            for (int c = 0; c < packed.width; ++c) m.at(r, c) = packed.at(r, c, k);
        m.metadata["t_minutes"] = k * interval;
        maps.push_back(std::move(m));
    }
    return maps;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open for write: " + path.string());
    os << j.dump(2) << '\n';
    if (!os) throw FormatError("short write: " + path.string());
}

nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open for read: " + path.string());
    try {
        return nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad JSON in " + path.string() + ": " + e.what());
    }
}

void fill_normalized(DatasetSample& s, const NormRanges& ranges) {
    s.norm_summary = normalize_summary(s.prob.summary, ranges);
    s.norm_forcing = normalize_forcing(s.forcing, ranges);
}

} // namespace

Dataset build_dataset(const DatasetConfig& cfg, const FuelModel& fuel, std::uint64_t seed,
                      const std::filesystem::path& out_dir, int threads) {
    cfg.validate();
    fuel.validate();

    const int n = cfg.num_scenarios;
    const int ntrain = cfg.train_count();
    std::vector<Scenario> scenarios;
    std::vector<DatasetSample> samples;
    scenarios.reserve(n);
    samples.reserve(n);

    for (int i = 0; i < n; ++i) {
        Scenario sc;
        bool ok = false;
        std::string last_error;
        for (int retry = 0; retry < cfg.max_retries && !ok; ++retry) {
            const std::uint64_t sseed =
                hash_combine(seed, static_cast<std::uint64_t>(i) * 1000003ULL +
                                       static_cast<std::uint64_t>(retry));
            try {
                sc = generate_scenario(cfg.scenario, fuel, static_cast<std::uint64_t>(i), sseed);
                ok = true;
            } catch (const DataError& e) {
                last_error = e.what();
            }
        }
        if (!ok)
            throw DataError("scenario " + std::to_string(i) + " failed after " +
                            std::to_string(cfg.max_retries) + " retries: " + last_error);

        EnsembleConfig ec = cfg.ensemble;
        ec.seed = sc.seed;
        DatasetSample s;
        s.scenario_id = sc.id;
        s.land_class = sc.land_class;
        s.gradient = sc.gradient;
        s.prob = run_ensemble(sc, fuel, ec, threads);
        s.forcing = sc.forcing;
        samples.push_back(std::move(s));
        scenarios.push_back(std::move(sc));
    }

    std::vector<const WeatherSummary*> train_summaries;
    std::vector<ForcingTerms> train_forcings;
    for (int i = 0; i < ntrain; ++i) {
        train_summaries.push_back(&samples[i].prob.summary);
        train_forcings.push_back(samples[i].forcing);
    }
    const NormRanges ranges = fit_norm_ranges(train_summaries, train_forcings);
    for (auto& s : samples) fill_normalized(s, ranges);

    nlohmann::json manifest;
    manifest["format"] = "pyroprop-dataset-v1";
    manifest["seed"] = seed;
    manifest["config"] = dataset_config_to_json(cfg);
    manifest["fuel"] = fuel.to_json();
    manifest["norm_ranges"] = ranges.to_json();
    nlohmann::json train_ids = nlohmann::json::array(), val_ids = nlohmann::json::array();
    for (int i = 0; i < n; ++i) (i < ntrain ? train_ids : val_ids).push_back(i);
    manifest["train"] = train_ids;
    manifest["val"] = val_ids;
    nlohmann::json scens = nlohmann::json::array();
    for (int i = 0; i < n; ++i) {
        const Scenario& sc = scenarios[i];
        nlohmann::json ig = nlohmann::json::array();
        for (auto [r, c] : sc.ignition) ig.push_back({r, c});
        scens.push_back({{"id", sc.id},
                         {"dir", scenario_dir_name(sc.id)},
                         {"seed", sc.seed},
                         {"ignition", ig},
                         {"duration_hours", sc.duration_hours},
                         {"intervals", samples[i].prob.steps()}});
    }
    manifest["scenarios"] = scens;

    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        for (int i = 0; i < n; ++i) {
            const std::filesystem::path dir = out_dir / scenario_dir_name(scenarios[i].id);
            std::filesystem::create_directories(dir);
            save_raster(scenarios[i].height, dir / "height.pfr");
            save_raster(samples[i].land_class, dir / "land_class.pfr");
            save_raster(samples[i].gradient, dir / "gradient.pfr");
            save_raster(pack_maps(samples[i].prob), dir / "prob.pfr");
            save_raster(summary_to_raster(samples[i].prob.summary), dir / "summary.pfr");
            write_json(dir / "weather.json",
                       weather_to_json(scenarios[i].base_weather, scenarios[i].forcing));
        }
        write_json(out_dir / "manifest.json", manifest);
    }

    Dataset ds;
    ds.ranges = ranges;
    ds.manifest = std::move(manifest);
    for (int i = 0; i < n; ++i)
        (i < ntrain ? ds.train : ds.val).push_back(std::move(samples[i]));
    return ds;
}

Dataset load_dataset(const std::filesystem::path& dir) {
    const nlohmann::json manifest = read_json(dir / "manifest.json");
    if (manifest.value("format", "") != "pyroprop-dataset-v1")
        throw FormatError("not a pyroprop dataset: " + dir.string());

    Dataset ds;
    ds.manifest = manifest;
    try {
        ds.ranges = NormRanges::from_json(manifest.at("norm_ranges"));
        std::map<std::uint64_t, DatasetSample> by_id;
        for (const auto& e : manifest.at("scenarios")) {
            DatasetSample s;
            s.scenario_id = e.at("id").get<std::uint64_t>();
            const std::filesystem::path sdir = dir / e.at("dir").get<std::string>();
            s.land_class = load_raster(sdir / "land_class.pfr");
            s.gradient = load_raster(sdir / "gradient.pfr");
            s.prob.maps = unpack_maps(load_raster(sdir / "prob.pfr"));
            s.prob.summary = summary_from_raster(load_raster(sdir / "summary.pfr"));
            s.prob.interval_minutes =
                static_cast<int>(std::lround(60.0 * e.at("duration_hours").get<double>())) /
                std::max(1, s.prob.steps());
            s.forcing = weather_from_json(read_json(sdir / "weather.json")).second;
            fill_normalized(s, ds.ranges);
            by_id.emplace(s.scenario_id, std::move(s));
        }
        for (const auto& id : manifest.at("train"))
            ds.train.push_back(std::move(by_id.at(id.get<std::uint64_t>())));
        for (const auto& id : manifest.at("val"))
            ds.val.push_back(std::move(by_id.at(id.get<std::uint64_t>())));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad dataset manifest: " + std::string(e.what()));
    } catch (const std::out_of_range& e) {
        throw FormatError("dataset manifest references unknown scenario: " + std::string(e.what()));
    }
    return ds;
}

Scenario load_scenario(const std::filesystem::path& dataset_dir, std::uint64_t id) {
    const nlohmann::json manifest = read_json(dataset_dir / "manifest.json");
    for (const auto& e : manifest.at("scenarios")) {
        if (e.at("id").get<std::uint64_t>() != id) continue;
        Scenario sc;
        sc.id = id;
        sc.seed = e.at("seed").get<std::uint64_t>();
        sc.duration_hours = e.at("duration_hours").get<double>();
        for (const auto& p : e.at("ignition"))
            sc.ignition.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
        const std::filesystem::path sdir = dataset_dir / e.at("dir").get<std::string>();
        sc.height = load_raster(sdir / "height.pfr");
        sc.land_class = load_raster(sdir / "land_class.pfr");
        sc.gradient = load_raster(sdir / "gradient.pfr");
        std::tie(sc.base_weather, sc.forcing) = weather_from_json(read_json(sdir / "weather.json"));
        return sc;
    }
    throw DataError("scenario id " + std::to_string(id) + " not in dataset manifest");
}

TrainingWindow sample_training_window(const DatasetSample& sample, int steps, int crop, Rng& rng) {
    const int nmaps = static_cast<int>(sample.prob.maps.size());
    if (steps < 1 || nmaps < steps + 1)
        throw InvalidInput("sample has fewer intervals than the rollout horizon");

    const std::size_t npix = sample.prob.maps[0].data.size();
    const int W = sample.prob.maps[0].width;

    int t0 = 0;
    std::size_t center = npix;
    bool fallback = false;
    std::vector<std::uint32_t> candidates;
    for (int attempt = 0; attempt < 10; ++attempt) {
        t0 = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(nmaps - steps)));
        const Raster& m = sample.prob.maps[t0];
        candidates.clear();
        for (std::size_t p = 0; p < npix; ++p)
            if (m.data[p] > 0.0f && m.data[p] < 1.0f)
                candidates.push_back(static_cast<std::uint32_t>(p));
        if (!candidates.empty()) {
            center = candidates[rng.next_below(candidates.size())];
            break;
        }
    }
    if (center == npix) {
        // no intermediate-probability pixel at the last tried t0: aim at the
        // burned-region centroid instead and say so
        fallback = true;
        const Raster& m = sample.prob.maps[t0];
        double sr = 0, sc = 0, cnt = 0;
        for (std::size_t p = 0; p < npix; ++p)
            if (m.data[p] > 0.0f) {
                sr += static_cast<double>(p / W);
                sc += static_cast<double>(p % W);
                cnt += 1;
            }
        if (cnt == 0) throw DataError("probability map has no burned pixels");
        center = static_cast<std::size_t>(std::llround(sr / cnt)) * W +
                 static_cast<std::size_t>(std::llround(sc / cnt));
    }

    const int cr = static_cast<int>(center) / W;
    const int cc = static_cast<int>(center) % W;
    const CropSpec spec = CropSpec::training(cr, cc, crop);
    const DihedralElement aug{static_cast<int>(rng.next_below(4)), rng.next_bool()};

    TrainingWindow w;
    w.y0 = dihedral_transform(crop_with_padding(sample.prob.maps[t0], spec), aug, {});
    w.yt = dihedral_transform(crop_with_padding(sample.prob.maps[t0 + steps], spec), aug, {});
    w.land = dihedral_transform(crop_with_padding(sample.land_class, spec), aug, {});
    w.gradient = dihedral_transform(crop_with_padding(sample.gradient, spec), aug, {{0, 1}});
    w.weather = summary_slice(sample.norm_summary, t0, steps);
    for (int t = 0; t < steps; ++t) {
        auto [mx, my] = dihedral_apply_vector(
            aug, w.weather.at(WeatherSummary::Mean, WeatherSummary::WindX, t),
            w.weather.at(WeatherSummary::Mean, WeatherSummary::WindY, t));
        w.weather.at(WeatherSummary::Mean, WeatherSummary::WindX, t) = mx;
        w.weather.at(WeatherSummary::Mean, WeatherSummary::WindY, t) = my;
        auto [sx, sy] = dihedral_apply_vector(
            aug, w.weather.at(WeatherSummary::Std, WeatherSummary::WindX, t),
            w.weather.at(WeatherSummary::Std, WeatherSummary::WindY, t));
        w.weather.at(WeatherSummary::Std, WeatherSummary::WindX, t) = std::abs(sx);
        w.weather.at(WeatherSummary::Std, WeatherSummary::WindY, t) = std::abs(sy);
    }
    w.forcing = sample.norm_forcing;
    w.t0 = t0;
    w.steps = steps;
    w.crop = crop;
    w.pad = spec.pad;
    w.center = {cr, cc};
    w.aug = aug;
    w.fallback = fallback;
    return w;
}

nlohmann::json scenario_config_to_json(const ScenarioConfig& c) {
    nlohmann::json mix = nlohmann::json::array();
    for (auto [code, frac] : c.class_mix) mix.push_back({code, frac});
    return {{"grid_size", c.grid_size},
            {"cell_size", c.cell_size},
            {"duration_hours", c.duration_hours},
            {"height_amplitude_m", c.height_amplitude_m},
            {"feature_scale_cells", c.feature_scale_cells},
            {"octaves", c.octaves},
            {"severe", severe_config_to_json(c.severe)},
            {"class_mix", mix}};
}

ScenarioConfig scenario_config_from_json(const nlohmann::json& j) {
    check_keys(j,
               {"grid_size", "cell_size", "duration_hours", "height_amplitude_m",
                "feature_scale_cells", "octaves", "severe", "class_mix"},
               "scenario");
    ScenarioConfig c;
    c.grid_size = config_get(j, "grid_size", c.grid_size, "scenario");
    c.cell_size = config_get(j, "cell_size", c.cell_size, "scenario");
    c.duration_hours = config_get(j, "duration_hours", c.duration_hours, "scenario");
    c.height_amplitude_m = config_get(j, "height_amplitude_m", c.height_amplitude_m, "scenario");
    c.feature_scale_cells = config_get(j, "feature_scale_cells", c.feature_scale_cells, "scenario");
    c.octaves = config_get(j, "octaves", c.octaves, "scenario");
    if (j.contains("severe")) c.severe = severe_config_from_json(j.at("severe"));
    if (j.contains("class_mix")) {
        c.class_mix.clear();
        try {
            for (const auto& e : j.at("class_mix"))
                c.class_mix.emplace_back(e.at(0).get<int>(), e.at(1).get<double>());
        } catch (const nlohmann::json::exception&) {
            throw ConfigError("scenario: class_mix must be an array of [code, fraction] pairs");
        }
    }
    return c;
}

nlohmann::json ensemble_config_to_json(const EnsembleConfig& c) {
    return {{"members", c.members},
            {"noise", noise_model_to_json(c.noise)},
            {"output_interval_minutes", c.output_interval_minutes},
            {"substep_minutes", c.substep_minutes}};
}

EnsembleConfig ensemble_config_from_json(const nlohmann::json& j) {
    check_keys(j, {"members", "noise", "output_interval_minutes", "substep_minutes"}, "ensemble");
    EnsembleConfig c;
    c.members = config_get(j, "members", c.members, "ensemble");
    if (j.contains("noise")) c.noise = noise_model_from_json(j.at("noise"));
    c.output_interval_minutes =
        config_get(j, "output_interval_minutes", c.output_interval_minutes, "ensemble");
    c.substep_minutes = config_get(j, "substep_minutes", c.substep_minutes, "ensemble");
    return c;
}

nlohmann::json dataset_config_to_json(const DatasetConfig& c) {
    return {{"num_scenarios", c.num_scenarios},
            {"train_fraction", c.train_fraction},
            {"scenario", scenario_config_to_json(c.scenario)},
            {"ensemble", ensemble_config_to_json(c.ensemble)},
            {"max_retries", c.max_retries}};
}

DatasetConfig dataset_config_from_json(const nlohmann::json& j) {
    check_keys(j, {"num_scenarios", "train_fraction", "scenario", "ensemble", "max_retries"},
               "dataset");
    DatasetConfig c;
    c.num_scenarios = config_get(j, "num_scenarios", c.num_scenarios, "dataset");
    c.train_fraction = config_get(j, "train_fraction", c.train_fraction, "dataset");
    if (j.contains("scenario")) c.scenario = scenario_config_from_json(j.at("scenario"));
    if (j.contains("ensemble")) c.ensemble = ensemble_config_from_json(j.at("ensemble"));
    c.max_retries = config_get(j, "max_retries", c.max_retries, "dataset");
    return c;
}

} // namespace pyroprop
