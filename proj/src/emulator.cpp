#include "pyroprop/emulator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <thread>

#include "pyroprop/jsonutil.hpp"
#include "pyroprop/metrics.hpp"
#include "pyroprop/rng.hpp"

namespace pyroprop {

void TrainConfig::validate() const {
    if (steps < 1) throw ConfigError("train config: steps must be at least 1");
    if (crop < 8 || crop % 8 != 0)
        throw ConfigError("train config: crop must be a positive multiple of 8");
    if (batch < 1) throw ConfigError("train config: batch must be positive");
    if (ae_epochs < 1) throw ConfigError("train config: ae_epochs must be positive");
    if (epochs < 1) throw ConfigError("train config: epochs must be positive");
    if (windows_per_epoch < 0)
        throw ConfigError("train config: windows_per_epoch must be non-negative");
    if (!(tau > 0.0)) throw ConfigError("train config: tau must be positive");
    if (!(lr > 0.0) || !(ae_lr > 0.0))
        throw ConfigError("train config: learning rates must be positive");
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
    return {{"steps", c.steps},
            {"crop", c.crop},
            {"layer_c", c.layer_c == LayerC::Sobel ? "sobel" : "identity"},
            {"batch", c.batch},
            {"ae_epochs", c.ae_epochs},
            {"epochs", c.epochs},
            {"windows_per_epoch", c.windows_per_epoch},
            {"tau", c.tau},
            {"lr", c.lr},
            {"ae_lr", c.ae_lr},
            {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    const std::string ctx = "train config";
    check_keys(j,
               {"steps", "crop", "layer_c", "batch", "ae_epochs", "epochs",
                "windows_per_epoch", "tau", "lr", "ae_lr", "seed"},
               ctx);
    TrainConfig c;
    c.steps = config_get(j, "steps", c.steps, ctx);
    c.crop = config_get(j, "crop", c.crop, ctx);
    const std::string lc =
        config_get<std::string>(j, "layer_c", c.layer_c == LayerC::Sobel ? "sobel" : "identity", ctx);
    if (lc == "sobel")
        c.layer_c = LayerC::Sobel;
    else if (lc == "identity")
        c.layer_c = LayerC::Identity;
    else
        throw ConfigError(ctx + ": layer_c must be \"identity\" or \"sobel\"");
    c.batch = config_get(j, "batch", c.batch, ctx);
    c.ae_epochs = config_get(j, "ae_epochs", c.ae_epochs, ctx);
    c.epochs = config_get(j, "epochs", c.epochs, ctx);
    c.windows_per_epoch = config_get(j, "windows_per_epoch", c.windows_per_epoch, ctx);
    c.tau = config_get(j, "tau", c.tau, ctx);
    c.lr = config_get(j, "lr", c.lr, ctx);
    c.ae_lr = config_get(j, "ae_lr", c.ae_lr, ctx);
    c.seed = config_get(j, "seed", c.seed, ctx);
    c.validate();
    return c;
}

Tensor<float> raster_to_tensor(const Raster& r) {
    if (r.width <= 0 || r.height <= 0) throw InvalidShape("raster_to_tensor: empty raster");
    Tensor<float> t(1, r.channels, r.height, r.width);
    for (int ch = 0; ch < r.channels; ++ch)
        for (int y = 0; y < r.height; ++y)
            for (int x = 0; x < r.width; ++x) t.at(0, ch, y, x) = r.at(y, x, ch);
    return t;
}

Raster tensor_to_raster(const Tensor<float>& t, RasterKind kind, float cell_size) {
    if (t.n != 1) throw InvalidShape("tensor_to_raster: batch dimension must be 1");
    Raster r(t.h, t.w, t.c, kind, cell_size);
    for (int ch = 0; ch < t.c; ++ch)
        for (int y = 0; y < t.h; ++y)
            for (int x = 0; x < t.w; ++x) r.at(y, x, ch) = t.at(0, ch, y, x);
    return r;
}

Tensor<float> encode_probability(const Raster& map) {
    if (map.channels != 1) throw InvalidShape("encode_probability: expected one channel");
    return encode_probability_tensor(raster_to_tensor(map));
}

Tensor<float> spatial_stack(const Raster& land_class, const Raster& gradient) {
    if (land_class.channels != 1)
        throw InvalidShape("spatial_stack: land raster must have one channel");
    if (gradient.channels != 2)
        throw InvalidShape("spatial_stack: gradient raster must have two channels");
    if (land_class.width != gradient.width || land_class.height != gradient.height)
        throw InvalidShape("spatial_stack: land and gradient dims differ");
    Tensor<float> t(1, kLandClasses + 2, land_class.height, land_class.width);
    for (int y = 0; y < land_class.height; ++y)
        for (int x = 0; x < land_class.width; ++x) {
            const long code = std::lround(land_class.at(y, x));
            if (code < 0 || code >= kLandClasses)
                throw InvalidInput("spatial_stack: land class code out of range");
            t.at(0, static_cast<int>(code), y, x) = 1.0f;
            t.at(0, kLandClasses, y, x) = gradient.at(y, x, 0);
            t.at(0, kLandClasses + 1, y, x) = gradient.at(y, x, 1);
        }
    return t;
}

std::vector<float> weather_channels(const WeatherSummary& norm_summary, int t,
                                    const std::array<float, 2>& norm_forcing) {
    if (t < 0 || t >= norm_summary.T)
        throw InvalidInput("weather_channels: interval index out of range");
    std::vector<float> v;
    v.reserve(kWeatherChannels);
    for (int stat = 0; stat < 2; ++stat)
        for (int var = 0; var < WeatherSummary::kVariables; ++var)
            v.push_back(norm_summary.at(stat, var, t));
    v.push_back(norm_forcing[0]);
    v.push_back(norm_forcing[1]);
    return v;
}

namespace {

ConvLayer<float> make_conv(const std::string& name, int oc, int ic, Rng& rng) {
    ConvLayer<float> l;
    l.w = Parameter<float>(name + ".w", glorot_conv(oc, ic, 3, rng));
    l.b = Parameter<float>(name + ".b", Tensor<float>(1, oc, 1, 1));
    return l;
}

Raster ignition_map(const Scenario& sc) {
    Raster r(sc.land_class.height, sc.land_class.width, 1, RasterKind::Probability,
             sc.land_class.cell_size);
    for (const auto& [row, col] : sc.ignition) {
        if (row < 0 || row >= r.height || col < 0 || col >= r.width)
            throw InvalidInput("scenario ignition lies outside the grid");
        r.at(row, col) = 1.0f;
    }
    return r;
}

void require_fitted(const NormRanges& r) {
    const NormRanges::Range* all[] = {&r.temperature, &r.wind_x, &r.wind_y,
                                      &r.humidity,    &r.curing, &r.drought};
    for (const auto* e : all)
        if (!(e->hi > e->lo))
            throw InvalidInput("emulate: model normalization ranges are degenerate");
}

Tensor<float> interior_of(const Tensor<float>& t, int pad) {
    Tape<float> tape;
    return crop_interior(tape.input(t), pad).val();
}

void scale_grads(const std::vector<Parameter<float>*>& params, float s) {
    for (auto* p : params)
        for (auto& g : p->grad.v) g *= s;
}

} // namespace

std::vector<Parameter<float>*> EmulatorModel::all_params() {
    return {&ae.d1.w,   &ae.d1.b,   &ae.d2.w,        &ae.d2.b,        &ae.d3.w,   &ae.d3.b,
            &feat.f1.w, &feat.f1.b, &feat.f2.w,      &feat.f2.b,      &feat.f3.w, &feat.f3.b,
            &feat.f4.w, &feat.f4.b, &inner.u1.w,     &inner.u1.b,     &inner.u2.w,
            &inner.u2.b, &inner.u3.w, &inner.u3.b,   &inner.u4.w,     &inner.u4.b,
            &inner.fhead.w, &inner.fhead.b};
}

std::vector<const Parameter<float>*> EmulatorModel::all_params() const {
    auto ps = const_cast<EmulatorModel*>(this)->all_params();
    return {ps.begin(), ps.end()};
}

std::vector<Parameter<float>*> EmulatorModel::trainable_params() {
    return {&feat.f1.w, &feat.f1.b, &feat.f2.w, &feat.f2.b, &feat.f3.w, &feat.f3.b,
            &feat.f4.w, &feat.f4.b, &inner.u1.w, &inner.u1.b, &inner.u2.w, &inner.u2.b,
            &inner.u3.w, &inner.u3.b, &inner.u4.w, &inner.u4.b, &inner.fhead.w,
            &inner.fhead.b};
}

bool EmulatorModel::autoencoder_frozen() const {
    return !ae.d1.w.trainable && !ae.d1.b.trainable && !ae.d2.w.trainable &&
           !ae.d2.b.trainable && !ae.d3.w.trainable && !ae.d3.b.trainable;
}

EmulatorModel init_model(const TrainConfig& cfg, const NormRanges& ranges) {
    cfg.validate();
    EmulatorModel m;
    m.cfg = cfg;
    m.ranges = ranges;
    Rng rng(hash_combine(cfg.seed, 0x6D));
    m.ae.d1 = make_conv("dec1", 16, kLatentChannels, rng);
    m.ae.d2 = make_conv("dec2", 8, kLatentChannels, rng);
    m.ae.d3 = make_conv("dec3", 1, 8, rng);
    m.feat.f1 = make_conv("feat1", 16, kLandClasses + 2, rng);
    m.feat.f2 = make_conv("feat2", 16, 16, rng);
    m.feat.f3 = make_conv("feat3", 32, 16, rng);
    m.feat.f4 = make_conv("feat4", 32, 32, rng);
    m.inner.u1 = make_conv("unet1", 32, inner_stack_channels(cfg.layer_c), rng);
    m.inner.u2 = make_conv("unet2", 64, 32, rng);
    m.inner.u3 = make_conv("unet3", 64, 64, rng);
    m.inner.u4 = make_conv("unet4", 32, 48, rng);
    // zero weights + bias -5 keep every F kernel at sigmoid(-5) initially, so
    // the first updates are small no matter what the stack contains
    const int fc = kFkernels * kLatentChannels;
    Tensor<float> fw(fc, 32, 3, 3);
    Tensor<float> fb(1, fc, 1, 1);
    std::fill(fb.v.begin(), fb.v.end(), -5.0f);
    m.inner.fhead.w = Parameter<float>("fhead.w", std::move(fw));
    m.inner.fhead.b = Parameter<float>("fhead.b", std::move(fb));
    return m;
}

void save_model(const EmulatorModel& m, const std::filesystem::path& path) {
    nlohmann::json cfg;
    cfg["train_config"] = train_config_to_json(m.cfg);
    cfg["norm_ranges"] = m.ranges.to_json();
    save_checkpoint(path.string(), m.all_params(), cfg);
}

EmulatorModel load_model(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open checkpoint: " + path.string());
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "PPW1", 4) != 0)
        throw FormatError("not a PPW1 checkpoint: " + path.string());
    std::uint32_t len = 0;
    f.read(reinterpret_cast<char*>(&len), 4);
    std::string hs(len, '\0');
    f.read(hs.data(), static_cast<std::streamsize>(len));
    if (!f) throw FormatError("truncated checkpoint header: " + path.string());

    TrainConfig cfg;
    NormRanges ranges;
    try {
        const nlohmann::json header = nlohmann::json::parse(hs);
        const nlohmann::json& echo = header.at("config");
        cfg = train_config_from_json(echo.at("train_config"));
        ranges = NormRanges::from_json(echo.at("norm_ranges"));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad checkpoint header: ") + e.what());
    }
    EmulatorModel m = init_model(cfg, ranges);
    load_checkpoint(path.string(), m.all_params());
    return m;
}

ProbabilityMapSeries rollout(const EmulatorModel& m, const Raster& initial_prob,
                             const Raster& land_class, const Raster& gradient,
                             const WeatherSummary& norm_summary,
                             const std::array<float, 2>& norm_forcing, int steps,
                             std::vector<Tensor<float>>* latents_out) {
    if (steps < 0) throw InvalidInput("rollout: negative step count");
    if (steps > norm_summary.T)
        throw InvalidInput("rollout: weather summary shorter than requested steps");
    if (initial_prob.width != land_class.width || initial_prob.height != land_class.height ||
        initial_prob.width != gradient.width || initial_prob.height != gradient.height)
        throw InvalidShape("rollout: initial map and spatial rasters disagree");

    // the tape wants mutable parameters; work on a copy so the shared model
    // stays read-only and rollouts can run concurrently
    EmulatorModel local = m;

    Tape<float> ftape;
    const Tensor<float> feats =
        feature_graph(ftape.input(spatial_stack(land_class, gradient)), local.feat).val();

    Tensor<float> latent = encode_probability(initial_prob);

    auto decode_now = [&](const Tensor<float>& lat) {
        Tape<float> tape;
        Tensor<float> d = decode_latent(tape.input(lat), local.ae).val();
        for (auto& e : d.v) e = std::clamp(e, 0.0f, 1.0f);
        return tensor_to_raster(d, RasterKind::Probability, initial_prob.cell_size);
    };

    ProbabilityMapSeries out;
    if (steps > 0) out.summary = summary_slice(norm_summary, 0, steps);
    if (latents_out) {
        latents_out->clear();
        latents_out->push_back(latent);
    }
    out.maps.push_back(decode_now(latent));
    out.maps.back().metadata["t_minutes"] = 0;

    for (int t = 0; t < steps; ++t) {
        Tape<float> tape;
        Var<float> lp = tape.input(latent);
        Var<float> fv = tape.input(feats);
        Var<float> wx = tape.input(
            broadcast_plane(weather_channels(norm_summary, t, norm_forcing), latent.h, latent.w));
        latent = inner_step_graph(lp, fv, wx, local.inner, local.cfg.layer_c).val();
        if (latents_out) latents_out->push_back(latent);
        out.maps.push_back(decode_now(latent));
        out.maps.back().metadata["t_minutes"] = (t + 1) * out.interval_minutes;
    }
    return out;
}

EmulationResult emulate_direct(const EmulatorModel& m, const Scenario& sc, int steps) {
    require_fitted(m.ranges);
    const auto t0 = std::chrono::steady_clock::now();
    const Raster initial = ignition_map(sc);
    const WeatherSummary ws = normalize_summary(summarize_ensemble({sc.base_weather}), m.ranges);
    const std::array<float, 2> forc = normalize_forcing(sc.forcing, m.ranges);
    ProbabilityMapSeries series = rollout(m, initial, sc.land_class, sc.gradient, ws, forc, steps);
    const auto t1 = std::chrono::steady_clock::now();
    return {std::move(series), std::chrono::duration<double>(t1 - t0).count()};
}

EmulationResult emulate_indirect_ensemble(const EmulatorModel& m, const Scenario& sc,
                                          int members, const NoiseModel& noise, int steps,
                                          std::uint64_t seed, int threads) {
    if (members < 1) throw InvalidInput("emulate_indirect_ensemble: members must be positive");
    require_fitted(m.ranges);
    const auto t0 = std::chrono::steady_clock::now();
    const Raster initial = ignition_map(sc);
    const std::array<float, 2> forc = normalize_forcing(sc.forcing, m.ranges);
    const std::size_t npix = initial.data.size();

    const int nthreads = std::clamp(threads, 1, members);
    std::vector<std::vector<std::vector<int>>> counts(
        nthreads, std::vector<std::vector<int>>(static_cast<std::size_t>(steps) + 1,
                                                std::vector<int>(npix, 0)));
    std::vector<WeatherSeries> perturbed(members);

    auto worker = [&](int wi) {
        for (int i = wi; i < members; i += nthreads) {
            Rng rng(seed + static_cast<std::uint64_t>(i));
            perturbed[i] = perturb_series(sc.base_weather, noise, rng);
            const WeatherSummary ws =
                normalize_summary(summarize_ensemble({perturbed[i]}), m.ranges);
            const ProbabilityMapSeries one =
                rollout(m, initial, sc.land_class, sc.gradient, ws, forc, steps);
            for (int k = 0; k <= steps; ++k) {
                const auto& d = one.maps[k].data;
                auto& cnt = counts[wi][k];
                for (std::size_t px = 0; px < npix; ++px)
                    if (d[px] >= 0.5f) ++cnt[px];
            }
        }
    };
    if (nthreads == 1) {
        worker(0);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(nthreads);
        for (int w = 0; w < nthreads; ++w) pool.emplace_back(worker, w);
        for (auto& th : pool) th.join();
    }
    for (int w = 1; w < nthreads; ++w)
        for (int k = 0; k <= steps; ++k)
            for (std::size_t px = 0; px < npix; ++px) counts[0][k][px] += counts[w][k][px];

    ProbabilityMapSeries series;
    if (steps > 0) series.summary = summary_slice(summarize_ensemble(perturbed), 0, steps);
    for (int k = 0; k <= steps; ++k) {
        Raster r(initial.height, initial.width, 1, RasterKind::Probability, initial.cell_size);
        for (std::size_t px = 0; px < npix; ++px)
            r.data[px] = static_cast<float>(counts[0][k][px]) / static_cast<float>(members);
        r.metadata["t_minutes"] = k * series.interval_minutes;
        series.maps.push_back(std::move(r));
    }
    const auto t1 = std::chrono::steady_clock::now();
    return {std::move(series), std::chrono::duration<double>(t1 - t0).count()};
}

AutoencoderResult train_autoencoder(EmulatorModel& model, const Dataset& ds) {
    const TrainConfig& cfg = model.cfg;
    cfg.validate();
    if (ds.train.empty() || ds.val.empty())
        throw InvalidInput("train_autoencoder: dataset needs train and validation samples");

    std::vector<Parameter<float>*> dec = {&model.ae.d1.w, &model.ae.d1.b, &model.ae.d2.w,
                                          &model.ae.d2.b, &model.ae.d3.w, &model.ae.d3.b};
    for (auto* p : dec) p->trainable = true;
    Adam<float> opt(dec, {cfg.ae_lr, 0.9, 0.999, 1e-8});

    std::vector<Tensor<float>> val_imgs;
    Rng vrng(hash_combine(cfg.seed, 0x61655F76));
    for (const auto& s : ds.val)
        for (int k = 0; k < 2; ++k) {
            const TrainingWindow w = sample_training_window(s, 1, cfg.crop, vrng);
            val_imgs.push_back(raster_to_tensor(w.y0));
            val_imgs.push_back(raster_to_tensor(w.yt));
        }

    auto recon_mse = [&](const Tensor<float>& img, bool backward) {
        Tape<float> tape;
        Var<float> rec = decode_latent(tape.input(encode_probability_tensor(img)), model.ae);
        Var<float> l = mse_against(rec, img);
        const double lv = l.val().v[0];
        if (backward && std::isfinite(lv)) tape.backward(l);
        return lv;
    };

    const int nwin =
        cfg.windows_per_epoch > 0 ? cfg.windows_per_epoch : static_cast<int>(ds.train.size());
    AutoencoderResult res;
    for (int e = 0; e < cfg.ae_epochs; ++e) {
        Rng erng(hash_combine(hash_combine(cfg.seed, 0x6165), static_cast<std::uint64_t>(e)));
        double lsum = 0.0;
        int count = 0;
        int pend = 0;
        for (int i = 0; i < nwin; ++i) {
            const DatasetSample& s = ds.train[static_cast<std::size_t>(i) % ds.train.size()];
            const TrainingWindow w = sample_training_window(s, 1, cfg.crop, erng);
            for (const Raster* crop : {&w.y0, &w.yt}) {
                const double lv = recon_mse(raster_to_tensor(*crop), true);
                if (!std::isfinite(lv))
                    throw NonConvergence("autoencoder loss became non-finite at epoch " +
                                         std::to_string(e + 1));
                lsum += lv;
                ++count;
                if (++pend == cfg.batch) {
                    scale_grads(dec, 1.0f / static_cast<float>(pend));
                    opt.step();
                    pend = 0;
                }
            }
        }
        if (pend > 0) {
            scale_grads(dec, 1.0f / static_cast<float>(pend));
            opt.step();
            pend = 0;
        }
        res.train_mse.push_back(lsum / count);

        double vsum = 0.0;
        for (const auto& img : val_imgs) vsum += recon_mse(img, false);
        const double vm = vsum / static_cast<double>(val_imgs.size());
        if (!std::isfinite(vm))
            throw NonConvergence("autoencoder validation MSE became non-finite at epoch " +
                                 std::to_string(e + 1));
        res.val_mse.push_back(vm);
    }
    res.final_val_mse = res.val_mse.back();
    for (auto* p : dec) p->trainable = false;
    return res;
}

namespace {

struct WindowEval {
    double loss = 0.0;
    double interior_mse = 0.0;
    double burned_area = 0.0;
};

WindowEval run_window(EmulatorModel& m, const TrainingWindow& w, bool backward) {
    Tape<float> tape;
    const Tensor<float> y0 = raster_to_tensor(w.y0);
    const Tensor<float> yt_int = interior_of(raster_to_tensor(w.yt), w.pad);
    const Tensor<float> y0_int = interior_of(y0, w.pad);

    double denom = 0.0;
    double area = 0.0;
    for (std::size_t i = 0; i < yt_int.v.size(); ++i) {
        const double d = static_cast<double>(y0_int.v[i]) - yt_int.v[i];
        denom += d * d;
        area += static_cast<double>(yt_int.v[i]) - y0_int.v[i];
    }
    denom /= static_cast<double>(yt_int.v.size());

    Var<float> feats = feature_graph(tape.input(spatial_stack(w.land, w.gradient)), m.feat);
    Var<float> lat = tape.input(encode_probability_tensor(y0));
    for (int t = 0; t < w.steps; ++t) {
        Var<float> wx = tape.input(broadcast_plane(weather_channels(w.weather, t, w.forcing),
                                                   lat.val().h, lat.val().w));
        lat = inner_step_graph(lat, feats, wx, m.inner, m.cfg.layer_c);
    }
    Var<float> yp = decode_latent(lat, m.ae);
    Var<float> mse_v = mse_against(crop_interior(yp, w.pad), yt_int);
    Var<float> loss = log_ratio(mse_v, static_cast<float>(denom), static_cast<float>(m.cfg.tau));

    WindowEval ev{loss.val().v[0], mse_v.val().v[0], area};
    if (backward && std::isfinite(ev.loss)) tape.backward(loss);
    return ev;
}

} // namespace

std::vector<EpochLog> train_model(EmulatorModel& model, const Dataset& ds) {
    const TrainConfig& cfg = model.cfg;
    cfg.validate();
    if (ds.train.empty() || ds.val.empty())
        throw InvalidInput("train_model: dataset needs train and validation samples");
    if (!model.autoencoder_frozen())
        throw InvalidInput("train_model: autoencoder must be pretrained and frozen first");
    const int window = cfg.crop + 2 * (cfg.crop / 8);
    if (window % 8 != 0)
        throw InvalidShape("train_model: crop " + std::to_string(cfg.crop) +
                           " yields a window not divisible by 8; use a multiple of 32");

    std::vector<Parameter<float>*> tp = model.trainable_params();
    Adam<float> opt(tp, {cfg.lr, 0.9, 0.999, 1e-8});

    std::vector<TrainingWindow> val_windows;
    Rng vrng(hash_combine(cfg.seed, 0x76616C));
    for (const auto& s : ds.val)
        for (int k = 0; k < 2; ++k)
            val_windows.push_back(sample_training_window(s, cfg.steps, cfg.crop, vrng));

    const int nwin =
        cfg.windows_per_epoch > 0 ? cfg.windows_per_epoch : static_cast<int>(ds.train.size());
    std::vector<EpochLog> log;
    for (int e = 0; e < cfg.epochs; ++e) {
        Rng erng(hash_combine(hash_combine(cfg.seed, 0x7472), static_cast<std::uint64_t>(e)));
        double lsum = 0.0;
        int pend = 0;
        for (int i = 0; i < nwin; ++i) {
            const DatasetSample& s = ds.train[static_cast<std::size_t>(i) % ds.train.size()];
            const TrainingWindow w = sample_training_window(s, cfg.steps, cfg.crop, erng);
            const WindowEval ev = run_window(model, w, true);
            if (!std::isfinite(ev.loss))
                throw NonConvergence("training loss became non-finite at epoch " +
                                     std::to_string(e + 1) + ", window " + std::to_string(i));
            lsum += ev.loss;
            if (++pend == cfg.batch) {
                scale_grads(tp, 1.0f / static_cast<float>(pend));
                opt.step();
                pend = 0;
            }
        }
        if (pend > 0) {
            scale_grads(tp, 1.0f / static_cast<float>(pend));
            opt.step();
            pend = 0;
        }

        double vsum = 0.0;
        std::vector<std::pair<double, double>> parts;
        for (const auto& w : val_windows) {
            const WindowEval ev = run_window(model, w, false);
            if (!std::isfinite(ev.loss))
                throw NonConvergence("validation loss became non-finite at epoch " +
                                     std::to_string(e + 1));
            vsum += ev.loss;
            parts.emplace_back(ev.interior_mse, ev.burned_area);
        }
        double total_area = 0.0;
        for (const auto& pa : parts) total_area += pa.second;
        const double vw = total_area > 0.0 ? wmse_from_parts(parts) : 0.0;
        log.push_back({e + 1, lsum / nwin, vsum / static_cast<double>(val_windows.size()), vw});
    }
    return log;
}

nlohmann::json epoch_log_to_json(const std::vector<EpochLog>& log) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& e : log)
        a.push_back({{"epoch", e.epoch},
                     {"train_loss", e.train_loss},
                     {"val_loss", e.val_loss},
                     {"val_wmse", e.val_wmse}});
    return a;
}

} // namespace pyroprop
