#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "pyroprop/emulator.hpp"
#include "pyroprop/metrics.hpp"

using namespace pyroprop;

namespace {

constexpr double kSigNeg5 = 0.0066928509242848554;  // 1 / (1 + e^5)
constexpr double kInitBound = 0.052305217459810649; // 1 - (1 - kSigNeg5)^8

const Dataset& tiny_dataset() {
    static const Dataset ds = [] {
        DatasetConfig cfg;
        cfg.num_scenarios = 5;
        cfg.scenario.grid_size = 48;
        cfg.scenario.duration_hours = 2.0;
        cfg.scenario.feature_scale_cells = 16.0;
        cfg.ensemble.members = 4;
        cfg.ensemble.substep_minutes = 2;
        return build_dataset(cfg, FuelModel::defaults(), 4242, "");
    }();
    return ds;
}

TrainConfig tiny_config(LayerC c = LayerC::Sobel) {
    TrainConfig cfg;
    cfg.crop = 32;
    cfg.steps = 1;
    cfg.batch = 4;
    cfg.ae_epochs = 8;
    cfg.epochs = 2;
    cfg.layer_c = c;
    cfg.seed = 11;
    return cfg;
}

struct BaseModel {
    EmulatorModel model;
    AutoencoderResult ae;
};

// config-B model with the decoder already trained and frozen; copy per test
const BaseModel& base_model() {
    static const BaseModel b = [] {
        TrainConfig cfg = tiny_config();
        cfg.ae_epochs = 10;
        cfg.ae_lr = 1e-2;
        cfg.windows_per_epoch = 16;
        BaseModel bm{init_model(cfg, tiny_dataset().ranges), {}};
        bm.ae = train_autoencoder(bm.model, tiny_dataset());
        return bm;
    }();
    return b;
}

Tensor<float> random_tensor(int n, int c, int h, int w, Rng& rng, float lo = 0.0f,
                            float hi = 1.0f) {
    Tensor<float> t(n, c, h, w);
    for (auto& e : t.v) e = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

void randomize_fhead(EmulatorModel& m, std::uint64_t seed, double amp = 0.3) {
    Rng rng(seed);
    for (auto& w : m.inner.fhead.w.value.v) w = static_cast<float>(rng.uniform(-amp, amp));
}

Tensor<float> step_once(EmulatorModel& m, const Tensor<float>& latent,
                        const Tensor<float>& feats, const std::vector<float>& wx) {
    Tape<float> tape;
    return inner_step_graph(tape.input(latent), tape.input(feats),
                            tape.input(broadcast_plane(wx, latent.h, latent.w)), m.inner,
                            m.cfg.layer_c)
        .val();
}

double eval_window_loss(const EmulatorModel& m, const TrainingWindow& w) {
    const ProbabilityMapSeries s =
        rollout(m, w.y0, w.land, w.gradient, w.weather, w.forcing, w.steps);
    return loss_value(strip_border(s.maps.back(), w.pad), strip_border(w.yt, w.pad),
                      strip_border(w.y0, w.pad), m.cfg.tau);
}

WeatherSummary random_summary(int T, std::uint64_t seed) {
    WeatherSummary s(T);
    Rng rng(seed);
    for (auto& v : s.values) v = static_cast<float>(rng.uniform(-0.8, 0.8));
    return s;
}

std::vector<char> file_bytes(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f.good());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

} // namespace

TEST_CASE("train config validation and json round trip") {
    TrainConfig c;
    c.steps = 4;
    c.crop = 128;
    c.layer_c = LayerC::Identity;
    c.windows_per_epoch = 64;
    c.seed = 977;
    const TrainConfig r = train_config_from_json(train_config_to_json(c));
    CHECK(r.steps == 4);
    CHECK(r.crop == 128);
    CHECK(r.layer_c == LayerC::Identity);
    CHECK(r.windows_per_epoch == 64);
    CHECK(r.seed == 977);
    CHECK(r.tau == c.tau);

    CHECK_THROWS_AS(train_config_from_json({{"lr0", 1.0}}), ConfigError);
    CHECK_THROWS_AS(train_config_from_json({{"layer_c", "both"}}), ConfigError);
    CHECK_THROWS_AS(train_config_from_json({{"crop", 20}}), ConfigError);
    CHECK_THROWS_AS(train_config_from_json({{"steps", 0}}), ConfigError);
    CHECK_THROWS_AS(train_config_from_json({{"tau", 0.0}}), ConfigError);
}

TEST_CASE("weather channels follow mean/std/forcing order") {
    WeatherSummary s(3);
    for (int stat = 0; stat < 2; ++stat)
        for (int var = 0; var < 4; ++var)
            for (int t = 0; t < 3; ++t)
                s.at(stat, var, t) = static_cast<float>(100 * stat + 10 * var + t);
    const std::vector<float> v = weather_channels(s, 2, {0.5f, -0.25f});
    REQUIRE(v.size() == 10);
    CHECK(v[0] == 2.0f);   // mean temperature
    CHECK(v[1] == 12.0f);  // mean wind x
    CHECK(v[3] == 32.0f);  // mean humidity
    CHECK(v[4] == 102.0f); // std temperature
    CHECK(v[7] == 132.0f);
    CHECK(v[8] == 0.5f);
    CHECK(v[9] == -0.25f);
    CHECK_THROWS_AS(weather_channels(s, 3, {0.0f, 0.0f}), InvalidInput);
    CHECK_THROWS_AS(weather_channels(s, -1, {0.0f, 0.0f}), InvalidInput);
}

TEST_CASE("spatial stack one-hot layout") {
    Raster land(2, 2, 1, RasterKind::LandClass);
    land.at(0, 0) = 0.0f;
    land.at(0, 1) = 4.0f;
    land.at(1, 0) = 2.0f;
    land.at(1, 1) = 1.0f;
    Raster grad(2, 2, 2, RasterKind::Gradient);
    grad.at(0, 1, 0) = 0.25f;
    grad.at(0, 1, 1) = -0.5f;

    const Tensor<float> t = spatial_stack(land, grad);
    REQUIRE(t.c == 7);
    CHECK(t.at(0, 0, 0, 0) == 1.0f);
    CHECK(t.at(0, 4, 0, 1) == 1.0f);
    CHECK(t.at(0, 2, 1, 0) == 1.0f);
    CHECK(t.at(0, 1, 1, 1) == 1.0f);
    CHECK(t.at(0, 1, 0, 0) == 0.0f);
    CHECK(t.at(0, 5, 0, 1) == 0.25f);
    CHECK(t.at(0, 6, 0, 1) == -0.5f);
    float onehot = 0.0f;
    for (int c = 0; c < 5; ++c) onehot += t.at(0, c, 0, 0);
    CHECK(onehot == 1.0f);

    Raster bad = land;
    bad.at(0, 0) = 7.0f;
    CHECK_THROWS_AS(spatial_stack(bad, grad), InvalidInput);
    CHECK_THROWS_AS(spatial_stack(land, Raster(2, 2, 1, RasterKind::Gradient)), InvalidShape);
    CHECK_THROWS_AS(spatial_stack(land, Raster(4, 4, 2, RasterKind::Gradient)), InvalidShape);
}

TEST_CASE("probability encoder preserves values") {
    Raster zeros(8, 8, 1, RasterKind::Probability);
    const Tensor<float> lz = encode_probability(zeros);
    REQUIRE(lz.c == 4);
    REQUIRE(lz.h == 2);
    REQUIRE(lz.w == 2);
    for (float v : lz.v) CHECK(v == 0.0f);

    Raster ones(8, 8, 1, RasterKind::Probability, 30.0f, 1.0f);
    for (float v : encode_probability(ones).v) CHECK(v == 1.0f);

    Raster flat(8, 8, 1, RasterKind::Probability, 30.0f, 0.37f);
    for (float v : encode_probability(flat).v) CHECK(v == 0.37f);

    Rng rng(5);
    Raster rand(16, 16, 1, RasterKind::Probability);
    for (auto& v : rand.data) v = static_cast<float>(rng.next_double());
    for (float v : encode_probability(rand).v) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }

    CHECK_THROWS_AS(encode_probability(Raster(6, 6, 1, RasterKind::Probability)), InvalidShape);
    CHECK_THROWS_AS(encode_probability(Raster(8, 8, 2, RasterKind::Probability)), InvalidShape);
}

TEST_CASE("single burning pixel lands in exactly one latent channel") {
    // maxpool shrinks 4x4 to 2x2 keeping the 1 in its quadrant, then the
    // rearrange sends pool cell (pr, pc) to channel 2*pr + pc
    const std::pair<int, int> pixels[] = {{1, 2}, {3, 3}, {0, 0}, {2, 1}};
    const int expected_channel[] = {1, 3, 0, 2};
    for (int k = 0; k < 4; ++k) {
        Raster m(4, 4, 1, RasterKind::Probability);
        m.at(pixels[k].first, pixels[k].second) = 1.0f;
        const Tensor<float> lat = encode_probability(m);
        REQUIRE(lat.size() == 4);
        int ones = 0;
        for (int c = 0; c < 4; ++c) {
            if (lat.at(0, c, 0, 0) == 1.0f) {
                ++ones;
                CHECK(c == expected_channel[k]);
            } else {
                CHECK(lat.at(0, c, 0, 0) == 0.0f);
            }
        }
        CHECK(ones == 1);
    }
}

TEST_CASE("decoder and feature encoder shapes") {
    EmulatorModel m = init_model(tiny_config(), NormRanges{});
    Rng rng(7);

    Tape<float> t1;
    const Tensor<float> dec =
        decode_latent(t1.input(random_tensor(1, 4, 4, 4, rng)), m.ae).val();
    CHECK(dec.c == 1);
    CHECK(dec.h == 16);
    CHECK(dec.w == 16);
    for (float v : dec.v) {
        CHECK(v > 0.0f);
        CHECK(v < 1.0f);
    }

    Tape<float> t2;
    const Tensor<float> f =
        feature_graph(t2.input(random_tensor(1, 7, 64, 64, rng)), m.feat).val();
    CHECK(f.c == 32);
    CHECK(f.h == 16); // two stride-2 convs: 64 -> 32 -> 16
    CHECK(f.w == 16);

    // F-head init: zero weights, bias -5 on every kernel
    CHECK(m.inner.fhead.w.value.n == kFkernels * kLatentChannels);
    for (float v : m.inner.fhead.w.value.v) CHECK(v == 0.0f);
    for (float v : m.inner.fhead.b.value.v) CHECK(v == -5.0f);
}

TEST_CASE("fresh inner step is gently expansive") {
    EmulatorModel m = init_model(tiny_config(), NormRanges{});
    Rng rng(23);
    const Tensor<float> latent = random_tensor(1, 4, 8, 8, rng, 0.02f, 0.98f);
    const Tensor<float> feats = random_tensor(1, 32, 8, 8, rng, -1.0f, 1.0f);
    std::vector<float> wx(10);
    for (auto& v : wx) v = static_cast<float>(rng.uniform(-1.0, 1.0));

    const Tensor<float> out = step_once(m, latent, feats, wx);
    const double q = std::pow(1.0 - kSigNeg5, 8.0);
    for (std::size_t i = 0; i < out.v.size(); ++i) {
        const double p = latent.v[i];
        const double inc = out.v[i] - p;
        CHECK(inc >= 0.0);
        CHECK(inc <= kInitBound + 1e-6);
        CHECK(out.v[i] == doctest::Approx(p + (1.0 - p) * (1.0 - q)).epsilon(1e-5));
    }
}

TEST_CASE("saturated latent is a fixed point of the update") {
    EmulatorModel m = init_model(tiny_config(), NormRanges{});
    randomize_fhead(m, 91);
    Rng rng(29);
    Tensor<float> ones(1, 4, 8, 8);
    std::fill(ones.v.begin(), ones.v.end(), 1.0f);
    const Tensor<float> out =
        step_once(m, ones, random_tensor(1, 32, 8, 8, rng, -1.0f, 1.0f),
                  std::vector<float>(10, 0.3f));
    for (float v : out.v) CHECK(v == 1.0f);
}

TEST_CASE("inner step output dominates its input") {
    EmulatorModel m = init_model(tiny_config(), NormRanges{});
    randomize_fhead(m, 137);
    Rng rng(31);
    const Tensor<float> latent = random_tensor(1, 4, 8, 8, rng);
    const Tensor<float> out = step_once(
        m, latent, random_tensor(1, 32, 8, 8, rng, -2.0f, 2.0f), std::vector<float>(10, -0.4f));
    bool grew = false;
    for (std::size_t i = 0; i < out.v.size(); ++i) {
        CHECK(out.v[i] >= latent.v[i]);
        CHECK(out.v[i] <= 1.0f);
        if (out.v[i] > latent.v[i]) grew = true;
    }
    CHECK(grew);
}

TEST_CASE("gradient check: decoder graph") {
    EmulatorModel m = init_model(tiny_config(), NormRanges{});
    AutoencoderParams<double> dec = m.ae.cast<double>();
    Rng rng(17);
    Tensor<double> latent(1, 4, 4, 4);
    for (auto& e : latent.v) e = rng.uniform(0.05, 0.95);
    Tensor<double> target(1, 1, 16, 16);
    for (auto& e : target.v) e = rng.next_double();
    const double err = grad_check(
        [&](Tape<double>&, std::vector<Var<double>>& in) {
            return mse_against(decode_latent(in[0], dec), target);
        },
        {latent}, 1e-4, 40);
    CHECK(err < 1e-6);
}

TEST_CASE("gradient check: feature encoder graph") {
    EmulatorModel m = init_model(tiny_config(), NormRanges{});
    FeatureParams<double> fp = m.feat.cast<double>();
    Rng rng(19);
    Tensor<double> spatial(1, 7, 8, 8);
    for (auto& e : spatial.v) e = rng.uniform(-1.0, 1.0);
    Tensor<double> target(1, 32, 2, 2);
    for (auto& e : target.v) e = rng.uniform(-1.0, 1.0);
    const double err = grad_check(
        [&](Tape<double>&, std::vector<Var<double>>& in) {
            return mse_against(feature_graph(in[0], fp), target);
        },
        {spatial}, 1e-4, 40);
    CHECK(err < 1e-6);
}

TEST_CASE("gradient check: one training step end to end") {
    EmulatorModel m = init_model(tiny_config(), NormRanges{});
    randomize_fhead(m, 211, 0.2);
    AutoencoderParams<double> dec = m.ae.cast<double>();
    FeatureParams<double> fp = m.feat.cast<double>();
    InnerParams<double> ip = m.inner.cast<double>();

    Rng rng(37);
    Tensor<double> y0(1, 1, 16, 16);
    for (auto& e : y0.v) e = rng.next_double();
    Tensor<double> spatial(1, 7, 16, 16);
    for (auto& e : spatial.v) e = rng.uniform(-1.0, 1.0);
    Tensor<double> weather(1, 10, 4, 4);
    for (auto& e : weather.v) e = rng.uniform(-1.0, 1.0);
    Tensor<double> target(1, 1, 12, 12);
    for (auto& e : target.v) e = rng.next_double();

    const double err = grad_check(
        [&](Tape<double>&, std::vector<Var<double>>& in) {
            Var<double> lat = space_to_depth2(maxpool2(in[0]));
            Var<double> f = feature_graph(in[1], fp);
            Var<double> next = inner_step_graph(lat, f, in[2], ip, LayerC::Sobel);
            Var<double> yp = decode_latent(next, dec);
            return log_ratio(mse_against(crop_interior(yp, 2), target), 0.01, 1e-12);
        },
        {y0, spatial, weather}, 1e-4, 30);
    // looser than the per-op checks: the composite crosses leaky-relu kinks
    CHECK(err < 1e-5);
}

TEST_CASE("rollout basics: reconstruction, monotone latents, determinism") {
    EmulatorModel m = init_model(tiny_config(), NormRanges{});
    randomize_fhead(m, 313);

    const int n = 24;
    Raster land(n, n, 1, RasterKind::LandClass);
    Raster grad(n, n, 2, RasterKind::Gradient);
    Raster initial(n, n, 1, RasterKind::Probability);
    initial.at(11, 12) = 1.0f;
    initial.at(12, 12) = 1.0f;
    const WeatherSummary ws = random_summary(6, 77);
    const std::array<float, 2> forc{0.1f, -0.2f};

    const ProbabilityMapSeries rec = rollout(m, initial, land, grad, ws, forc, 0);
    REQUIRE(rec.maps.size() == 1);
    CHECK(rec.summary.T == 0);
    {
        Tape<float> t;
        Tensor<float> d = decode_latent(t.input(encode_probability(initial)), m.ae).val();
        const Raster manual = tensor_to_raster(d, RasterKind::Probability, initial.cell_size);
        CHECK(rec.maps[0].data == manual.data);
    }

    std::vector<Tensor<float>> latents;
    const ProbabilityMapSeries run = rollout(m, initial, land, grad, ws, forc, 4, &latents);
    REQUIRE(run.maps.size() == 5);
    REQUIRE(latents.size() == 5);
    CHECK(run.summary.T == 4);
    for (std::size_t k = 1; k < latents.size(); ++k)
        for (std::size_t i = 0; i < latents[k].v.size(); ++i)
            CHECK(latents[k].v[i] >= latents[k - 1].v[i]);
    for (std::size_t k = 0; k < run.maps.size(); ++k) {
        CHECK(run.maps[k].metadata.at("t_minutes").get<int>() == static_cast<int>(k) * 30);
        for (float v : run.maps[k].data) {
            CHECK(v >= 0.0f);
            CHECK(v <= 1.0f);
        }
    }

    const ProbabilityMapSeries again = rollout(m, initial, land, grad, ws, forc, 4);
    for (std::size_t k = 0; k < run.maps.size(); ++k)
        CHECK(run.maps[k].data == again.maps[k].data);

    CHECK_THROWS_AS(rollout(m, initial, land, grad, ws, forc, 7), InvalidInput);
    CHECK_THROWS_AS(rollout(m, initial, Raster(n + 8, n + 8, 1, RasterKind::LandClass),
                            Raster(n + 8, n + 8, 2, RasterKind::Gradient), ws, forc, 2),
                    InvalidShape);
    CHECK_THROWS_AS(
        rollout(m, Raster(30, 30, 1, RasterKind::Probability),
                Raster(30, 30, 1, RasterKind::LandClass), Raster(30, 30, 2, RasterKind::Gradient),
                ws, forc, 2),
        InvalidShape);
}

TEST_CASE("sobel hook fires once per inner step") {
    EmulatorModel m = init_model(tiny_config(), NormRanges{});
    const int n = 16;
    Raster land(n, n, 1, RasterKind::LandClass);
    Raster grad(n, n, 2, RasterKind::Gradient);
    Raster initial(n, n, 1, RasterKind::Probability);
    initial.at(8, 8) = 1.0f;

    // 14 h of 30-min intervals = 28 inner steps
    sobel_invocations() = 0;
    rollout(m, initial, land, grad, random_summary(28, 3), {0.0f, 0.0f}, 28);
    CHECK(sobel_invocations().load() == 28);
}

TEST_CASE("config A never executes the sobel path") {
    const Dataset& ds = tiny_dataset();
    TrainConfig cfg = tiny_config(LayerC::Identity);
    cfg.ae_epochs = 3;
    cfg.epochs = 1;
    cfg.windows_per_epoch = 4;
    cfg.batch = 2;
    EmulatorModel m = init_model(cfg, ds.ranges);

    sobel_invocations() = 0;
    train_autoencoder(m, ds);
    train_model(m, ds);
    const TrainingWindow w =
        [&] { Rng r(71); return sample_training_window(ds.train[0], 1, 32, r); }();
    rollout(m, w.y0, w.land, w.gradient, w.weather, w.forcing, 1);
    CHECK(sobel_invocations().load() == 0);

    EmulatorModel b = base_model().model;
    rollout(b, w.y0, w.land, w.gradient, w.weather, w.forcing, 1);
    CHECK(sobel_invocations().load() == 1);
}

TEST_CASE("autoencoder training reports MSE and freezes the decoder") {
    const BaseModel& b = base_model();
    REQUIRE(b.ae.train_mse.size() == 10);
    REQUIRE(b.ae.val_mse.size() == 10);
    for (double v : b.ae.train_mse) CHECK(std::isfinite(v));
    CHECK(b.ae.final_val_mse == b.ae.val_mse.back());
    CHECK(b.ae.val_mse.back() < b.ae.val_mse.front());
    CHECK(b.ae.final_val_mse < 0.05);
    CHECK(b.model.autoencoder_frozen());

    // training refuses a model whose decoder was never frozen
    EmulatorModel fresh = init_model(tiny_config(), tiny_dataset().ranges);
    CHECK_FALSE(fresh.autoencoder_frozen());
    CHECK_THROWS_AS(train_model(fresh, tiny_dataset()), InvalidInput);
}

TEST_CASE("model training logs epochs and never touches the frozen decoder") {
    const Dataset& ds = tiny_dataset();
    EmulatorModel m = base_model().model;
    m.cfg.epochs = 2;
    m.cfg.windows_per_epoch = 6;
    m.cfg.batch = 3;

    std::vector<std::vector<float>> ae_before;
    for (const auto* p : static_cast<const EmulatorModel&>(m).all_params())
        if (p->name.rfind("dec", 0) == 0) ae_before.push_back(p->value.v);
    const std::vector<float> u1_before = m.inner.u1.w.value.v;

    const std::vector<EpochLog> log = train_model(m, ds);
    REQUIRE(log.size() == 2);
    CHECK(log[0].epoch == 1);
    CHECK(log[1].epoch == 2);
    for (const auto& e : log) {
        CHECK(std::isfinite(e.train_loss));
        CHECK(std::isfinite(e.val_loss));
        CHECK(std::isfinite(e.val_wmse));
        CHECK(e.val_wmse >= 0.0);
    }

    std::size_t k = 0;
    for (const auto* p : static_cast<const EmulatorModel&>(m).all_params())
        if (p->name.rfind("dec", 0) == 0) CHECK(p->value.v == ae_before[k++]);
    CHECK(m.inner.u1.w.value.v != u1_before);

    const nlohmann::json j = epoch_log_to_json(log);
    REQUIRE(j.size() == 2);
    CHECK(j[0].at("epoch") == 1);
    CHECK(j[1].at("train_loss").get<double>() == log[1].train_loss);
}

TEST_CASE("one epoch strictly improves a four sample overfit set") {
    const Dataset& ds = tiny_dataset();
    REQUIRE(ds.train.size() == 4);

    std::vector<TrainingWindow> probes;
    Rng wrng(505);
    for (const auto& s : ds.train)
        for (int k = 0; k < 2; ++k) probes.push_back(sample_training_window(s, 1, 32, wrng));

    EmulatorModel m = base_model().model;
    m.cfg.epochs = 1;
    m.cfg.windows_per_epoch = 32;
    m.cfg.lr = 3e-3;

    double before = 0.0;
    for (const auto& w : probes) before += eval_window_loss(m, w);
    before /= static_cast<double>(probes.size());

    train_model(m, ds);

    double after = 0.0;
    for (const auto& w : probes) after += eval_window_loss(m, w);
    after /= static_cast<double>(probes.size());

    CHECK(std::isfinite(before));
    CHECK(std::isfinite(after));
    CHECK(after < before);
}

TEST_CASE("checkpoint round trip reproduces rollouts bit for bit") {
    namespace fs = std::filesystem;
    const Dataset& ds = tiny_dataset();
    EmulatorModel m = base_model().model;
    m.cfg.epochs = 1;
    m.cfg.windows_per_epoch = 4;
    m.cfg.batch = 2;
    train_model(m, ds);

    const fs::path path = fs::temp_directory_path() / "pyroprop_ckpt_test.ppw";
    save_model(m, path);
    const EmulatorModel r = load_model(path);

    CHECK(r.cfg.crop == m.cfg.crop);
    CHECK(r.cfg.layer_c == m.cfg.layer_c);
    CHECK(r.cfg.seed == m.cfg.seed);
    CHECK(r.ranges.temperature.lo == m.ranges.temperature.lo);
    CHECK(r.ranges.wind_x.hi == m.ranges.wind_x.hi);
    CHECK(r.autoencoder_frozen());

    const auto pa = static_cast<const EmulatorModel&>(m).all_params();
    const auto pb = static_cast<const EmulatorModel&>(r).all_params();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i]->name == pb[i]->name);
        CHECK(pa[i]->trainable == pb[i]->trainable);
        CHECK(pa[i]->value.v == pb[i]->value.v);
    }

    Rng wr(606);
    const TrainingWindow w = sample_training_window(ds.val[0], 1, 32, wr);
    const ProbabilityMapSeries a = rollout(m, w.y0, w.land, w.gradient, w.weather, w.forcing, 1);
    const ProbabilityMapSeries b = rollout(r, w.y0, w.land, w.gradient, w.weather, w.forcing, 1);
    REQUIRE(a.maps.size() == b.maps.size());
    for (std::size_t k = 0; k < a.maps.size(); ++k) CHECK(a.maps[k].data == b.maps[k].data);

    // a second save of the loaded model is byte-identical
    const fs::path path2 = fs::temp_directory_path() / "pyroprop_ckpt_test2.ppw";
    save_model(r, path2);
    CHECK(file_bytes(path) == file_bytes(path2));

    std::ofstream(path, std::ios::binary) << "PPW1garbage";
    CHECK_THROWS_AS(load_model(path), FormatError);
    fs::remove(path);
    fs::remove(path2);
    CHECK_THROWS_AS(load_model(fs::temp_directory_path() / "missing.ppw"), DataError);
}

TEST_CASE("direct emulation is deterministic and range-checked") {
    ScenarioConfig sc_cfg;
    sc_cfg.grid_size = 32;
    sc_cfg.duration_hours = 2.0;
    sc_cfg.feature_scale_cells = 12.0;
    const Scenario sc = generate_scenario(sc_cfg, FuelModel::defaults(), 7, 31);

    const EmulatorModel m = base_model().model;
    const EmulationResult res = emulate_direct(m, sc, 4);
    REQUIRE(res.series.maps.size() == 5);
    CHECK(res.wall_seconds > 0.0);
    CHECK(res.series.summary.T == 4);
    for (const auto& map : res.series.maps)
        for (float v : map.data) {
            CHECK(v >= 0.0f);
            CHECK(v <= 1.0f);
        }

    const EmulationResult res2 = emulate_direct(m, sc, 4);
    for (std::size_t k = 0; k < res.series.maps.size(); ++k)
        CHECK(res.series.maps[k].data == res2.series.maps[k].data);

    EmulatorModel degenerate = m;
    degenerate.ranges.humidity.lo = degenerate.ranges.humidity.hi = 40.0;
    CHECK_THROWS_AS(emulate_direct(degenerate, sc, 4), InvalidInput);
}

TEST_CASE("indirect ensemble flattens thresholded member masks") {
    ScenarioConfig sc_cfg;
    sc_cfg.grid_size = 32;
    sc_cfg.duration_hours = 2.0;
    sc_cfg.feature_scale_cells = 12.0;
    const Scenario sc = generate_scenario(sc_cfg, FuelModel::defaults(), 8, 57);
    const EmulatorModel m = base_model().model;
    const NoiseModel noise;

    const EmulationResult four = emulate_indirect_ensemble(m, sc, 4, noise, 3, 99);
    REQUIRE(four.series.maps.size() == 4);
    CHECK(four.series.summary.T == 3);
    for (const auto& map : four.series.maps)
        for (float v : map.data) {
            const float scaled = v * 4.0f;
            CHECK(scaled == std::floor(scaled)); // multiples of 1/4
            CHECK(v >= 0.0f);
            CHECK(v <= 1.0f);
        }

    const EmulationResult threaded = emulate_indirect_ensemble(m, sc, 4, noise, 3, 99, 3);
    for (std::size_t k = 0; k < four.series.maps.size(); ++k)
        CHECK(four.series.maps[k].data == threaded.series.maps[k].data);

    // N=1 equals the single member's thresholded rollout
    const EmulationResult single = emulate_indirect_ensemble(m, sc, 1, noise, 3, 99);
    Rng r0(99);
    const WeatherSeries pert = perturb_series(sc.base_weather, noise, r0);
    const WeatherSummary ws = normalize_summary(summarize_ensemble({pert}), m.ranges);
    Raster initial(32, 32, 1, RasterKind::Probability, sc.land_class.cell_size);
    for (const auto& [rr, cc] : sc.ignition) initial.at(rr, cc) = 1.0f;
    const ProbabilityMapSeries member =
        rollout(m, initial, sc.land_class, sc.gradient, ws, normalize_forcing(sc.forcing, m.ranges), 3);
    for (std::size_t k = 0; k < single.series.maps.size(); ++k)
        for (std::size_t i = 0; i < single.series.maps[k].data.size(); ++i) {
            const float expect = member.maps[k].data[i] >= 0.5f ? 1.0f : 0.0f;
            CHECK(single.series.maps[k].data[i] == expect);
        }

    CHECK_THROWS_AS(emulate_indirect_ensemble(m, sc, 0, noise, 3, 99), InvalidInput);
}
