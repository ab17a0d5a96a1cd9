#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "pyroprop/ensemble.hpp"
#include "pyroprop/raster.hpp"
#include "pyroprop/tensor.hpp"
#include "pyroprop/weather.hpp"

namespace pyroprop {

// Layer C ablation: config A bypasses the edge channels entirely, config B
// appends Sobel edges of the latent state to the inner input stack.
enum class LayerC { Identity, Sobel };

struct TrainConfig {
    int steps = 4;             // D, intervals rolled between initial and target
    int crop = 128;            // c; padding is fixed at c/8
    LayerC layer_c = LayerC::Sobel;
    int batch = 16;
    int ae_epochs = 25;
    int epochs = 50;
    int windows_per_epoch = 0; // 0: one window per training sample
    double tau = 1e-12;
    double lr = 1e-3;
    double ae_lr = 1e-3;
    std::uint64_t seed = 0;

    void validate() const;
};

nlohmann::json train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

inline std::atomic<long>& sobel_invocations() {
    static std::atomic<long> count{0};
    return count;
}

template <typename T>
struct ConvLayer {
    Parameter<T> w, b;

    template <typename U>
    ConvLayer<U> cast() const {
        ConvLayer<U> o;
        o.w = Parameter<U>(w.name, w.value.template cast<U>(), w.trainable);
        o.b = Parameter<U>(b.name, b.value.template cast<U>(), b.trainable);
        return o;
    }
};

// decoder of the probability autoencoder; the encoder is parameter-free
template <typename T>
struct AutoencoderParams {
    ConvLayer<T> d1; // 4 -> 16 at quarter resolution
    ConvLayer<T> d2; // 4 -> 8 at half resolution (after depth_to_space)
    ConvLayer<T> d3; // 8 -> 1 at full resolution

    template <typename U>
    AutoencoderParams<U> cast() const {
        return {d1.template cast<U>(), d2.template cast<U>(), d3.template cast<U>()};
    }
};

template <typename T>
struct FeatureParams {
    ConvLayer<T> f1; // 7 -> 16
    ConvLayer<T> f2; // 16 -> 16, stride 2
    ConvLayer<T> f3; // 16 -> 32
    ConvLayer<T> f4; // 32 -> 32, stride 2

    template <typename U>
    FeatureParams<U> cast() const {
        return {f1.template cast<U>(), f2.template cast<U>(), f3.template cast<U>(),
                f4.template cast<U>()};
    }
};

inline constexpr int kFkernels = 8;        // K in the update layer
inline constexpr int kLatentChannels = 4;
inline constexpr int kLandClasses = 5;
inline constexpr int kWeatherChannels = 10; // 2 stats x 4 variables + 2 forcing

template <typename T>
struct InnerParams {
    ConvLayer<T> u1;    // stack -> 32
    ConvLayer<T> u2;    // 32 -> 64, stride 2
    ConvLayer<T> u3;    // 64 -> 64
    ConvLayer<T> u4;    // 48 -> 32 after the skip concat
    ConvLayer<T> fhead; // 32 -> K * latent channels, bias -5, zero weights

    template <typename U>
    InnerParams<U> cast() const {
        return {u1.template cast<U>(), u2.template cast<U>(), u3.template cast<U>(),
                u4.template cast<U>(), fhead.template cast<U>()};
    }
};

inline int inner_stack_channels(LayerC c) {
    return kLatentChannels + (c == LayerC::Sobel ? 2 * kLatentChannels : 0) + 32 +
           kWeatherChannels;
}

// ---------------------------------------------------------------------------
// graph builders (templated so gradient checks run the float architecture in
// double precision)

// parameter-free probability encoder: maxpool2 then space_to_depth2, total
// spatial /4 with 4 latent channels; values stay in [0,1]
template <typename T>
Tensor<T> encode_probability_tensor(const Tensor<T>& prob) {
    if (prob.c != 1) throw InvalidShape("encode_probability: expected one channel");
    if (prob.h % 4 != 0 || prob.w % 4 != 0)
        throw InvalidShape("encode_probability: spatial dims must be divisible by 4");
    Tape<T> tape;
    Var<T> x = tape.input(prob);
    Var<T> lat = space_to_depth2(maxpool2(x));
    return lat.val();
}

Tensor<float> encode_probability(const Raster& map);

template <typename T>
Var<T> decode_latent(Var<T> latent, AutoencoderParams<T>& p) {
    Tape<T>& t = *latent.tape;
    Var<T> h = leaky_relu(conv2d(latent, t.param(p.d1.w), t.param(p.d1.b)));
    h = depth_to_space2(h);
    h = leaky_relu(conv2d(h, t.param(p.d2.w), t.param(p.d2.b)));
    h = upsample_nearest2(h);
    return sigmoid(conv2d(h, t.param(p.d3.w), t.param(p.d3.b)));
}

template <typename T>
Var<T> feature_graph(Var<T> spatial, FeatureParams<T>& p) {
    Tape<T>& t = *spatial.tape;
    Var<T> h = leaky_relu(conv2d(spatial, t.param(p.f1.w), t.param(p.f1.b)));
    h = leaky_relu(conv2d(h, t.param(p.f2.w), t.param(p.f2.b), 2));
    h = leaky_relu(conv2d(h, t.param(p.f3.w), t.param(p.f3.b)));
    return leaky_relu(conv2d(h, t.param(p.f4.w), t.param(p.f4.b), 2));
}

// one inner interval: stack -> shallow U-Net -> sigmoid F-head -> update layer
template <typename T>
Var<T> inner_step_graph(Var<T> latent_p, Var<T> features, Var<T> weather, InnerParams<T>& p,
                        LayerC layer_c) {
    Tape<T>& t = *latent_p.tape;
    std::vector<Var<T>> stack{latent_p};
    if (layer_c == LayerC::Sobel) {
        ++sobel_invocations();
        stack.push_back(sobel_edges(latent_p));
    }
    stack.push_back(features);
    stack.push_back(weather);
    Var<T> x = concat_channels(stack);

    Var<T> h1 = leaky_relu(conv2d(x, t.param(p.u1.w), t.param(p.u1.b)));
    Var<T> d = leaky_relu(conv2d(h1, t.param(p.u2.w), t.param(p.u2.b), 2));
    d = leaky_relu(conv2d(d, t.param(p.u3.w), t.param(p.u3.b)));
    Var<T> up = depth_to_space2(d);
    Var<T> h2 = leaky_relu(
        conv2d(concat_channels(std::vector<Var<T>>{h1, up}), t.param(p.u4.w), t.param(p.u4.b)));
    Var<T> f = sigmoid(conv2d(h2, t.param(p.fhead.w), t.param(p.fhead.b)));
    return prob_update(latent_p, f);
}

// interleaved raster <-> planar (1,C,H,W) tensor
Tensor<float> raster_to_tensor(const Raster& r);
Raster tensor_to_raster(const Tensor<float>& t, RasterKind kind, float cell_size);

// land-class one-hot (5) + gradient (2) stacked for the feature encoder
Tensor<float> spatial_stack(const Raster& land_class, const Raster& gradient);

// the 10 broadcast values for interval t: normalized means, stds, forcing
std::vector<float> weather_channels(const WeatherSummary& norm_summary, int t,
                                    const std::array<float, 2>& norm_forcing);

// ---------------------------------------------------------------------------
// model

struct EmulatorModel {
    TrainConfig cfg;
    NormRanges ranges;
    AutoencoderParams<float> ae;
    FeatureParams<float> feat;
    InnerParams<float> inner;

    std::vector<Parameter<float>*> all_params();
    std::vector<const Parameter<float>*> all_params() const;
    std::vector<Parameter<float>*> trainable_params(); // feature + inner only
    bool autoencoder_frozen() const;
};

EmulatorModel init_model(const TrainConfig& cfg, const NormRanges& ranges);

void save_model(const EmulatorModel& m, const std::filesystem::path& path);
EmulatorModel load_model(const std::filesystem::path& path);

struct AutoencoderResult {
    std::vector<double> train_mse; // per epoch
    std::vector<double> val_mse;   // per epoch
    double final_val_mse = 0.0;
};

// trains the decoder on window crops with MSE and freezes the autoencoder
AutoencoderResult train_autoencoder(EmulatorModel& model, const Dataset& ds);

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_wmse = 0.0;
};

nlohmann::json epoch_log_to_json(const std::vector<EpochLog>& log);

// paper training loop: sampled windows, D rolled inner steps, interior
// log-ratio loss, Adam on the non-frozen parameters
std::vector<EpochLog> train_model(EmulatorModel& model, const Dataset& ds);

// encode once, step per interval, decode every latent (clamped to [0,1]);
// the returned summary is the normalized slice the model consumed
ProbabilityMapSeries rollout(const EmulatorModel& m, const Raster& initial_prob,
                             const Raster& land_class, const Raster& gradient,
                             const WeatherSummary& norm_summary,
                             const std::array<float, 2>& norm_forcing, int steps,
                             std::vector<Tensor<float>>* latents_out = nullptr);

struct EmulationResult {
    ProbabilityMapSeries series;
    double wall_seconds = 0.0;
};

// single rollout from the ignition-seeded initial map
EmulationResult emulate_direct(const EmulatorModel& m, const Scenario& sc, int steps);

// N deterministic-mode rollouts with perturbed weather (member i seeded
// seed+i), each thresholded at 0.5 and flattened by counting
EmulationResult emulate_indirect_ensemble(const EmulatorModel& m, const Scenario& sc,
                                          int members, const NoiseModel& noise, int steps,
                                          std::uint64_t seed, int threads = 1);

} // namespace pyroprop
