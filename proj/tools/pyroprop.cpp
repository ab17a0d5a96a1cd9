// Command-line surface: data generation, emulator training, evaluation,
// direct/indirect comparison, benchmarking and raster rendering.
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 non-convergence.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pyroprop/emulator.hpp"
#include "pyroprop/ensemble.hpp"
#include "pyroprop/errors.hpp"
#include "pyroprop/jsonutil.hpp"
#include "pyroprop/metrics.hpp"
#include "pyroprop/raster.hpp"
#include "pyroprop/weather.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pyroprop;

namespace {

// ---------------------------------------------------------------------------
// run config: one JSON document with sections {dataset, simulator, noise,
// train, eval, bench}. --config takes either a file path or the literal
// architecture preset "A"/"B"; sources merge left to right (RFC 7386).

struct EvalOptions {
    double threshold = 0.10;
    int steps = 0; // 0: full stored horizon
};

struct BenchOptions {
    std::vector<int> members = {10, 50};
    int steps = 8;
};

struct RunConfig {
    DatasetConfig dataset;
    FuelModel fuel = FuelModel::defaults();
    NoiseModel noise;
    TrainConfig train;
    EvalOptions eval;
    BenchOptions bench;
    bool train_seed_given = false;
};

json load_config_file(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path.string());
    try {
        json j;
        f >> j;
        return j;
    } catch (const json::exception& e) {
        throw ConfigError("config file " + path.string() + ": " + e.what());
    }
}

json merge_config_sources(const std::vector<std::string>& sources) {
    json merged = json::object();
    for (const std::string& src : sources) {
        if (src == "A" || src == "B")
            merged.merge_patch({{"train", {{"layer_c", src == "B" ? "sobel" : "identity"}}}});
        else
            merged.merge_patch(load_config_file(src));
    }
    return merged;
}

RunConfig parse_run_config(const json& j) {
    check_keys(j, {"dataset", "simulator", "noise", "train", "eval", "bench"}, "run config");
    RunConfig rc;
    try {
        if (j.contains("dataset")) rc.dataset = dataset_config_from_json(j.at("dataset"));
        if (j.contains("simulator")) {
            const json& s = j.at("simulator");
            check_keys(s, {"fuel"}, "simulator");
            if (s.contains("fuel")) rc.fuel = FuelModel::from_json(s.at("fuel"));
        }
        if (j.contains("noise")) rc.noise = noise_model_from_json(j.at("noise"));
        if (j.contains("train")) {
            rc.train = train_config_from_json(j.at("train"));
            rc.train_seed_given = j.at("train").contains("seed");
        }
        if (j.contains("eval")) {
            const json& e = j.at("eval");
            check_keys(e, {"threshold", "steps"}, "eval");
            rc.eval.threshold = config_get(e, "threshold", rc.eval.threshold, "eval");
            rc.eval.steps = config_get(e, "steps", rc.eval.steps, "eval");
        }
        if (j.contains("bench")) {
            const json& b = j.at("bench");
            check_keys(b, {"members", "steps"}, "bench");
            rc.bench.members = config_get(b, "members", rc.bench.members, "bench");
            rc.bench.steps = config_get(b, "steps", rc.bench.steps, "bench");
        }
        rc.dataset.validate();
        rc.train.validate();
    } catch (const InvalidInput& e) {
        // precondition failures while resolving configuration are config errors
        throw ConfigError(e.what());
    }
    if (!(rc.eval.threshold > 0.0) || !(rc.eval.threshold < 1.0))
        throw ConfigError("eval: threshold must lie strictly between 0 and 1");
    if (rc.eval.steps < 0) throw ConfigError("eval: steps must be non-negative");
    if (rc.bench.steps < 1) throw ConfigError("bench: steps must be positive");
    if (rc.bench.members.empty()) throw ConfigError("bench: members list is empty");
    for (int n : rc.bench.members)
        if (n < 1) throw ConfigError("bench: ensemble sizes must be positive");
    return rc;
}

json resolved_config(const RunConfig& rc) {
    return {{"dataset", dataset_config_to_json(rc.dataset)},
            {"simulator", {{"fuel", rc.fuel.to_json()}}},
            {"noise", noise_model_to_json(rc.noise)},
            {"train", train_config_to_json(rc.train)},
            {"eval", {{"threshold", rc.eval.threshold}, {"steps", rc.eval.steps}}},
            {"bench", {{"members", rc.bench.members}, {"steps", rc.bench.steps}}}};
}

void write_json_file(const fs::path& path, const json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write " + path.string());
    f << j.dump(2) << "\n";
    if (!f.good()) throw DataError("short write: " + path.string());
}

// deterministic striped worker pool: item i runs on thread i % nthreads and
// results land in caller-indexed slots, so thread count never changes output
template <typename Fn>
void run_striped(int threads, std::size_t n, Fn&& fn) {
    const std::size_t nw = std::max<std::size_t>(
        1, std::min<std::size_t>(static_cast<std::size_t>(std::max(1, threads)), n));
    if (nw == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(nw);
    std::vector<std::thread> pool;
    pool.reserve(nw);
    for (std::size_t w = 0; w < nw; ++w)
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += nw) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    for (auto& t : pool) t.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
}

void require_matching_ranges(const EmulatorModel& m, const Dataset& ds) {
    if (m.ranges.to_json() != ds.ranges.to_json())
        throw DataError("model and dataset normalization ranges differ; "
                        "the checkpoint was trained against another dataset");
}

const DatasetSample* find_sample(const Dataset& ds, std::uint64_t id) {
    for (const auto& s : ds.val)
        if (s.scenario_id == id) return &s;
    for (const auto& s : ds.train)
        if (s.scenario_id == id) return &s;
    return nullptr;
}

std::string map_name(int k) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "map_%03d.pfr", k);
    return buf;
}

// ---------------------------------------------------------------------------
// commands

void cmd_gen_data(const RunConfig& rc, const fs::path& out, std::uint64_t seed, int threads) {
    const Dataset ds = build_dataset(rc.dataset, rc.fuel, seed, out, threads);
    write_json_file(out / "run.json", json{{"tool_version", kToolVersion},
                                           {"command", "gen-data"},
                                           {"seed", seed},
                                           {"config", resolved_config(rc)}});
    std::cout << "dataset: " << ds.train.size() << " train / " << ds.val.size()
              << " val scenarios, grid " << rc.dataset.scenario.grid_size << " -> " << out.string()
              << "\n";
}

json autoencoder_log(const AutoencoderResult& res) {
    return {{"train_mse", res.train_mse},
            {"val_mse", res.val_mse},
            {"final_val_mse", res.final_val_mse}};
}

void cmd_train_ae(const RunConfig& rc, const fs::path& data, const fs::path& out) {
    const Dataset ds = load_dataset(data);
    EmulatorModel m = init_model(rc.train, ds.ranges);
    const AutoencoderResult res = train_autoencoder(m, ds);
    fs::create_directories(out);
    save_model(m, out / "ae.ppw");
    json log{{"tool_version", kToolVersion}, {"command", "train-ae"},
             {"config", resolved_config(rc)}};
    log["autoencoder"] = autoencoder_log(res);
    write_json_file(out / "ae_log.json", log);
    std::cout << "autoencoder: " << res.val_mse.size() << " epochs, final val mse "
              << res.final_val_mse << " -> " << (out / "ae.ppw").string() << "\n";
}

void cmd_train(const RunConfig& rc, const fs::path& data, const fs::path& out,
               const std::string& ae_path) {
    const Dataset ds = load_dataset(data);
    EmulatorModel m = [&] {
        if (ae_path.empty()) return init_model(rc.train, ds.ranges);
        EmulatorModel loaded = load_model(ae_path);
        if (loaded.cfg.layer_c != rc.train.layer_c)
            throw DataError("autoencoder checkpoint was built for the other layer-C "
                            "configuration; retrain it with the requested --config");
        require_matching_ranges(loaded, ds);
        loaded.cfg = rc.train;
        return loaded;
    }();

    json log{{"tool_version", kToolVersion}, {"command", "train"},
             {"config", resolved_config(rc)}};
    if (!m.autoencoder_frozen()) log["autoencoder"] = autoencoder_log(train_autoencoder(m, ds));

    fs::create_directories(out);
    std::vector<EpochLog> epochs;
    try {
        epochs = train_model(m, ds);
    } catch (const NonConvergence&) {
        save_model(m, out / "model.ppw.failed");
        throw;
    }
    save_model(m, out / "model.ppw");
    log["epochs"] = epoch_log_to_json(epochs);
    write_json_file(out / "train_log.json", log);
    const EpochLog& last = epochs.back();
    std::cout << "trained " << epochs.size() << " epochs: train loss " << last.train_loss
              << ", val loss " << last.val_loss << ", val wmse " << last.val_wmse << " -> "
              << (out / "model.ppw").string() << "\n";
}

void cmd_eval(const RunConfig& rc, const fs::path& data, const fs::path& model_path,
              const fs::path& out_file, int threads) {
    const Dataset ds = load_dataset(data);
    const EmulatorModel m = load_model(model_path);
    require_matching_ranges(m, ds);
    if (ds.val.empty()) throw DataError("dataset has no validation scenarios");

    const std::size_t n = ds.val.size();
    std::vector<int> horizon(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int stored = ds.val[i].prob.steps();
        horizon[i] = rc.eval.steps > 0 ? rc.eval.steps : stored;
        if (horizon[i] > stored)
            throw DataError("scenario " + std::to_string(ds.val[i].scenario_id) + " stores only " +
                            std::to_string(stored) + " intervals");
    }

    std::vector<Raster> pred(n);
    run_striped(threads, n, [&](std::size_t i) {
        const DatasetSample& s = ds.val[i];
        pred[i] = rollout(m, s.prob.maps[0], s.land_class, s.gradient, s.norm_summary,
                          s.norm_forcing, horizon[i])
                      .maps.back();
    });

    std::vector<EvalItem> items(n);
    for (std::size_t i = 0; i < n; ++i) {
        const DatasetSample& s = ds.val[i];
        items[i] = {s.scenario_id, &s.prob.maps[static_cast<std::size_t>(horizon[i])], &pred[i],
                    &s.prob.maps[0]};
    }
    const EvalReport report = evaluate_samples(items, rc.eval.threshold);
    write_json_file(out_file, json{{"tool_version", kToolVersion},
                                   {"command", "eval"},
                                   {"config", resolved_config(rc)},
                                   {"model", model_path.string()},
                                   {"report", report.to_json()}});
    std::cout << "eval: " << n << " scenarios, wmse " << report.wmse << ", mean jaccard@"
              << rc.eval.threshold << " " << report.mean_jaccard << "\n";
}

void cmd_compare(const RunConfig& rc, const fs::path& data, const fs::path& model_path,
                 const fs::path& out_dir, const std::string& mode, int members,
                 std::optional<std::uint64_t> scenario_id, int steps_flag, std::uint64_t seed,
                 int threads) {
    if (members < 1) throw ConfigError("compare: --N must be positive");
    const Dataset ds = load_dataset(data);
    if (ds.val.empty()) throw DataError("dataset has no validation scenarios");
    const std::uint64_t id = scenario_id ? *scenario_id : ds.val.front().scenario_id;
    const DatasetSample* gt = find_sample(ds, id);
    if (!gt) throw DataError("scenario id " + std::to_string(id) + " not in dataset");

    const EmulatorModel m = load_model(model_path);
    require_matching_ranges(m, ds);
    const Scenario sc = load_scenario(data, id);
    const int steps = steps_flag > 0 ? steps_flag : gt->prob.steps();
    if (steps > gt->prob.steps())
        throw DataError("scenario stores only " + std::to_string(gt->prob.steps()) + " intervals");

    const EmulationResult res = mode == "direct"
                                    ? emulate_direct(m, sc, steps)
                                    : emulate_indirect_ensemble(m, sc, members, rc.noise, steps,
                                                                seed, threads);
    const double jac = jaccard_at_threshold(gt->prob.maps[static_cast<std::size_t>(steps)],
                                            res.series.maps.back(), rc.eval.threshold);

    fs::create_directories(out_dir);
    for (std::size_t k = 0; k < res.series.maps.size(); ++k)
        save_raster(res.series.maps[k], out_dir / map_name(static_cast<int>(k)));
    write_json_file(out_dir / "compare.json",
                    json{{"tool_version", kToolVersion},
                         {"command", "compare"},
                         {"config", resolved_config(rc)},
                         {"scenario", id},
                         {"mode", mode},
                         {"members", mode == "direct" ? 1 : members},
                         {"steps", steps},
                         {"seed", seed},
                         {"threshold", rc.eval.threshold},
                         {"jaccard", jac},
                         {"wall_seconds", res.wall_seconds}});
    std::cout << "compare " << mode << ": scenario " << id << ", " << steps << " steps, jaccard@"
              << rc.eval.threshold << " " << jac << ", " << res.wall_seconds << " s -> "
              << out_dir.string() << "\n";
}

void cmd_bench(const RunConfig& rc, const fs::path& data, const fs::path& model_path,
               const std::string& det_path, const fs::path& out_file,
               std::optional<std::uint64_t> scenario_id, std::vector<int> members, int steps,
               std::uint64_t seed, int threads) {
    const Dataset ds = load_dataset(data);
    if (ds.val.empty()) throw DataError("dataset has no validation scenarios");
    const std::uint64_t id = scenario_id ? *scenario_id : ds.val.front().scenario_id;
    const Scenario sc = load_scenario(data, id);
    const EmulatorModel m = load_model(model_path);
    require_matching_ranges(m, ds);
    std::optional<EmulatorModel> det;
    if (!det_path.empty())
        det = load_model(det_path);
    else
        std::cerr << "bench: no deterministic checkpoint given, skipping indirect modes\n";

    // the dataset's simulator settings define the timing baseline
    const DatasetConfig dcfg = dataset_config_from_json(ds.manifest.at("config"));
    const FuelModel fuel = FuelModel::from_json(ds.manifest.at("fuel"));
    const int stored = static_cast<int>(sc.duration_hours * 60.0 /
                                        dcfg.ensemble.output_interval_minutes);
    if (steps > stored)
        throw DataError("scenario covers only " + std::to_string(stored) + " intervals");
    // every method produces the map at the same horizon, so the simulator
    // baseline stops there too instead of running the stored duration
    Scenario horizon_sc = sc;
    horizon_sc.duration_hours = steps * dcfg.ensemble.output_interval_minutes / 60.0;
    std::sort(members.begin(), members.end());
    members.erase(std::unique(members.begin(), members.end()), members.end());

    struct Row {
        std::string method;
        int members = 0;
        double jaccard = 0.0;
        double seconds = 0.0;
    };
    std::vector<Row> rows;

    // simulator ensembles; the largest is the ground truth every row scores against
    std::vector<std::vector<Raster>> sim_maps(members.size());
    std::vector<double> sim_secs(members.size());
    for (std::size_t i = 0; i < members.size(); ++i) {
        EnsembleConfig ec = dcfg.ensemble;
        ec.members = members[i];
        ec.noise = rc.noise;
        ec.seed = seed;
        const auto t0 = std::chrono::steady_clock::now();
        sim_maps[i] = run_ensemble(horizon_sc, fuel, ec, threads).maps;
        sim_secs[i] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    const Raster& truth = sim_maps.back()[static_cast<std::size_t>(steps)];

    const EmulationResult direct = emulate_direct(m, sc, steps);
    rows.push_back({"direct", 1,
                    jaccard_at_threshold(truth, direct.series.maps.back(), rc.eval.threshold),
                    direct.wall_seconds});
    if (det)
        for (int n : members) {
            const EmulationResult r =
                emulate_indirect_ensemble(*det, sc, n, rc.noise, steps, seed, threads);
            rows.push_back({"indirect", n,
                            jaccard_at_threshold(truth, r.series.maps.back(), rc.eval.threshold),
                            r.wall_seconds});
        }
    for (std::size_t i = 0; i < members.size(); ++i)
        rows.push_back({"simulator", members[i],
                        jaccard_at_threshold(truth, sim_maps[i][static_cast<std::size_t>(steps)],
                                             rc.eval.threshold),
                        sim_secs[i]});

    json jrows = json::array();
    for (const Row& r : rows)
        jrows.push_back({{"method", r.method},
                         {"members", r.members},
                         {"jaccard", r.jaccard},
                         {"time_sec", r.seconds},
                         {"time_rel", r.seconds / rows.front().seconds}});
    write_json_file(out_file, json{{"tool_version", kToolVersion},
                                   {"command", "bench"},
                                   {"config", resolved_config(rc)},
                                   {"scenario", id},
                                   {"steps", steps},
                                   {"seed", seed},
                                   {"threads", threads},
                                   {"rows", jrows}});

    std::cout << "bench: scenario " << id << ", " << steps << " steps\n";
    std::cout << std::left << std::setw(11) << "method" << std::right << std::setw(8) << "members"
              << std::setw(10) << "jaccard" << std::setw(12) << "time (s)" << std::setw(12)
              << "time (rel)" << "\n";
    for (const Row& r : rows)
        std::cout << std::left << std::setw(11) << r.method << std::right << std::setw(8)
                  << r.members << std::setw(10) << std::fixed << std::setprecision(3) << r.jaccard
                  << std::setw(12) << std::setprecision(3) << r.seconds << std::setw(12)
                  << std::setprecision(1) << r.seconds / rows.front().seconds << "\n";
    std::cout.unsetf(std::ios::fixed);
}

void cmd_render(const std::vector<std::string>& inputs, const fs::path& out, double threshold,
                bool contour, int channel) {
    std::vector<Raster> rasters;
    rasters.reserve(inputs.size());
    for (const std::string& p : inputs) {
        Raster r = load_raster(p);
        if (r.kind != RasterKind::Probability && r.kind != RasterKind::Generic)
            throw InvalidInput("render: " + p + " holds a " + raster_kind_name(r.kind) +
                               " raster, not a likelihood map");
        if (channel >= r.channels)
            throw InvalidInput("render: " + p + " has only " + std::to_string(r.channels) +
                               " channels");
        rasters.push_back(std::move(r));
    }

    const bool single_image =
        rasters.size() == 1 && (channel >= 0 || rasters.front().channels == 1);
    if (single_image && out.extension() == ".pgm") {
        save_pgm(rasters.front(), out, std::max(channel, 0), static_cast<float>(threshold),
                 contour);
        std::cout << "wrote " << out.string() << "\n";
        return;
    }

    fs::create_directories(out);
    int written = 0;
    for (std::size_t i = 0; i < rasters.size(); ++i) {
        const Raster& r = rasters[i];
        const std::string stem = fs::path(inputs[i]).stem().string();
        const int c0 = channel >= 0 ? channel : 0;
        const int c1 = channel >= 0 ? channel + 1 : r.channels;
        for (int c = c0; c < c1; ++c) {
            std::string name = stem;
            if (r.channels > 1) {
                char buf[16];
                std::snprintf(buf, sizeof buf, "_%03d", c);
                name += buf;
            }
            save_pgm(r, out / (name + ".pgm"), c, static_cast<float>(threshold), contour);
            ++written;
        }
    }
    std::cout << "wrote " << written << " image(s) -> " << out.string() << "\n";
}

} // namespace

int run(int argc, char** argv) {
    CLI::App app{"fire propagation probability maps: direct neural estimation vs ensembles"};
    app.set_version_flag("--version", kToolVersion);
    app.require_subcommand(1);

    std::vector<std::string> config_sources;
    std::uint64_t seed = 0;
    int threads = 1;
    std::string data, model, det_model, ae, out, mode;
    std::optional<std::uint64_t> scenario_id;
    int steps = 0, D = 0, crop = 0, N = 50, channel = -1;
    double threshold = -1.0;
    bool contour = false;
    std::vector<int> bench_members;
    std::vector<std::string> render_inputs;

    const auto add_common = [&](CLI::App* sub, bool with_threads) {
        sub->add_option("--config", config_sources,
                        "run-config JSON path or architecture preset A/B (repeatable, "
                        "merged left to right)");
        if (with_threads) sub->add_option("--threads", threads, "worker threads");
        return sub;
    };

    CLI::App* gen = add_common(app.add_subcommand("gen-data", "generate a simulator dataset"), true);
    gen->add_option("--out", out, "dataset directory")->required();
    gen->add_option("--seed", seed, "master seed")->required();

    CLI::App* tae = add_common(app.add_subcommand("train-ae", "train the probability autoencoder"),
                               false);
    tae->add_option("--data", data, "dataset directory")->required();
    tae->add_option("--out", out, "output directory")->required();
    CLI::Option* tae_seed = tae->add_option("--seed", seed, "training seed");

    CLI::App* tr = add_common(app.add_subcommand("train", "train the emulator"), false);
    tr->add_option("--data", data, "dataset directory")->required();
    tr->add_option("--out", out, "output directory")->required();
    tr->add_option("--ae", ae, "autoencoder checkpoint (trained implicitly when omitted)");
    CLI::Option* tr_seed = tr->add_option("--seed", seed, "training seed");
    CLI::Option* tr_d = tr->add_option("--D", D, "intervals per training window");
    CLI::Option* tr_crop = tr->add_option("--crop", crop, "crop size c (padding is c/8)");

    CLI::App* ev = add_common(app.add_subcommand("eval", "evaluate a checkpoint on the val split"),
                              true);
    ev->add_option("--data", data, "dataset directory")->required();
    ev->add_option("--model", model, "model checkpoint")->required();
    ev->add_option("--out", out, "report JSON path")->required();
    CLI::Option* ev_steps = ev->add_option("--steps", steps, "rollout horizon (0: full)");
    CLI::Option* ev_thr = ev->add_option("--threshold", threshold, "jaccard threshold");

    CLI::App* cp = add_common(app.add_subcommand("compare", "run one estimator on one scenario"),
                              true);
    cp->add_option("--data", data, "dataset directory")->required();
    cp->add_option("--model", model, "model checkpoint")->required();
    cp->add_option("--out", out, "output directory")->required();
    cp->add_option("--mode", mode, "direct or indirect")
        ->required()
        ->check(CLI::IsMember({"direct", "indirect"}));
    cp->add_option("--N", N, "indirect ensemble size");
    cp->add_option("--scenario", scenario_id, "scenario id (default: first val scenario)");
    cp->add_option("--steps", steps, "rollout horizon (0: full)");
    cp->add_option("--seed", seed, "perturbation seed");

    CLI::App* bn = add_common(app.add_subcommand("bench", "time direct vs ensembles"), true);
    bn->add_option("--data", data, "dataset directory")->required();
    bn->add_option("--model", model, "direct-estimation checkpoint")->required();
    bn->add_option("--det-model", det_model, "deterministic checkpoint for indirect modes");
    bn->add_option("--out", out, "report JSON path")->required();
    CLI::Option* bn_n = bn->add_option("--N", bench_members, "ensemble sizes")->delimiter(',');
    CLI::Option* bn_steps = bn->add_option("--steps", steps, "rollout horizon");
    bn->add_option("--scenario", scenario_id, "scenario id (default: first val scenario)");
    bn->add_option("--seed", seed, "perturbation seed");

    CLI::App* rd = app.add_subcommand("render", "export likelihood rasters as PGM images");
    rd->add_option("inputs", render_inputs, "PFR1 raster files")->required();
    rd->add_option("--out", out, "output directory (or .pgm path for a single image)")->required();
    rd->add_option("--threshold", threshold, "blank pixels below this likelihood");
    rd->add_flag("--contour", contour, "trace the threshold boundary in white");
    rd->add_option("--channel", channel, "render one channel instead of all");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    RunConfig rc = parse_run_config(merge_config_sources(config_sources));
    if (tr_d->count()) rc.train.steps = D;
    if (tr_crop->count()) rc.train.crop = crop;
    if (tr_seed->count() || tae_seed->count()) {
        rc.train.seed = seed;
        rc.train_seed_given = true;
    }
    if (ev_thr->count()) rc.eval.threshold = threshold;
    if (ev_steps->count()) rc.eval.steps = steps;
    if (bn_n->count()) rc.bench.members = bench_members;
    if (bn_steps->count()) rc.bench.steps = steps;
    try {
        rc.train.validate();
    } catch (const InvalidInput& e) {
        throw ConfigError(e.what());
    }
    if (!(rc.eval.threshold > 0.0) || !(rc.eval.threshold < 1.0))
        throw ConfigError("eval: threshold must lie strictly between 0 and 1");

    if (gen->parsed()) {
        cmd_gen_data(rc, out, seed, threads);
    } else if (tae->parsed() || tr->parsed()) {
        if (!rc.train_seed_given)
            throw ConfigError("a training seed is required (--seed or train.seed in the config)");
        if (tae->parsed())
            cmd_train_ae(rc, data, out);
        else
            cmd_train(rc, data, out, ae);
    } else if (ev->parsed()) {
        cmd_eval(rc, data, model, out, threads);
    } else if (cp->parsed()) {
        cmd_compare(rc, data, model, out, mode, N, scenario_id, steps, seed, threads);
    } else if (bn->parsed()) {
        cmd_bench(rc, data, model, det_model, out, scenario_id, rc.bench.members, rc.bench.steps,
                  seed, threads);
    } else if (rd->parsed()) {
        cmd_render(render_inputs, out, threshold, contour, channel);
    }
    return 0;
}

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const NonConvergence& e) {
        std::cerr << "training diverged: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
