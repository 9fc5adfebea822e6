// Command-line front end: train, eval, predict, gradcheck, synth, cellstates.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dscmp/data.hpp"
#include "dscmp/diagnostics.hpp"
#include "dscmp/objectives.hpp"
#include "dscmp/trainer.hpp"

namespace fs = std::filesystem;
using namespace dscmp;

namespace {

std::ofstream open_output(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    return out;
}

DatasetOptions dataset_options(const TrainConfig& config) {
    DatasetOptions opt;
    opt.window.obs_len = config.model.obs_len;
    opt.window.pred_len = config.model.pred_len;
    opt.window.stride = config.window_stride;
    opt.map_channels = config.model.scene.map_channels;
    return opt;
}

SceneBatch load_observation(const TrainConfig& config, const fs::path& scene_path,
                            const std::optional<fs::path>& map_path, long frame_step) {
    std::shared_ptr<const SemanticMap> map;
    if (map_path) {
        map = std::make_shared<const SemanticMap>(read_semantic_map(*map_path));
    } else {
        const DatasetOptions opt = dataset_options(config);
        map = std::make_shared<const SemanticMap>(
            SemanticMap::zeros("blank", opt.map_size, opt.map_size, opt.map_channels));
    }
    return observation_scene(load_trajectories(scene_path), config.model.obs_len, frame_step, map,
                             scene_path.stem().string());
}

int run_train(const fs::path& config_path, const fs::path& data, const fs::path& out_dir) {
    TrainConfig config = read_train_config(config_path);
    const std::vector<ManifestEntry> entries = read_manifest(data);
    resolve_queue(config, entries);
    std::vector<ManifestEntry> train_entries = entries;
    if (!config.held_out.empty()) train_entries = leave_one_out(entries, config.held_out).train;
    const std::vector<SceneBatch> scenes = load_dataset(train_entries, dataset_options(config));
    std::cerr << "training on " << scenes.size() << " scenes, q = " << config.model.queue << '\n';

    TrainOptions options;
    options.out_dir = out_dir;
    options.log = &std::cerr;
    const TrainResult result = train(config, scenes, options);
    std::cout << "wrote " << (out_dir / "last.ckpt").string() << " after " << result.checkpoint.iteration
              << " iterations\n";
    return 0;
}

int run_eval(const fs::path& ckpt_path, const fs::path& data, std::size_t samples, std::uint64_t seed,
             bool nonlinear_only, double threshold, const std::string& subset, const std::optional<fs::path>& out) {
    const Checkpoint ck = load_checkpoint(ckpt_path);
    const std::vector<ManifestEntry> entries = read_manifest(data);
    std::vector<ManifestEntry> eval_entries = entries;
    const std::string held = subset.empty() ? ck.config.held_out : subset;
    if (!held.empty()) eval_entries = leave_one_out(entries, held).test;
    const std::vector<SceneBatch> scenes = load_dataset(eval_entries, dataset_options(ck.config));

    EvalOptions options;
    options.samples = samples;
    options.seed = seed;
    options.nonlinear_only = nonlinear_only;
    options.nonlinear_threshold = static_cast<Real>(threshold);
    const MetricsReport report = evaluate(ck.model, scenes, options);
    if (out) {
        std::ofstream file = open_output(*out);
        write_metrics(file, report);
    }
    write_metrics(std::cout, report);
    return 0;
}

int run_predict(const fs::path& ckpt_path, const fs::path& scene_path, const std::optional<fs::path>& map_path,
                long frame_step, std::size_t samples, std::uint64_t seed, const fs::path& out_path) {
    const Checkpoint ck = load_checkpoint(ckpt_path);
    const SceneBatch scene = load_observation(ck.config, scene_path, map_path, frame_step);
    Rng rng(seed);
    const PredictionSet preds = ck.model.predict(scene, samples, rng);

    std::ofstream out = open_output(out_path);
    out << "# scene agent_id sample step x y\n";
    for (std::size_t k = 0; k < preds.samples.size(); ++k) {
        for (std::size_t i = 0; i < scene.agent_count(); ++i) {
            const Track& track = preds.samples[k][i];
            for (std::size_t t = 0; t < track.size(); ++t) {
                out << scene.id << ' ' << scene.agent_ids[i] << ' ' << k << ' ' << t + 1 << ' ' << format_real(track[t].x) << ' '
                    << format_real(track[t].y) << '\n';
            }
        }
    }
    std::cout << "wrote " << preds.samples.size() << " samples for " << scene.agent_count() << " agents to "
              << out_path.string() << '\n';
    return 0;
}

int run_gradcheck(const std::vector<std::string>& modules, std::uint64_t seed, double eps, double tolerance) {
    bool ok = true;
    for (const std::string& name : modules) {
        const GradCheckReport r = check_module_gradients(parse_grad_module(name), seed, eps);
        const bool pass = r.max_rel_error < tolerance;
        ok = ok && pass;
        std::cout << name << ": max_rel_error " << r.max_rel_error << " over " << r.entries_checked
                  << " entries (worst " << r.worst_param << '[' << r.worst_index << "] analytic "
                  << r.worst_analytic << " numeric " << r.worst_numeric << ") " << (pass ? "ok" : "FAIL") << '\n';
    }
    return ok ? 0 : 1;
}

std::string layout_name(const SemanticMap& map) {
    return map.scene_id.empty() ? "map" : map.scene_id;
}

int run_synth(const std::string& kind_name, std::size_t count, std::size_t agents, double noise, std::uint64_t seed,
              std::size_t obs_len, std::size_t pred_len, const fs::path& out_dir) {
    const SynthKind kind = parse_synth_kind(kind_name);
    if (agents < min_agents(kind)) agents = min_agents(kind);
    SynthOptions opt;
    opt.noise_sigma = static_cast<Real>(noise);
    opt.obs_len = obs_len;
    opt.pred_len = pred_len;
    fs::create_directories(out_dir);

    Rng rng(seed);
    const long span = static_cast<long>(obs_len + pred_len) + 5;  // frame gap keeps windows inside one scene
    std::map<std::string, std::vector<TrajectoryRecord>> by_layout;
    std::map<std::string, std::shared_ptr<const SemanticMap>> maps;
    for (std::size_t s = 0; s < count; ++s) {
        const SceneBatch scene = synth_scene(kind, agents, rng, opt);
        const std::string layout = layout_name(*scene.map);
        maps[layout] = scene.map;
        auto& records = by_layout[layout];
        for (std::size_t i = 0; i < scene.agent_count(); ++i) {
            const long agent = static_cast<long>(s * 100 + i);
            Track full = scene.observed[i];
            full.insert(full.end(), scene.future[i].begin(), scene.future[i].end());
            for (std::size_t t = 0; t < full.size(); ++t) {
                records.push_back({static_cast<long>(s) * span + static_cast<long>(t), agent, full[t].x, full[t].y});
            }
        }
    }

    std::vector<ManifestEntry> manifest;
    for (auto& [layout, records] : by_layout) {
        std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
            return std::tie(a.frame_id, a.agent_id) < std::tie(b.frame_id, b.agent_id);
        });
        const fs::path traj = out_dir / (kind_name + "-" + layout + ".txt");
        const fs::path map = out_dir / (layout + ".map");
        write_trajectories(traj, records);
        write_semantic_map(map, *maps[layout]);
        manifest.push_back({kind_name, traj, map, 1, 1});
    }
    write_manifest(out_dir / "manifest.txt", manifest);
    std::cout << "wrote " << count << " " << kind_name << " scenes to " << out_dir.string() << '\n';
    return 0;
}

int run_cellstates(const fs::path& ckpt_path, const fs::path& scene_path, const std::optional<fs::path>& map_path,
                   long frame_step, const fs::path& out_path) {
    const Checkpoint ck = load_checkpoint(ckpt_path);
    const SceneBatch scene = load_observation(ck.config, scene_path, map_path, frame_step);
    const ObservationTrace trace = ck.model.observe_traced(scene);
    const std::size_t q = ck.config.model.queue;

    std::ofstream out = open_output(out_path);
    out << "# frame agent_id kind values...   kind: cell | hidden (cell output) | refined (after social refinement)\n";
    const auto write_vec = [&](const Vec& v) {
        for (std::size_t k = 0; k < v.size(); ++k) out << ' ' << format_real(v[k]);
        out << '\n';
    };
    for (std::size_t t = 0; t < ck.config.model.obs_len; ++t) {
        for (std::size_t i = 0; i < scene.agent_count(); ++i) {
            out << t << ' ' << scene.agent_ids[i] << " cell";
            write_vec(trace.icm_cell[i][t]);
            out << t << ' ' << scene.agent_ids[i] << " hidden";
            write_vec(trace.icm_hidden[i][t]);
            if (!trace.scm.empty()) {
                const ScmSlotCache& newest = trace.scm[t].slots[q - 1];
                Vec refined = newest.hidden[i];
                const auto& nbrs = trace.scm[t].neighbors[i];
                if (!newest.skipped[i]) {
                    for (std::size_t n = 0; n < nbrs.size(); ++n) {
                        axpy(newest.weights[i][n], newest.transformed[nbrs[n]], refined.span());
                    }
                }
                out << t << ' ' << scene.agent_ids[i] << " refined";
                write_vec(refined);
            }
        }
    }
    std::cout << "wrote cell states of " << scene.agent_count() << " agents to " << out_path.string() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-agent motion prediction with queued context cells"};
    app.require_subcommand(1);

    fs::path config, data, out, ckpt, scene;
    std::optional<fs::path> map, metrics_out;
    std::size_t samples = 20, count = 100, agents = 2, obs_len = 8, pred_len = 12;
    std::uint64_t seed = 1, grad_seed = kGradCheckSeed;
    bool nonlinear_only = false;
    double threshold = kNonlinearThreshold, noise = 0, eps = 1e-5, tolerance = 1e-4;
    long frame_step = 1;
    std::string kind = "turning", subset;
    std::vector<std::string> modules{"icm", "scm", "scene", "decoder", "full"};

    auto* train_cmd = app.add_subcommand("train", "Train a model and write checkpoints");
    train_cmd->add_option("--config", config, "Key-value config file")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--data", data, "Dataset manifest")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--out", out, "Output directory")->required();

    auto* eval_cmd = app.add_subcommand("eval", "Best-of-m metrics of a checkpoint");
    eval_cmd->add_option("--ckpt", ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--data", data, "Dataset manifest")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--samples", samples, "Samples per scene (m)")->check(CLI::PositiveNumber);
    eval_cmd->add_option("--seed", seed, "Sampling seed");
    eval_cmd->add_option("--subset", subset, "Evaluate only this subset (default: the checkpoint's held-out one)");
    eval_cmd->add_flag("--nonlinear-only", nonlinear_only, "Score only non-linear trajectories");
    eval_cmd->add_option("--threshold", threshold, "Line-fit residual threshold for --nonlinear-only");
    eval_cmd->add_option("--out", metrics_out, "Also write the report here");

    auto* predict_cmd = app.add_subcommand("predict", "Sample future trajectories for one observation");
    predict_cmd->add_option("--ckpt", ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
    predict_cmd->add_option("--scene", scene, "Trajectory file; its last obs_len frames are observed")
        ->required()
        ->check(CLI::ExistingFile);
    predict_cmd->add_option("--map", map, "Semantic map file")->check(CLI::ExistingFile);
    predict_cmd->add_option("--frame-step", frame_step, "Raw frame-id gap between samples")->check(CLI::PositiveNumber);
    predict_cmd->add_option("--samples", samples, "Samples (m)")->check(CLI::PositiveNumber);
    predict_cmd->add_option("--seed", seed, "Sampling seed");
    predict_cmd->add_option("--out", out, "Prediction export file")->required();

    auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
    grad_cmd->add_option("--module", modules, "icm|scm|scene|decoder|full (default: all)");
    grad_cmd->add_option("--seed", grad_seed, "Seed for weights and inputs");
    grad_cmd->add_option("--eps", eps, "Central-difference step");
    grad_cmd->add_option("--tolerance", tolerance, "Largest accepted relative error");

    auto* synth_cmd = app.add_subcommand("synth", "Write synthetic scenes, maps and a manifest");
    synth_cmd->add_option("--kind", kind, "parallel|face_to_face|turning|crossroad")->required();
    synth_cmd->add_option("--count", count, "Number of scenes")->required()->check(CLI::PositiveNumber);
    synth_cmd->add_option("--out", out, "Output directory")->required();
    synth_cmd->add_option("--agents", agents, "Agents per scene");
    synth_cmd->add_option("--noise", noise, "Position noise sigma (metres)");
    synth_cmd->add_option("--seed", seed, "Generator seed");
    synth_cmd->add_option("--obs-len", obs_len, "Observed frames")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--pred-len", pred_len, "Predicted frames")->check(CLI::PositiveNumber);

    auto* cells_cmd = app.add_subcommand("cellstates", "Export per-frame cell values of one observation");
    cells_cmd->add_option("--ckpt", ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
    cells_cmd->add_option("--scene", scene, "Trajectory file")->required()->check(CLI::ExistingFile);
    cells_cmd->add_option("--map", map, "Semantic map file")->check(CLI::ExistingFile);
    cells_cmd->add_option("--frame-step", frame_step, "Raw frame-id gap between samples")->check(CLI::PositiveNumber);
    cells_cmd->add_option("--out", out, "Output file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train_cmd) return run_train(config, data, out);
        if (*eval_cmd) return run_eval(ckpt, data, samples, seed, nonlinear_only, threshold, subset, metrics_out);
        if (*predict_cmd) return run_predict(ckpt, scene, map, frame_step, samples, seed, out);
        if (*grad_cmd) return run_gradcheck(modules, grad_seed, eps, tolerance);
        if (*synth_cmd) return run_synth(kind, count, agents, noise, seed, obs_len, pred_len, out);
        if (*cells_cmd) return run_cellstates(ckpt, scene, map, frame_step, out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
