// Acceptance run: one PASS/FAIL line per criterion. `--criterion N` runs a single one.
// Exit status is non-zero when any selected criterion fails.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "dscmp/data.hpp"
#include "dscmp/diagnostics.hpp"
#include "dscmp/objectives.hpp"
#include "dscmp/trainer.hpp"
#include "oracles.hpp"
#include "trials.hpp"

using namespace dscmp;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* pattern, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, pattern, args...);
    return buf;
}

// ---- 1: q = 1 degenerates to a vanilla LSTM ---------------------------------

Outcome degeneration() {
    const auto start = Clock::now();
    Rng rng(1);
    double worst = 0;
    for (int trial = 0; trial < 1000; ++trial) worst = std::max(worst, trials::icm_vs_lstm(rng));
    const double t = seconds_since(start);
    return {worst < 1e-10 && t < 10,
            fmt("1000 trials, max |icm - lstm| = %.3g (bound 1e-10), %.2f s (bound 10 s)", worst, t)};
}

// ---- 2: gradients -----------------------------------------------------------

Outcome gradients() {
    const auto start = Clock::now();
    bool ok = true;
    std::string detail = fmt("seed %llu, eps 1e-5:", static_cast<unsigned long long>(kGradCheckSeed));
    for (GradModule m : {GradModule::icm, GradModule::scm, GradModule::scene, GradModule::decoder, GradModule::full}) {
        const GradCheckReport r = check_module_gradients(m, kGradCheckSeed, 1e-5);
        ok = ok && r.max_rel_error < 1e-4;
        detail += fmt(" %s %.2g", std::string(to_string(m)).c_str(), r.max_rel_error);
    }
    const double t = seconds_since(start);
    return {ok && t < 60, detail + fmt(" (bound 1e-4), %.2f s (bound 60 s)", t)};
}

// ---- 3: social refinement contract -----------------------------------------

Outcome scm_contract() {
    Rng rng(3);
    double worst = 0;
    bool cells = true;
    for (int trial = 0; trial < 1000; ++trial) {
        const trials::ScmTrial t = trials::scm_vs_bruteforce(rng);
        worst = std::max(worst, t.max_error);
        cells = cells && t.cells_bitwise;
    }

    bool identity = true;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + rng.uniform_index(3), q = 1 + rng.uniform_index(3), w = 1 + rng.uniform_index(5);
        ParamStore store;
        const ScmParams p = ScmParams::declare(store, "scm", w);
        init_scm(store, p, rng);
        store.mutable_value(p.transform).fill(0);
        auto queues = init_queues(n, q, w);
        for (auto& queue : queues)
            for (std::size_t s = 0; s < q; ++s)
                queue.push_pop(Vec(trials::random_vector(rng, w)), Vec(trials::random_vector(rng, w)));
        const ScmResult r = refine_hidden_queues(store, p, queues, all_neighbors(n));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t s = 0; s < q; ++s) identity = identity && r.queues[i].hidden(s) == queues[i].hidden(s);
    }
    return {worst < 1e-12 && cells && identity,
            fmt("cells bitwise %s, brute-force max err %.3g (bound 1e-12) over 1000 instances, W_G=0 identity %s",
                cells ? "yes" : "no", worst, identity ? "yes" : "no")};
}

// ---- 4: metric identities ---------------------------------------------------

Track random_walk(Rng& rng, std::size_t n) {
    Track t;
    Point p{};
    for (std::size_t k = 0; k < n; ++k) {
        p += Point{Real(rng.normal()), Real(rng.normal())};
        t.push_back(p);
    }
    return t;
}

Outcome metric_identities() {
    Rng rng(4);
    double worst_self = 0, worst_mirror = 0, worst_oracle = 0, worst_offset = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t agents = 1 + rng.uniform_index(4), horizon = 2 + rng.uniform_index(11);
        std::vector<Track> gt, pred, mirrored, shifted;
        const Point offset{Real(rng.normal()), Real(rng.normal())};
        for (std::size_t i = 0; i < agents; ++i) {
            gt.push_back(random_walk(rng, horizon));
            pred.push_back(random_walk(rng, horizon));
            Point mean{};
            for (const Point& p : gt.back()) mean += Real(1.0 / horizon) * p;
            Track m, s;
            for (const Point& p : gt.back()) {
                m.push_back(Real(2) * mean - p);
                s.push_back(p + offset);
            }
            mirrored.push_back(m);
            shifted.push_back(s);
        }
        worst_self = std::max(worst_self, std::fabs(tcc(gt, gt) - 1.0));
        worst_mirror = std::max(worst_mirror, std::fabs(tcc(gt, mirrored) + 1.0));

        double expect = 0;
        for (std::size_t i = 0; i < agents; ++i) {
            oracle::Vector gx, gy, px, py;
            for (std::size_t k = 0; k < horizon; ++k) {
                gx.push_back(gt[i][k].x);
                gy.push_back(gt[i][k].y);
                px.push_back(pred[i][k].x);
                py.push_back(pred[i][k].y);
            }
            expect += (oracle::pearson(px, gx) + oracle::pearson(py, gy)) / 2;
        }
        expect /= double(agents);
        worst_oracle = std::max(worst_oracle, std::fabs(tcc(gt, pred) - expect));

        const double norm = std::hypot(double(offset.x), double(offset.y));
        const AdeFde e = ade_fde(gt, shifted);
        worst_offset = std::max({worst_offset, std::fabs(e.ade - norm), std::fabs(e.fde - norm)});
    }

    // Best-of-m on model predictions for every scene of a small evaluated batch.
    Model model(micro_model_config());
    Rng init(41);
    model.initialize(init);
    bool monotone = true;
    std::size_t batches = 0;
    for (std::uint64_t s = 0; s < 10; ++s) {
        const SceneBatch scene = micro_scene(400 + s);
        Rng draw(s);
        const PredictionSet preds = model.predict(scene, 20, draw);
        Real previous = INFINITY;
        for (std::size_t m = 1; m <= 20; ++m) {
            const Real ade = best_of_m_metrics(scene.future, preds, m).ade;
            monotone = monotone && ade <= previous;
            previous = ade;
        }
        ++batches;
    }

    const bool ok = worst_self < 1e-12 && worst_mirror < 1e-12 && worst_oracle < 1e-9 && worst_offset < 1e-12 && monotone;
    return {ok, fmt("|tcc-1| %.2g, |tcc+1| %.2g (bound 1e-12), oracle err %.2g (bound 1e-9) on 100 trajectories, "
                    "offset err %.2g (bound 1e-12), best-of-m monotone on %zu/%zu batches",
                    worst_self, worst_mirror, worst_oracle, worst_offset, monotone ? batches : 0, batches)};
}

// ---- 5: loss identities -----------------------------------------------------

Outcome loss_identities() {
    Rng rng(5);
    bool variety_zero = true;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t agents = 1 + rng.uniform_index(4), horizon = 1 + rng.uniform_index(12);
        const std::size_t m = 1 + rng.uniform_index(20);
        std::vector<Track> gt;
        for (std::size_t i = 0; i < agents; ++i) gt.push_back(random_walk(rng, horizon));
        PredictionSet preds;
        for (std::size_t k = 0; k < m; ++k) {
            std::vector<Track> sample;
            for (std::size_t i = 0; i < agents; ++i) sample.push_back(random_walk(rng, horizon));
            preds.samples.push_back(sample);
        }
        // Every agent's exact track sits in some (random) sample.
        for (std::size_t i = 0; i < agents; ++i) preds.samples[rng.uniform_index(m)][i] = gt[i];
        for (VarietyDistance d : {VarietyDistance::concatenated, VarietyDistance::per_frame_mean})
            variety_zero = variety_zero && variety_loss(gt, preds, d) == 0;
    }

    const Vec x{0.3, -1.2, 2.0};
    const Real same = coherence_term(x, x, true, Real(0.5));
    const Real orth = coherence_term(Vec{1, 0}, Vec{0, 1}, false, Real(0.5));
    const Real cos09 = coherence_term(Vec{1, 0}, Vec{0.9, std::sqrt(0.19)}, false, Real(0.5));
    const bool coh = std::fabs(same) < 1e-12 && orth == 0 && std::fabs(cos09 - 0.4) < 1e-12;
    return {variety_zero && coh,
            fmt("variety 0 with an exact sample in 100/100 cases: %s; coherence cases %.3g, %.3g, %.3g "
                "(expected 0, 0, 0.4 within 1e-12)",
                variety_zero ? "yes" : "no", same, orth, cos09)};
}

// ---- 6: overfit sanity ------------------------------------------------------

Outcome overfit() {
    // Eight noiseless two-walker parallel scenes; default model, full batch.
    Rng data(11);
    std::vector<SceneBatch> scenes;
    for (int k = 0; k < 8; ++k) scenes.push_back(synth_scene(SynthKind::parallel, 2, data));
    TrainConfig cfg;
    cfg.batch_size = 8;
    cfg.epochs = 2000;
    cfg.max_iterations = 2000;
    cfg.adam.learning_rate = Real(3e-4);

    const auto start = Clock::now();
    const TrainResult r = train(cfg, scenes);
    EvalOptions eo;
    eo.samples = 20;
    const MetricsReport report = evaluate(r.checkpoint.model, scenes, eo);
    const double t = seconds_since(start);

    Real best = INFINITY;
    std::size_t reached_at = 0;
    for (const LossRecord& rec : r.curve) {
        if (rec.variety < best) best = rec.variety;
        if (reached_at == 0 && rec.variety < Real(0.05)) reached_at = rec.iteration;
    }
    const std::size_t tail = std::min<std::size_t>(50, r.curve.size());
    double tail_mean = 0;
    for (std::size_t k = r.curve.size() - tail; k < r.curve.size(); ++k) tail_mean += r.curve[k].variety;
    tail_mean /= double(tail);

    const bool ok = reached_at > 0 && report.ade < 0.1 && t < 300;
    return {ok, fmt("%zu iterations: min variety %.4f (bound 0.05, first below at iteration %zu, mean of last 50 "
                    "%.4f), train best-of-20 ADE %.4f (bound 0.1), %.1f s (bound 300 s)",
                    r.curve.size(), best, reached_at, tail_mean, report.ade, t)};
}

// ---- 7: method effect on turning scenes -------------------------------------

constexpr std::size_t kTurnTrainScenes = 500;
constexpr std::size_t kTurnTestScenes = 100;
constexpr std::size_t kTurnAgents = 2;
constexpr std::size_t kTurnEpochs = 60;
constexpr std::uint64_t kTurnSeeds[] = {1, 2, 3, 4, 5};

TrainConfig turning_config(bool full) {
    // Default widths, batch size and learning rate; only the epoch budget is scaled down.
    TrainConfig c;
    c.epochs = kTurnEpochs;
    if (full) {
        c.model.queue = 3;
    } else {
        c.model.queue = 1;
        c.model.use_scm = false;
        c.model.latent_mode = LatentMode::none;
    }
    return c;
}

Outcome method_effect() {
    const auto start = Clock::now();
    Rng train_rng(7001), test_rng(7002);
    std::vector<SceneBatch> train_set, test_set;
    for (std::size_t k = 0; k < kTurnTrainScenes; ++k)
        train_set.push_back(synth_scene(SynthKind::turning, kTurnAgents, train_rng));
    for (std::size_t k = 0; k < kTurnTestScenes; ++k)
        test_set.push_back(synth_scene(SynthKind::turning, kTurnAgents, test_rng));

    double full_sum = 0, ablation_sum = 0;
    std::string per_seed;
    for (std::uint64_t seed : kTurnSeeds) {
        double ade[2] = {0, 0};
        for (int variant = 0; variant < 2; ++variant) {
            TrainConfig cfg = turning_config(variant == 0);
            cfg.seed = seed;
            const TrainResult r = train(cfg, train_set);
            EvalOptions eo;
            eo.samples = 20;
            eo.seed = seed;
            ade[variant] = evaluate(r.checkpoint.model, test_set, eo).ade;
        }
        full_sum += ade[0];
        ablation_sum += ade[1];
        per_seed += fmt(" [seed %llu: %.3f vs %.3f]", static_cast<unsigned long long>(seed), ade[0], ade[1]);
    }
    const double n = double(std::size(kTurnSeeds));
    const double t = seconds_since(start);
    const bool ok = full_sum / n <= ablation_sum / n && t < 1800;
    return {ok, fmt("mean best-of-20 test ADE: full q=3 %.4f, q=1/no-SCM/no-latent %.4f", full_sum / n,
                    ablation_sum / n) +
                    per_seed + fmt(", %.0f s (bound 1800 s)", t)};
}

// ---- 8: determinism and checkpoint round trip -------------------------------

Outcome determinism() {
    Rng data(8);
    std::vector<SceneBatch> scenes;
    for (int k = 0; k < 6; ++k) scenes.push_back(synth_scene(SynthKind::crossroad, 3, data));
    TrainConfig cfg;
    cfg.model.hidden = 12;
    cfg.model.latent = 4;
    cfg.model.decoder_hidden = 12;
    cfg.batch_size = 3;
    cfg.epochs = 3;
    cfg.loss.m = 5;
    cfg.seed = 88;

    const TrainResult a = train(cfg, scenes);
    const TrainResult b = train(cfg, scenes);
    bool curves = a.curve.size() == b.curve.size();
    for (std::size_t k = 0; curves && k < a.curve.size(); ++k)
        curves = a.curve[k].total == b.curve[k].total && a.curve[k].variety == b.curve[k].variety;

    EvalOptions eo;
    eo.samples = 20;
    eo.seed = 3;
    const MetricsReport ra = evaluate(a.checkpoint.model, scenes, eo);
    const MetricsReport rb = evaluate(b.checkpoint.model, scenes, eo);

    std::stringstream text;
    write_checkpoint(text, a.checkpoint);
    const Checkpoint loaded = read_checkpoint(text);
    const MetricsReport rl = evaluate(loaded.model, scenes, eo);
    std::ostringstream again;
    write_checkpoint(again, loaded);

    const bool ok = curves && ra == rb && ra == rl && again.str() == text.str();
    return {ok, fmt("loss curves bitwise %s, metrics bitwise %s, reloaded metrics bitwise %s, checkpoint text stable %s",
                    curves ? "yes" : "no", ra == rb ? "yes" : "no", ra == rl ? "yes" : "no",
                    again.str() == text.str() ? "yes" : "no")};
}

struct Criterion {
    const char* title;
    std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DSCMP acceptance checks"};
    int only = 0;
    app.add_option("--criterion", only, "Run a single criterion (1-8)")->check(CLI::Range(1, 8));
    CLI11_PARSE(app, argc, argv);

    const std::vector<Criterion> all{
        {"degeneration equivalence", degeneration},
        {"gradient correctness", gradients},
        {"SCM contract", scm_contract},
        {"metric identities", metric_identities},
        {"loss identities", loss_identities},
        {"overfit sanity", overfit},
        {"method effect (turning)", method_effect},
        {"determinism and checkpoint round trip", determinism},
    };

    bool all_pass = true;
    for (std::size_t k = 0; k < all.size(); ++k) {
        if (only != 0 && static_cast<std::size_t>(only) != k + 1) continue;
        Outcome o;
        try {
            o = all[k].run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        all_pass = all_pass && o.pass;
        std::cout << "criterion " << k + 1 << " " << (o.pass ? "PASS" : "FAIL") << "  " << all[k].title << ": "
                  << o.detail << std::endl;
    }
    return all_pass ? 0 : 1;
}
