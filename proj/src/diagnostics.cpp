#include "dscmp/diagnostics.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "dscmp/data.hpp"
#include "dscmp/icm.hpp"
#include "dscmp/objectives.hpp"
#include "dscmp/scene_latent.hpp"
#include "dscmp/scm.hpp"

namespace dscmp {

namespace {

Vec random_vec(Rng& rng, std::size_t n, double scale = 1.0) {
    Vec v(n);
    for (std::size_t k = 0; k < n; ++k) v[k] = static_cast<Real>(scale * (2.0 * rng.uniform() - 1.0));
    return v;
}

void randomize(ParamStore& store, Rng& rng, double scale) {
    for (ParamId id : store.ids()) {
        Mat& m = store.mutable_value(id);
        for (std::size_t k = 0; k < m.size(); ++k) m[k] = static_cast<Real>(scale * (2.0 * rng.uniform() - 1.0));
    }
}

GradCheckReport check_icm(Rng& rng, double eps) {
    const std::size_t d = 2, h = 5, q = 3;
    ParamStore store;
    const IcmParams p = IcmParams::declare(store, "icm", d, h);
    randomize(store, rng, 0.5);
    FeatureQueue queue(q, h);
    for (std::size_t s = 0; s < q; ++s) queue.push_pop(random_vec(rng, h), random_vec(rng, h));
    const Vec motion = random_vec(rng, d);
    const Vec wh = random_vec(rng, h), wc = random_vec(rng, h);

    const Objective f = [&](ParamStore& ps, bool accumulate) {
        const IcmStep step = icm_forward(ps, p, motion, queue);
        if (accumulate) icm_backward(ps, p, step.cache, wh, wc, ps.grads());
        return static_cast<double>(dot(wh, step.hidden) + dot(wc, step.cell));
    };
    return grad_check(f, store, eps);
}

GradCheckReport check_scm(Rng& rng, double eps) {
    const std::size_t h = 5, q = 3, n = 3;
    ParamStore store;
    const ScmParams p = ScmParams::declare(store, "scm", h);
    randomize(store, rng, 0.5);
    std::vector<FeatureQueue> queues = init_queues(n, q, h);
    for (auto& queue : queues) {
        for (std::size_t s = 0; s < q; ++s) queue.push_pop(random_vec(rng, h), random_vec(rng, h));
    }
    std::vector<std::vector<Vec>> w(n);
    for (auto& agent : w) {
        for (std::size_t s = 0; s < q; ++s) agent.push_back(random_vec(rng, h));
    }
    const NeighborSet neighbors = all_neighbors(n);

    const Objective f = [&](ParamStore& ps, bool accumulate) {
        const ScmResult r = refine_hidden_queues(ps, p, queues, neighbors);
        double total = 0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t s = 0; s < q; ++s) total += dot(w[i][s], r.queues[i].hidden(s));
        }
        if (accumulate) scm_backward(ps, p, r.cache, w, ps.grads());
        return total;
    };
    return grad_check(f, store, eps);
}

GradCheckReport check_scene(Rng& rng, double eps) {
    const ModelConfig mc = micro_model_config();
    SceneEncoderConfig cfg = mc.scene;
    cfg.obs_len = mc.obs_len;
    cfg.latent = mc.latent;
    ParamStore store;
    const SceneEncoderParams p = SceneEncoderParams::declare(store, "scene", cfg);
    init_scene_encoder(store, p, rng);
    randomize(store, rng, 0.4);
    const SceneBatch scene = micro_scene(rng.next_u64());
    std::vector<Track> disp;
    for (const Track& t : scene.observed) disp.push_back(to_relative(t));
    const Vec motion = summed_motion(disp, cfg.obs_len);
    const Vec a = random_vec(rng, cfg.latent), b = random_vec(rng, cfg.latent);

    const Objective f = [&](ParamStore& ps, bool accumulate) {
        const MapFeature feature = encode_map(ps, p, *scene.map);
        const LatentOutput out = latent_head(ps, p, feature.pooled, motion);
        if (accumulate) {
            const Vec d_pooled = latent_head_backward(ps, p, out.cache, a, b, ps.grads());
            encode_map_backward(ps, p, feature.cache, d_pooled, ps.grads());
        }
        return static_cast<double>(dot(a, out.mu) + dot(b, out.sigma));
    };
    return grad_check(f, store, eps);
}

GradCheckReport check_decoder(Rng& rng, double eps) {
    ModelConfig mc = micro_model_config();
    Model model(mc);
    model.initialize(rng);
    const Vec h = random_vec(rng, mc.hidden), z = random_vec(rng, mc.latent);
    const Point last{Real(0.3), Real(-0.2)}, disp{Real(0.4), Real(0.1)};
    std::vector<Point> w;
    for (std::size_t k = 0; k < mc.pred_len; ++k) {
        w.push_back({static_cast<Real>(2 * rng.uniform() - 1), static_cast<Real>(2 * rng.uniform() - 1)});
    }
    const Objective f = [&](ParamStore& ps, bool accumulate) {
        const DecoderTrace trace = model.decode_agent(h, z, mc.pred_len, last, disp);
        double total = 0;
        for (std::size_t k = 0; k < w.size(); ++k) {
            total += w[k].x * trace.positions[k].x + w[k].y * trace.positions[k].y;
        }
        if (accumulate) model.decode_agent_backward(trace, w, ps.grads());
        return total;
    };
    return grad_check(f, model.params(), eps, [](const std::string& name) { return name.starts_with("decoder."); });
}

GradCheckReport check_full(Rng& rng, double eps) {
    Model model(micro_model_config());
    // Uniform +-0.8 weights: wide enough that hidden states, relation scores and every
    // gradient entry sit well above the round-off of a difference quotient.
    randomize(model.params(), rng, 0.8);
    const SceneBatch scene = micro_scene(rng.next_u64());
    LossConfig loss;
    loss.lambda = Real(0.5);
    loss.m = 3;
    loss.pairs_per_batch = 6;
    const std::uint64_t loss_seed = rng.next_u64();
    const Objective f = [&](ParamStore& ps, bool accumulate) {
        Rng r(loss_seed);
        return static_cast<double>(total_loss(model, scene, loss, r, accumulate ? &ps.grads() : nullptr).total);
    };
    return grad_check(f, model.params(), eps);
}

}  // namespace

GradModule parse_grad_module(std::string_view name) {
    if (name == "icm") return GradModule::icm;
    if (name == "scm") return GradModule::scm;
    if (name == "scene") return GradModule::scene;
    if (name == "decoder") return GradModule::decoder;
    if (name == "full") return GradModule::full;
    throw std::invalid_argument("unknown module '" + std::string(name) + "' (icm|scm|scene|decoder|full)");
}

std::string_view to_string(GradModule module) {
    switch (module) {
    case GradModule::icm: return "icm";
    case GradModule::scm: return "scm";
    case GradModule::scene: return "scene";
    case GradModule::decoder: return "decoder";
    case GradModule::full: return "full";
    }
    return "?";
}

ModelConfig micro_model_config() {
    ModelConfig c;
    c.hidden = 6;
    c.latent = 3;
    c.decoder_hidden = 5;
    c.queue = 3;
    c.obs_len = 4;
    c.pred_len = 3;
    c.scene.map_channels = 3;
    c.scene.conv_channels = {4, 4, 4};
    c.scene.kernels = {4, 3, 1};
    c.scene.strides = {2, 2, 1};
    c.scene.feature_width = 4;
    return c;
}

SceneBatch micro_scene(std::uint64_t seed) {
    const ModelConfig mc = micro_model_config();
    const std::size_t frames = mc.obs_len + mc.pred_len;
    SynthOptions opt;
    opt.map_size = 20;
    opt.cell_size = 1;
    Rng rng(seed);
    // One agent weaving eastward, one accelerating north-west: distinct features for
    // the relation scores, plus a little seeded jitter.
    Track a, b;
    for (std::size_t t = 0; t < frames; ++t) {
        const Real tt = static_cast<Real>(t);
        a.push_back({Real(-2) + Real(0.5) * tt, Real(0.3) * std::sin(Real(0.7) * tt)});
        b.push_back({Real(1) - Real(0.02) * tt * tt, Real(-2) + Real(0.35) * tt});
    }
    SceneBatch scene;
    scene.id = "micro";
    scene.map = layout_map(MapLayout::corner_left, opt);
    scene.agent_ids = {0, 1};
    for (Track* track : {&a, &b}) {
        for (Point& p : *track) {
            p.x += Real(0.02) * static_cast<Real>(rng.normal());
            p.y += Real(0.02) * static_cast<Real>(rng.normal());
        }
        scene.observed.emplace_back(track->begin(), track->begin() + static_cast<std::ptrdiff_t>(mc.obs_len));
        scene.future.emplace_back(track->begin() + static_cast<std::ptrdiff_t>(mc.obs_len), track->end());
    }
    return scene;
}

GradCheckReport check_module_gradients(GradModule module, std::uint64_t seed, double eps) {
    Rng rng(seed);
    switch (module) {
    case GradModule::icm: return check_icm(rng, eps);
    case GradModule::scm: return check_scm(rng, eps);
    case GradModule::scene: return check_scene(rng, eps);
    case GradModule::decoder: return check_decoder(rng, eps);
    case GradModule::full: return check_full(rng, eps);
    }
    throw std::invalid_argument("unknown module");
}

}  // namespace dscmp
