#include "dscmp/model.hpp"

#include <cmath>
#include <stdexcept>

#include "dscmp/data.hpp"

namespace dscmp {

namespace {

Vec point_vec(Point p) {
    return Vec{p.x, p.y};
}

void uniform_init(Mat& m, Rng& rng, double bound) {
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = static_cast<Real>((2.0 * rng.uniform() - 1.0) * bound);
}

}  // namespace

DecoderParams DecoderParams::declare(ParamStore& store, const std::string& prefix, std::size_t encoder_width,
                                     std::size_t latent_width, std::size_t hidden_width) {
    DecoderParams p;
    p.encoder_width = encoder_width;
    p.latent_width = latent_width;
    p.hidden_width = hidden_width;
    p.fuse_w = store.add(prefix + ".fuse.W", hidden_width, encoder_width + latent_width);
    p.fuse_b = store.add(prefix + ".fuse.b", hidden_width, 1);
    p.cell = IcmParams::declare(store, prefix + ".lstm", 2, hidden_width);
    p.out_w = store.add(prefix + ".out.W", 2, hidden_width);
    p.out_b = store.add(prefix + ".out.b", 2, 1);
    return p;
}

Model::Model(ModelConfig config) : config_(std::move(config)) {
    if (config_.hidden == 0 || config_.latent == 0 || config_.decoder_hidden == 0 || config_.queue == 0 ||
        config_.obs_len < 2 || config_.pred_len == 0) {
        throw std::invalid_argument("Model: invalid configuration");
    }
    config_.scene.obs_len = config_.obs_len;
    config_.scene.latent = config_.latent;
    icm_ = IcmParams::declare(params_, "icm", 2, config_.hidden);
    scm_ = ScmParams::declare(params_, "scm", config_.hidden);
    scene_ = SceneEncoderParams::declare(params_, "scene", config_.scene);
    decoder_ = DecoderParams::declare(params_, "decoder", config_.hidden, config_.latent, config_.decoder_hidden);
}

void Model::initialize(Rng& rng) {
    init_icm(params_, icm_, rng, config_.forget_bias);
    init_scm(params_, scm_, rng);
    init_scene_encoder(params_, scene_, rng);
    {
        Mat& w = params_.mutable_value(decoder_.fuse_w);
        uniform_init(w, rng, 1.0 / std::sqrt(static_cast<double>(w.cols())));
        params_.mutable_value(decoder_.fuse_b).fill(Real(0));
    }
    init_icm(params_, decoder_.cell, rng, config_.forget_bias);
    {
        Mat& w = params_.mutable_value(decoder_.out_w);
        uniform_init(w, rng, 1.0 / std::sqrt(static_cast<double>(w.cols())));
        params_.mutable_value(decoder_.out_b).fill(Real(0));
    }
}

ObservationTrace Model::observe_traced(const SceneBatch& scene) const {
    const std::size_t n = scene.agent_count();
    const std::size_t frames = config_.obs_len;
    if (n == 0) throw std::invalid_argument("observe: scene has no agents");
    for (std::size_t i = 0; i < n; ++i) {
        if (scene.observed[i].size() != frames) {
            throw std::invalid_argument("observe: agent " + std::to_string(i) + " has " +
                                        std::to_string(scene.observed[i].size()) + " observed frames, expected " +
                                        std::to_string(frames));
        }
    }

    ObservationTrace trace;
    trace.displacements.reserve(n);
    for (const Track& track : scene.observed) trace.displacements.push_back(to_relative(track));

    NeighborSet neighbors;
    if (config_.neighbor_radius > 0) {
        std::vector<std::array<Real, 2>> last;
        for (const Track& track : scene.observed) last.push_back({track.back().x, track.back().y});
        neighbors = radius_neighbors(last, config_.neighbor_radius);
    } else {
        neighbors = all_neighbors(n);
    }

    std::vector<FeatureQueue> queues = init_queues(n, config_.queue, config_.hidden);
    trace.icm.resize(frames);
    trace.icm_hidden.assign(n, {});
    trace.icm_cell.assign(n, {});
    for (std::size_t t = 0; t < frames; ++t) {
        trace.icm[t].reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            const Vec motion = point_vec(trace.displacements[i][t]);
            IcmStep step = icm_forward(params_, icm_, motion, queues[i]);
            queues[i].push_pop(step.hidden, step.cell);
            trace.icm_hidden[i].push_back(std::move(step.hidden));
            trace.icm_cell[i].push_back(std::move(step.cell));
            trace.icm[t].push_back(std::move(step.cache));
        }
        if (config_.use_scm) {
            ScmResult refined = refine_hidden_queues(params_, scm_, queues, neighbors, config_.scm);
            queues = std::move(refined.queues);
            trace.scm.push_back(std::move(refined.cache));
        }
    }

    trace.state.last_hidden.reserve(n);
    for (const auto& queue : queues) trace.state.last_hidden.push_back(queue.newest_hidden());
    trace.state.queues = std::move(queues);
    return trace;
}

void Model::observe_backward(const ObservationTrace& trace, const std::vector<Vec>& d_last_hidden,
                             const std::vector<std::vector<Vec>>& d_icm_hidden, Gradients& grads) const {
    const std::size_t n = trace.state.queues.size();
    const std::size_t q = config_.queue;
    const std::size_t h = config_.hidden;
    const std::size_t frames = trace.icm.size();
    if (d_last_hidden.size() != n) throw ShapeError("observe_backward: d_last_hidden agent count");
    const bool have_feature_grads = !d_icm_hidden.empty();
    if (have_feature_grads && d_icm_hidden.size() != n) throw ShapeError("observe_backward: d_icm_hidden agent count");

    // Gradient w.r.t. the queue state after the current frame, [agent][slot].
    std::vector<std::vector<Vec>> d_hidden(n, std::vector<Vec>(q, Vec(h)));
    std::vector<std::vector<Vec>> d_cell(n, std::vector<Vec>(q, Vec(h)));
    for (std::size_t i = 0; i < n; ++i) d_hidden[i][q - 1] += d_last_hidden[i];

    for (std::size_t t = frames; t-- > 0;) {
        if (config_.use_scm) d_hidden = scm_backward(params_, scm_, trace.scm[t], d_hidden, grads);
        for (std::size_t i = 0; i < n; ++i) {
            Vec dh_new = d_hidden[i][q - 1];
            if (have_feature_grads && !d_icm_hidden[i].empty()) dh_new += d_icm_hidden[i][t];
            const Vec& dc_new = d_cell[i][q - 1];

            std::vector<Vec> prev_hidden(q, Vec(h)), prev_cell(q, Vec(h));
            for (std::size_t s = 0; s + 1 < q; ++s) {
                prev_hidden[s + 1] = d_hidden[i][s];
                prev_cell[s + 1] = d_cell[i][s];
            }
            const IcmInputGrads g = icm_backward(params_, icm_, trace.icm[t][i], dh_new, dc_new, grads);
            for (std::size_t s = 0; s < q; ++s) {
                prev_hidden[s] += g.d_hidden[s];
                prev_cell[s] += g.d_cell[s];
            }
            d_hidden[i] = std::move(prev_hidden);
            d_cell[i] = std::move(prev_cell);
        }
    }
}

DecoderTrace Model::decode_agent(std::span<const Real> last_hidden, std::span<const Real> z, std::size_t steps,
                                 Point last_position, Point last_displacement) const {
    if (steps == 0) throw std::invalid_argument("decode: steps must be positive");
    if (last_hidden.size() != config_.hidden || z.size() != config_.latent) {
        throw ShapeError("decode: hidden or latent width mismatch");
    }
    DecoderTrace trace;
    trace.fused_input = Vec(config_.hidden + config_.latent);
    std::copy(last_hidden.begin(), last_hidden.end(), trace.fused_input.begin());
    std::copy(z.begin(), z.end(), trace.fused_input.begin() + static_cast<std::ptrdiff_t>(config_.hidden));
    Vec pre = matvec(params_.value(decoder_.fuse_w), trace.fused_input);
    pre += params_.value(decoder_.fuse_b).span();
    trace.initial_hidden = tanh(pre);

    FeatureQueue state(1, config_.decoder_hidden);
    state.push_pop(trace.initial_hidden, Vec(config_.decoder_hidden));
    Vec input = point_vec(last_displacement);
    Point position = last_position;
    trace.steps.reserve(steps);
    for (std::size_t k = 0; k < steps; ++k) {
        IcmStep step = icm_forward(params_, decoder_.cell, input, state);
        Vec out = matvec(params_.value(decoder_.out_w), step.hidden);
        out += params_.value(decoder_.out_b).span();
        const Point d{out[0], out[1]};
        position += d;
        trace.displacements.push_back(d);
        trace.positions.push_back(position);
        state.push_pop(step.hidden, step.cell);
        trace.hidden.push_back(std::move(step.hidden));
        trace.steps.push_back(std::move(step.cache));
        input = std::move(out);
    }
    return trace;
}

std::pair<Vec, Vec> Model::decode_agent_backward(const DecoderTrace& trace, std::span<const Point> d_positions,
                                                 Gradients& grads) const {
    const std::size_t steps = trace.steps.size();
    if (d_positions.size() != steps) throw ShapeError("decode_agent_backward: gradient length mismatch");
    const std::size_t hd = config_.decoder_hidden;

    Vec d_next_input(2), d_hidden_next(hd), d_cell_next(hd);
    Point cumulative;
    for (std::size_t k = steps; k-- > 0;) {
        cumulative += d_positions[k];
        Vec d_out{cumulative.x + d_next_input[0], cumulative.y + d_next_input[1]};
        add_outer(grads[decoder_.out_w], d_out, trace.hidden[k]);
        axpy(Real(1), d_out, grads[decoder_.out_b].span());
        Vec dh = d_hidden_next;
        matvec_t_acc(params_.value(decoder_.out_w), d_out, dh.span());
        const IcmInputGrads g = icm_backward(params_, decoder_.cell, trace.steps[k], dh, d_cell_next, grads);
        d_next_input = g.d_motion;
        d_hidden_next = g.d_hidden[0];
        d_cell_next = g.d_cell[0];
    }

    Vec d_pre(hd);
    for (std::size_t k = 0; k < hd; ++k) {
        const Real y = trace.initial_hidden[k];
        d_pre[k] = d_hidden_next[k] * (Real(1) - y * y);
    }
    add_outer(grads[decoder_.fuse_w], d_pre, trace.fused_input);
    axpy(Real(1), d_pre, grads[decoder_.fuse_b].span());
    const Vec d_fused = matvec_t(params_.value(decoder_.fuse_w), d_pre);
    Vec d_hidden(config_.hidden), d_z(config_.latent);
    std::copy(d_fused.begin(), d_fused.begin() + static_cast<std::ptrdiff_t>(config_.hidden), d_hidden.begin());
    std::copy(d_fused.begin() + static_cast<std::ptrdiff_t>(config_.hidden), d_fused.end(), d_z.begin());
    return {std::move(d_hidden), std::move(d_z)};
}

std::vector<Track> Model::decode(const EncoderState& state, std::span<const Real> z, std::size_t steps,
                                 std::span<const Point> last_pos, std::span<const Point> last_disp) const {
    const std::size_t n = state.last_hidden.size();
    if (last_pos.size() != n || last_disp.size() != n) throw ShapeError("decode: agent count mismatch");
    std::vector<Track> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(decode_agent(state.last_hidden[i], z, steps, last_pos[i], last_disp[i]).positions);
    }
    return out;
}

LatentOutput Model::scene_latent(const SceneBatch& scene, const ObservationTrace& trace) const {
    if (!scene.map) throw std::invalid_argument("scene '" + scene.id + "' has no semantic map");
    return encode_scene(params_, scene_, *scene.map, trace.displacements);
}

PredictionSet Model::predict(const SceneBatch& scene, std::size_t m, Rng& rng) const {
    if (m == 0) throw std::invalid_argument("predict: need at least one sample");
    const ObservationTrace trace = observe_traced(scene);
    const std::vector<Point> pos = last_positions(scene);
    const std::vector<Point> disp = last_displacements(scene);

    LatentOutput latent;
    if (config_.latent_mode == LatentMode::scene) latent = scene_latent(scene, trace);

    PredictionSet out;
    for (std::size_t k = 0; k < m; ++k) {
        Vec z(config_.latent);
        switch (config_.latent_mode) {
        case LatentMode::scene: z = sample_latent(latent.mu, latent.sigma, rng); break;
        case LatentMode::gaussian: z = sample_gaussian(rng, Vec(config_.latent), Vec(config_.latent, Real(1))); break;
        case LatentMode::none: break;
        }
        out.samples.push_back(decode(trace.state, z, config_.pred_len, pos, disp));
        out.latents.push_back(std::move(z));
    }
    return out;
}

std::vector<Point> last_positions(const SceneBatch& scene) {
    std::vector<Point> out;
    for (const Track& track : scene.observed) out.push_back(track.back());
    return out;
}

std::vector<Point> last_displacements(const SceneBatch& scene) {
    std::vector<Point> out;
    for (const Track& track : scene.observed) {
        out.push_back(track.size() >= 2 ? track[track.size() - 1] - track[track.size() - 2] : Point{});
    }
    return out;
}

}  // namespace dscmp
