#include "dscmp/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "dscmp/numkit/errors.hpp"

namespace dscmp {

void LossConfig::validate() const {
    if (!(lambda >= 0)) throw std::invalid_argument("loss: lambda must be non-negative");
    if (!(margin >= 0 && margin <= 1)) throw std::invalid_argument("loss: margin must lie in [0, 1]");
    if (m == 0) throw std::invalid_argument("loss: m must be at least 1");
}

Real coherence_term(std::span<const Real> a, std::span<const Real> b, bool within_queue, Real margin) {
    const Real c = cosine_sim(a, b);
    return within_queue ? Real(1) - c : std::max(Real(0), c - margin);
}

void coherence_term_backward(std::span<const Real> a, std::span<const Real> b, bool within_queue, Real margin,
                             Real scale, std::span<Real> da, std::span<Real> db) {
    const Real na = norm(a), nb = norm(b);
    if (na < kCosineNormGuard || nb < kCosineNormGuard) return;  // cosine is clamped to 0 there
    const Real c = dot(a, b) / (na * nb);
    Real d_cos = 0;
    if (within_queue) {
        d_cos = -1;
    } else if (c - margin > 0) {
        d_cos = 1;
    }
    if (d_cos == 0) return;
    const Real g = scale * d_cos;
    const Real inv = Real(1) / (na * nb);
    for (std::size_t k = 0; k < a.size(); ++k) {
        da[k] += g * (b[k] * inv - c * a[k] / (na * na));
        db[k] += g * (a[k] * inv - c * b[k] / (nb * nb));
    }
}

CoherenceResult coherence_loss(const std::vector<std::vector<Vec>>& features, std::size_t q, std::size_t pairs,
                               Real margin, Rng& rng) {
    if (q == 0) throw std::invalid_argument("coherence_loss: q must be positive");
    CoherenceResult out;
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (features[i].size() >= 2) eligible.push_back(i);
    }
    if (eligible.empty() || pairs == 0) return out;

    Real sum = 0;
    for (std::size_t p = 0; p < pairs; ++p) {
        const std::size_t agent = eligible[rng.uniform_index(eligible.size())];
        const std::size_t frames = features[agent].size();
        const std::size_t t1 = rng.uniform_index(frames);
        std::size_t t2 = rng.uniform_index(frames - 1);
        if (t2 >= t1) ++t2;
        const bool near = (t1 > t2 ? t1 - t2 : t2 - t1) < q;
        sum += coherence_term(features[agent][t1], features[agent][t2], near, margin);
        out.pairs.push_back({agent, t1, t2});
    }
    out.value = sum / static_cast<Real>(pairs);
    out.valid = true;
    return out;
}

std::vector<std::vector<Vec>> coherence_backward(const std::vector<std::vector<Vec>>& features, std::size_t q,
                                                 Real margin, const CoherenceResult& result) {
    std::vector<std::vector<Vec>> grads(features.size());
    for (std::size_t i = 0; i < features.size(); ++i) {
        for (const Vec& f : features[i]) grads[i].emplace_back(f.size());
    }
    if (!result.valid || result.pairs.empty()) return grads;
    const Real scale = Real(1) / static_cast<Real>(result.pairs.size());
    for (const FeaturePair& p : result.pairs) {
        const bool near = (p.t1 > p.t2 ? p.t1 - p.t2 : p.t2 - p.t1) < q;
        coherence_term_backward(features[p.agent][p.t1], features[p.agent][p.t2], near, margin, scale,
                                grads[p.agent][p.t1].span(), grads[p.agent][p.t2].span());
    }
    return grads;
}

Real track_distance(std::span<const Point> gt, std::span<const Point> pred, VarietyDistance mode) {
    if (gt.size() != pred.size()) {
        throw ShapeError("track_distance: " + std::to_string(pred.size()) + " predicted frames vs " +
                         std::to_string(gt.size()) + " ground-truth frames");
    }
    if (gt.empty()) throw std::invalid_argument("track_distance: empty track");
    if (mode == VarietyDistance::concatenated) {
        Real sq = 0;
        for (std::size_t t = 0; t < gt.size(); ++t) {
            const Point e = pred[t] - gt[t];
            sq += e.x * e.x + e.y * e.y;
        }
        return std::sqrt(sq);
    }
    Real sum = 0;
    for (std::size_t t = 0; t < gt.size(); ++t) sum += distance(pred[t], gt[t]);
    return sum / static_cast<Real>(gt.size());
}

std::vector<Point> track_distance_grad(std::span<const Point> gt, std::span<const Point> pred, VarietyDistance mode) {
    const Real d = track_distance(gt, pred, mode);
    std::vector<Point> out(gt.size());
    if (mode == VarietyDistance::concatenated) {
        if (d == 0) return out;
        for (std::size_t t = 0; t < gt.size(); ++t) out[t] = (Real(1) / d) * (pred[t] - gt[t]);
        return out;
    }
    const Real inv_t = Real(1) / static_cast<Real>(gt.size());
    for (std::size_t t = 0; t < gt.size(); ++t) {
        const Real e = distance(pred[t], gt[t]);
        if (e > 0) out[t] = (inv_t / e) * (pred[t] - gt[t]);
    }
    return out;
}

Real variety_loss(std::span<const Track> gt, const PredictionSet& preds, VarietyDistance mode) {
    if (preds.samples.empty()) throw std::invalid_argument("variety_loss: no samples");
    if (gt.empty()) throw std::invalid_argument("variety_loss: no agents");
    Real sum = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        Real best = std::numeric_limits<Real>::infinity();
        for (const auto& sample : preds.samples) {
            if (sample.size() != gt.size()) throw ShapeError("variety_loss: sample agent count mismatch");
            best = std::min(best, track_distance(gt[i], sample[i], mode));
        }
        sum += best;
    }
    return sum / static_cast<Real>(gt.size());
}

namespace {

struct SceneWork {
    const SceneBatch* scene = nullptr;
    ObservationTrace trace;
    std::vector<Point> last_pos, last_disp;
    std::size_t map_slot = 0;
    LatentOutput latent;
    std::vector<Vec> eps;  // per sample, scene mode only
    std::vector<std::size_t> best_sample;
    std::vector<DecoderTrace> best_trace;
};

}  // namespace

LossBreakdown total_loss(const Model& model, std::span<const SceneBatch* const> scenes, const LossConfig& config,
                         Rng& rng, Gradients* grads) {
    config.validate();
    if (scenes.empty()) throw std::invalid_argument("total_loss: empty batch");
    const ModelConfig& mc = model.config();
    const ParamStore& store = model.params();
    const bool scene_mode = mc.latent_mode == LatentMode::scene;

    std::vector<const SemanticMap*> map_keys;
    std::vector<MapFeature> map_features;
    std::vector<SceneWork> work(scenes.size());
    std::size_t total_agents = 0;
    Real variety_sum = 0;

    for (std::size_t s = 0; s < scenes.size(); ++s) {
        const SceneBatch& scene = *scenes[s];
        SceneWork& w = work[s];
        w.scene = &scene;
        const std::size_t n = scene.agent_count();
        if (scene.future.size() != n) throw ShapeError("total_loss: scene '" + scene.id + "' lacks ground truth");
        for (const Track& f : scene.future) {
            if (f.size() != mc.pred_len) {
                throw ShapeError("total_loss: scene '" + scene.id + "' future length " + std::to_string(f.size()) +
                                 " differs from pred_len " + std::to_string(mc.pred_len));
            }
        }
        w.trace = model.observe_traced(scene);
        w.last_pos = last_positions(scene);
        w.last_disp = last_displacements(scene);

        if (scene_mode) {
            if (!scene.map) throw std::invalid_argument("total_loss: scene '" + scene.id + "' has no semantic map");
            const auto it = std::find(map_keys.begin(), map_keys.end(), scene.map.get());
            w.map_slot = static_cast<std::size_t>(it - map_keys.begin());
            if (it == map_keys.end()) {
                map_keys.push_back(scene.map.get());
                map_features.push_back(encode_map(store, model.scene_encoder(), *scene.map));
            }
            w.latent = latent_head(store, model.scene_encoder(), map_features[w.map_slot].pooled,
                                   summed_motion(w.trace.displacements, mc.obs_len));
        }

        std::vector<Real> best(n, std::numeric_limits<Real>::infinity());
        w.best_sample.assign(n, 0);
        w.best_trace.resize(n);
        for (std::size_t k = 0; k < config.m; ++k) {
            Vec z(mc.latent);
            if (scene_mode) {
                Vec eps(mc.latent);
                for (std::size_t d = 0; d < mc.latent; ++d) {
                    eps[d] = static_cast<Real>(rng.normal());
                    z[d] = w.latent.mu[d] + w.latent.sigma[d] * eps[d];
                }
                w.eps.push_back(std::move(eps));
            } else if (mc.latent_mode == LatentMode::gaussian) {
                for (std::size_t d = 0; d < mc.latent; ++d) z[d] = static_cast<Real>(rng.normal());
            }
            for (std::size_t i = 0; i < n; ++i) {
                DecoderTrace dt = model.decode_agent(w.trace.state.last_hidden[i], z, mc.pred_len, w.last_pos[i],
                                                     w.last_disp[i]);
                const Real d = track_distance(scene.future[i], dt.positions, config.distance);
                if (d < best[i]) {
                    best[i] = d;
                    w.best_sample[i] = k;
                    w.best_trace[i] = std::move(dt);
                }
            }
        }
        for (Real b : best) variety_sum += b;
        total_agents += n;
    }

    std::vector<std::vector<Vec>> features;
    features.reserve(total_agents);
    for (const SceneWork& w : work) {
        for (const auto& f : w.trace.icm_hidden) features.push_back(f);
    }
    const std::size_t pairs = config.pairs_per_batch ? config.pairs_per_batch : scenes.size();
    const CoherenceResult coherence = coherence_loss(features, mc.queue, pairs, config.margin, rng);

    LossBreakdown out;
    out.agents = total_agents;
    out.variety = variety_sum / static_cast<Real>(total_agents);
    out.coherence = coherence.value;
    out.coherence_valid = coherence.valid;
    out.total = config.lambda * out.coherence + out.variety;
    if (!grads) return out;

    std::vector<std::vector<Vec>> d_features;
    if (config.lambda > 0 && coherence.valid) {
        d_features = coherence_backward(features, mc.queue, config.margin, coherence);
        for (auto& agent : d_features) {
            for (Vec& v : agent) v *= config.lambda;
        }
    }

    std::vector<Vec> d_pooled(map_features.size(), Vec(mc.scene.feature_width));
    const Real agent_scale = Real(1) / static_cast<Real>(total_agents);
    std::size_t agent_offset = 0;
    for (SceneWork& w : work) {
        const SceneBatch& scene = *w.scene;
        const std::size_t n = scene.agent_count();
        std::vector<Vec> d_last(n);
        std::vector<Vec> d_z(scene_mode ? config.m : 0, Vec(mc.latent));
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<Point> d_pos =
                track_distance_grad(scene.future[i], w.best_trace[i].positions, config.distance);
            for (Point& p : d_pos) p = agent_scale * p;
            auto [dh, dz] = model.decode_agent_backward(w.best_trace[i], d_pos, *grads);
            d_last[i] = std::move(dh);
            if (scene_mode) d_z[w.best_sample[i]] += dz;
        }
        if (scene_mode) {
            Vec d_mu(mc.latent), d_sigma(mc.latent);
            for (std::size_t k = 0; k < config.m; ++k) {
                d_mu += d_z[k];
                for (std::size_t d = 0; d < mc.latent; ++d) d_sigma[d] += d_z[k][d] * w.eps[k][d];
            }
            d_pooled[w.map_slot] +=
                latent_head_backward(store, model.scene_encoder(), w.latent.cache, d_mu, d_sigma, *grads);
        }
        std::vector<std::vector<Vec>> d_icm;
        if (!d_features.empty()) {
            d_icm.assign(d_features.begin() + static_cast<std::ptrdiff_t>(agent_offset),
                         d_features.begin() + static_cast<std::ptrdiff_t>(agent_offset + n));
        }
        model.observe_backward(w.trace, d_last, d_icm, *grads);
        agent_offset += n;
    }
    for (std::size_t slot = 0; slot < map_features.size(); ++slot) {
        encode_map_backward(store, model.scene_encoder(), map_features[slot].cache, d_pooled[slot], *grads);
    }
    return out;
}

LossBreakdown total_loss(const Model& model, const SceneBatch& scene, const LossConfig& config, Rng& rng,
                         Gradients* grads) {
    const SceneBatch* batch[] = {&scene};
    return total_loss(model, batch, config, rng, grads);
}

namespace {

void check_aligned(std::span<const Track> gt, std::span<const Track> pred, const char* what) {
    if (gt.empty()) throw std::invalid_argument(std::string(what) + ": no agents");
    if (gt.size() != pred.size()) throw ShapeError(std::string(what) + ": agent count mismatch");
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (gt[i].empty()) throw std::invalid_argument(std::string(what) + ": empty trajectory");
        if (gt[i].size() != pred[i].size()) throw ShapeError(std::string(what) + ": frame count mismatch");
    }
}

Real agent_tcc(std::span<const Point> gt, std::span<const Point> pred) {
    std::vector<Real> gx, gy, px, py;
    for (std::size_t t = 0; t < gt.size(); ++t) {
        gx.push_back(gt[t].x);
        gy.push_back(gt[t].y);
        px.push_back(pred[t].x);
        py.push_back(pred[t].y);
    }
    return (pearson(px, gx) + pearson(py, gy)) / 2;
}

Real mean_error(std::span<const Point> gt, std::span<const Point> pred) {
    Real sum = 0;
    for (std::size_t t = 0; t < gt.size(); ++t) sum += distance(pred[t], gt[t]);
    return sum / static_cast<Real>(gt.size());
}

}  // namespace

AdeFde ade_fde(std::span<const Track> gt, std::span<const Track> pred) {
    check_aligned(gt, pred, "ade_fde");
    Real ade = 0, fde = 0;
    std::size_t frames = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        for (std::size_t t = 0; t < gt[i].size(); ++t) ade += distance(pred[i][t], gt[i][t]);
        frames += gt[i].size();
        fde += distance(pred[i].back(), gt[i].back());
    }
    return {ade / static_cast<Real>(frames), fde / static_cast<Real>(gt.size())};
}

Real pearson(std::span<const Real> a, std::span<const Real> b) {
    if (a.size() != b.size()) throw ShapeError("pearson: length mismatch");
    if (a.size() < 2) throw std::invalid_argument("pearson: need at least two values");
    const Real n = static_cast<Real>(a.size());
    Real ma = 0, mb = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        ma += a[k];
        mb += b[k];
    }
    ma /= n;
    mb /= n;
    Real cov = 0, va = 0, vb = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const Real da = a[k] - ma, db = b[k] - mb;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if (va / n < kTccVarianceGuard || vb / n < kTccVarianceGuard) return 0;
    return cov / std::sqrt(va * vb);
}

Real tcc(std::span<const Track> gt, std::span<const Track> pred) {
    check_aligned(gt, pred, "tcc");
    Real sum = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (gt[i].size() < 2) throw std::invalid_argument("tcc: prediction horizon must be at least 2 frames");
        sum += agent_tcc(gt[i], pred[i]);
    }
    return sum / static_cast<Real>(gt.size());
}

void MetricsAccumulator::add(std::span<const Point> gt, std::span<const Point> pred) {
    if (gt.empty()) throw std::invalid_argument("metrics: empty trajectory");
    if (gt.size() != pred.size()) throw ShapeError("metrics: frame count mismatch");
    if (agents_ == 0) {
        horizon_ = gt.size();
        error_sum_.assign(horizon_, 0);
    } else if (gt.size() != horizon_) {
        throw ShapeError("metrics: every agent must share one prediction horizon");
    }
    for (std::size_t t = 0; t < horizon_; ++t) error_sum_[t] += distance(pred[t], gt[t]);
    if (horizon_ >= 2) tcc_sum_ += agent_tcc(gt, pred);
    ++agents_;
}

MetricsReport MetricsAccumulator::report() const {
    MetricsReport r;
    r.agents = agents_;
    if (agents_ == 0) return r;
    const Real n = static_cast<Real>(agents_);
    Real running = 0;
    for (std::size_t t = 0; t < horizon_; ++t) {
        running += error_sum_[t];
        r.horizons.push_back({t + 1, running / (n * static_cast<Real>(t + 1)), error_sum_[t] / n});
    }
    r.ade = r.horizons.back().ade;
    r.fde = r.horizons.back().fde;
    r.tcc = tcc_sum_ / n;
    return r;
}

void add_best_of_m(MetricsAccumulator& acc, std::span<const Track> gt, const PredictionSet& preds, std::size_t m) {
    if (m == 0 || m > preds.samples.size()) {
        throw std::invalid_argument("best_of_m: m = " + std::to_string(m) + " but " +
                                    std::to_string(preds.samples.size()) + " samples available");
    }
    for (std::size_t k = 0; k < m; ++k) check_aligned(gt, preds.samples[k], "best_of_m");
    for (std::size_t i = 0; i < gt.size(); ++i) {
        std::size_t best = 0;
        Real best_ade = mean_error(gt[i], preds.samples[0][i]);
        for (std::size_t k = 1; k < m; ++k) {
            const Real a = mean_error(gt[i], preds.samples[k][i]);
            if (a < best_ade) {
                best_ade = a;
                best = k;
            }
        }
        acc.add(gt[i], preds.samples[best][i]);
    }
}

MetricsReport best_of_m_metrics(std::span<const Track> gt, const PredictionSet& preds, std::size_t m) {
    MetricsAccumulator acc;
    add_best_of_m(acc, gt, preds, m);
    return acc.report();
}

void write_metrics(std::ostream& out, const MetricsReport& report) {
    out << "agents all " << report.agents << '\n';
    out << "ade all " << format_real(report.ade) << '\n';
    out << "fde all " << format_real(report.fde) << '\n';
    out << "tcc all " << format_real(report.tcc) << '\n';
    for (const HorizonMetrics& h : report.horizons) {
        out << "ade " << h.frames << ' ' << format_real(h.ade) << '\n';
        out << "fde " << h.frames << ' ' << format_real(h.fde) << '\n';
    }
}

Real line_fit_residual(std::span<const Point> track) {
    if (track.size() < 3) return 0;
    const Real n = static_cast<Real>(track.size());
    Real mx = 0, my = 0;
    for (Point p : track) {
        mx += p.x;
        my += p.y;
    }
    mx /= n;
    my /= n;
    Real sxx = 0, syy = 0, sxy = 0;
    for (Point p : track) {
        const Real dx = p.x - mx, dy = p.y - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    sxx /= n;
    syy /= n;
    sxy /= n;
    // Smallest eigenvalue of the scatter matrix = mean squared perpendicular residual.
    const Real half_diff = (sxx - syy) / 2;
    const Real lambda_min = (sxx + syy) / 2 - std::sqrt(half_diff * half_diff + sxy * sxy);
    return std::sqrt(std::max(Real(0), lambda_min));
}

bool nonlinear_filter(std::span<const Point> track, Real threshold) {
    return line_fit_residual(track) > threshold;
}

}  // namespace dscmp
