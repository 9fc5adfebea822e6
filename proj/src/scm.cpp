#include "dscmp/scm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dscmp {

ScmParams ScmParams::declare(ParamStore& store, const std::string& prefix, std::size_t width) {
    if (width == 0) throw std::invalid_argument("ScmParams: zero width");
    ScmParams p;
    p.width = width;
    p.theta = store.add(prefix + ".W_theta", width, width);
    p.phi = store.add(prefix + ".W_phi", width, width);
    p.transform = store.add(prefix + ".W_G", width, width);
    return p;
}

void init_scm(ParamStore& store, const ScmParams& p, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(p.width));
    for (ParamId id : {p.theta, p.phi, p.transform}) {
        Mat& m = store.mutable_value(id);
        for (std::size_t i = 0; i < m.size(); ++i) m[i] = static_cast<Real>((2.0 * rng.uniform() - 1.0) * bound);
    }
}

NeighborSet all_neighbors(std::size_t n_agents) {
    NeighborSet out(n_agents);
    for (std::size_t i = 0; i < n_agents; ++i) {
        for (std::size_t j = 0; j < n_agents; ++j) out[i].push_back(j);
    }
    return out;
}

NeighborSet radius_neighbors(std::span<const std::array<Real, 2>> positions, Real radius) {
    NeighborSet out(positions.size());
    for (std::size_t i = 0; i < positions.size(); ++i) {
        for (std::size_t j = 0; j < positions.size(); ++j) {
            const Real dx = positions[i][0] - positions[j][0];
            const Real dy = positions[i][1] - positions[j][1];
            if (i == j || std::sqrt(dx * dx + dy * dy) <= radius) out[i].push_back(j);
        }
    }
    return out;
}

Real relation(const ParamStore& store, const ScmParams& p, std::span<const Real> h_i, std::span<const Real> h_j) {
    if (h_i.size() != p.width || h_j.size() != p.width) throw ShapeError("relation: feature width mismatch");
    return dot(matvec(store.value(p.theta), h_i), matvec(store.value(p.phi), h_j));
}

namespace {

void validate(const std::vector<FeatureQueue>& queues, const NeighborSet& neighbors, std::size_t width) {
    if (queues.empty()) throw std::invalid_argument("refine_hidden_queues: no queues");
    const std::size_t q = queues.front().length();
    for (const auto& queue : queues) {
        if (queue.length() != q || queue.width() != width) {
            throw ShapeError("refine_hidden_queues: inconsistent queue shapes");
        }
    }
    if (neighbors.size() != queues.size()) throw ShapeError("refine_hidden_queues: neighbour set size mismatch");
    for (std::size_t i = 0; i < neighbors.size(); ++i) {
        const auto& list = neighbors[i];
        if (std::find(list.begin(), list.end(), i) == list.end()) {
            throw std::invalid_argument("refine_hidden_queues: agent missing from its own neighbourhood");
        }
        std::vector<bool> seen(queues.size(), false);
        for (std::size_t j : list) {
            if (j >= queues.size()) throw std::out_of_range("refine_hidden_queues: neighbour index out of range");
            if (seen[j]) throw std::invalid_argument("refine_hidden_queues: duplicate neighbour");
            seen[j] = true;
        }
    }
}

}  // namespace

ScmResult refine_hidden_queues(const ParamStore& store, const ScmParams& p, const std::vector<FeatureQueue>& queues,
                               const NeighborSet& neighbors, const ScmOptions& options) {
    validate(queues, neighbors, p.width);
    const std::size_t n = queues.size();
    const std::size_t q = queues.front().length();

    ScmResult result{queues, {}};
    ScmCache& cache = result.cache;
    cache.store = &store;
    cache.version = store.version();
    cache.options = options;
    cache.neighbors = neighbors;
    cache.slots.resize(q);

    for (std::size_t s = 0; s < q; ++s) {
        ScmSlotCache& slot = cache.slots[s];
        slot.hidden.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            slot.hidden.push_back(queues[i].hidden(s));
            slot.theta_h.push_back(matvec(store.value(p.theta), slot.hidden[i]));
            slot.phi_h.push_back(matvec(store.value(p.phi), slot.hidden[i]));
            slot.transformed.push_back(matvec(store.value(p.transform), slot.hidden[i]));
        }
        slot.weights.resize(n);
        slot.normalizer.assign(n, Real(0));
        slot.skipped.assign(n, false);

        for (std::size_t i = 0; i < n; ++i) {
            const auto& list = neighbors[i];
            std::vector<Real>& w = slot.weights[i];
            w.resize(list.size());
            for (std::size_t k = 0; k < list.size(); ++k) w[k] = dot(slot.theta_h[i], slot.phi_h[list[k]]);

            if (options.norm == RelationNorm::signed_sum) {
                Real z = 0;
                for (Real r : w) z += r;
                slot.normalizer[i] = z;
                if (std::abs(z) < options.z_guard) {
                    slot.skipped[i] = true;
                    continue;
                }
                for (Real& r : w) r /= z;
            } else {
                const Real peak = *std::max_element(w.begin(), w.end());
                Real total = 0;
                for (Real& r : w) {
                    r = std::exp(r - peak);
                    total += r;
                }
                for (Real& r : w) r /= total;
            }

            Vec refined = slot.hidden[i];
            for (std::size_t k = 0; k < list.size(); ++k) axpy(w[k], slot.transformed[list[k]], refined.span());
            result.queues[i].set_hidden(s, std::move(refined));
        }
    }
    return result;
}

std::vector<std::vector<Vec>> scm_backward(const ParamStore& store, const ScmParams& p, const ScmCache& cache,
                                           const std::vector<std::vector<Vec>>& d_refined, Gradients& grads) {
    if (cache.store != &store || cache.version != store.version()) {
        throw std::logic_error("scm_backward: stale cache (parameters changed since the forward pass)");
    }
    const std::size_t n = cache.neighbors.size();
    const std::size_t q = cache.slots.size();
    if (d_refined.size() != n) throw ShapeError("scm_backward: gradient agent count mismatch");

    std::vector<std::vector<Vec>> d_hidden(n, std::vector<Vec>(q, Vec(p.width)));
    for (std::size_t s = 0; s < q; ++s) {
        const ScmSlotCache& slot = cache.slots[s];
        std::vector<Vec> d_theta(n, Vec(p.width)), d_phi(n, Vec(p.width)), d_transformed(n, Vec(p.width));

        for (std::size_t i = 0; i < n; ++i) {
            if (d_refined[i].size() != q) throw ShapeError("scm_backward: gradient slot count mismatch");
            const Vec& dy = d_refined[i][s];
            d_hidden[i][s] += dy;  // residual path
            if (slot.skipped[i]) continue;

            const auto& list = cache.neighbors[i];
            const auto& w = slot.weights[i];
            std::vector<Real> d_w(list.size());
            Real weighted = 0;
            for (std::size_t k = 0; k < list.size(); ++k) {
                d_w[k] = dot(dy, slot.transformed[list[k]]);
                weighted += d_w[k] * w[k];
                axpy(w[k], dy, d_transformed[list[k]].span());
            }
            for (std::size_t k = 0; k < list.size(); ++k) {
                Real d_r = 0;
                if (cache.options.norm == RelationNorm::signed_sum) {
                    d_r = (d_w[k] - weighted) / slot.normalizer[i];
                } else {
                    d_r = w[k] * (d_w[k] - weighted);
                }
                const std::size_t j = list[k];
                axpy(d_r, slot.phi_h[j], d_theta[i].span());
                axpy(d_r, slot.theta_h[i], d_phi[j].span());
            }
        }

        for (std::size_t i = 0; i < n; ++i) {
            const Vec& h = slot.hidden[i];
            add_outer(grads[p.theta], d_theta[i], h);
            add_outer(grads[p.phi], d_phi[i], h);
            add_outer(grads[p.transform], d_transformed[i], h);
            matvec_t_acc(store.value(p.theta), d_theta[i], d_hidden[i][s].span());
            matvec_t_acc(store.value(p.phi), d_phi[i], d_hidden[i][s].span());
            matvec_t_acc(store.value(p.transform), d_transformed[i], d_hidden[i][s].span());
        }
    }
    return d_hidden;
}

}  // namespace dscmp
