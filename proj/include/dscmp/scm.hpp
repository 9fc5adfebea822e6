#ifndef DSCMP_SCM_HPP_
#define DSCMP_SCM_HPP_

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dscmp/numkit/param_store.hpp"
#include "dscmp/numkit/rng.hpp"
#include "dscmp/queue_state.hpp"

namespace dscmp {

/// Relation projections (theta, phi) and neighbour transform G, all h x h.
struct ScmParams {
    ParamId theta, phi, transform;
    std::size_t width = 0;

    static ScmParams declare(ParamStore& store, const std::string& prefix, std::size_t width);
};

void init_scm(ParamStore& store, const ScmParams& params, Rng& rng);

/// How relation scores become neighbour weights.
enum class RelationNorm {
    signed_sum,  // w_ij = R_ij / Σ_j R_ij, skipped when |Σ_j R_ij| < guard
    softmax,     // w_ij = softmax_j(R_ij)
};

struct ScmOptions {
    RelationNorm norm = RelationNorm::signed_sum;
    Real z_guard = Real(1e-8);
};

/// N(i) for every agent i. Each list must contain i itself.
using NeighborSet = std::vector<std::vector<std::size_t>>;

NeighborSet all_neighbors(std::size_t n_agents);
/// Agents within `radius` (Euclidean) of agent i, i included. positions are (x, y) per agent.
NeighborSet radius_neighbors(std::span<const std::array<Real, 2>> positions, Real radius);

/// (W_theta h_i)^T (W_phi h_j)
Real relation(const ParamStore& store, const ScmParams& params, std::span<const Real> h_i,
              std::span<const Real> h_j);

struct ScmSlotCache {
    std::vector<Vec> hidden;     // pre-refinement h for every agent at this slot
    std::vector<Vec> theta_h, phi_h, transformed;
    std::vector<std::vector<Real>> weights;  // per agent, aligned with NeighborSet order
    std::vector<Real> normalizer;            // Σ_j R_ij (signed mode)
    std::vector<bool> skipped;
};

struct ScmCache {
    const ParamStore* store = nullptr;
    std::uint64_t version = 0;
    ScmOptions options;
    NeighborSet neighbors;
    std::vector<ScmSlotCache> slots;
};

struct ScmResult {
    std::vector<FeatureQueue> queues;
    ScmCache cache;
};

/// h_{t-l}^i <- h_{t-l}^i + Σ_{j∈N(i)} w_ij · W_G h_{t-l}^j at every slot, reading only
/// pre-refinement values. Cell queues are copied through untouched.
ScmResult refine_hidden_queues(const ParamStore& store, const ScmParams& params,
                               const std::vector<FeatureQueue>& queues, const NeighborSet& neighbors,
                               const ScmOptions& options = {});

/// d_refined[i][slot] is the gradient w.r.t. the refined hidden entry; returns the gradient
/// w.r.t. the pre-refinement entries in the same layout. Parameter gradients go into `grads`.
std::vector<std::vector<Vec>> scm_backward(const ParamStore& store, const ScmParams& params, const ScmCache& cache,
                                           const std::vector<std::vector<Vec>>& d_refined, Gradients& grads);

}  // namespace dscmp

#endif  // DSCMP_SCM_HPP_
