#ifndef DSCMP_ICM_HPP_
#define DSCMP_ICM_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dscmp/numkit/param_store.hpp"
#include "dscmp/numkit/rng.hpp"
#include "dscmp/queue_state.hpp"

namespace dscmp {

/// Handles to the individual-context cell weights inside a ParamStore.
///
/// Gate naming follows the tree-structured cell: `input` gates the candidate
/// `update`, one shared `forget` weight set produces a forget gate per queue
/// child, `output` gates the emitted hidden state.
struct IcmParams {
    ParamId w_input, w_forget, w_output, w_update;  // hidden x input
    ParamId u_input, u_forget, u_output, u_update;  // hidden x hidden
    ParamId b_input, b_forget, b_output, b_update;  // hidden x 1
    std::size_t input_width = 2;
    std::size_t hidden_width = 0;

    static IcmParams declare(ParamStore& store, const std::string& prefix, std::size_t input_width,
                             std::size_t hidden_width);
};

/// Weights uniform in [-1/sqrt(h), 1/sqrt(h)], biases zero except the forget bias.
void init_icm(ParamStore& store, const IcmParams& params, Rng& rng, Real forget_bias = Real(1));

/// Everything icm_backward needs from a forward call.
struct IcmCache {
    const ParamStore* store = nullptr;
    std::uint64_t version = 0;
    Vec motion;
    std::vector<Vec> child_hidden;  // queue slots, oldest first
    std::vector<Vec> child_cell;
    Vec mean_hidden;
    Vec input_gate, output_gate, update;
    std::vector<Vec> forget_gates;  // one per queue slot
    Vec cell;
    Vec tanh_cell;
};

struct IcmStep {
    Vec hidden;
    Vec cell;
    IcmCache cache;
};

IcmStep icm_forward(const ParamStore& store, const IcmParams& params, std::span<const Real> motion,
                    const FeatureQueue& queue);

struct IcmInputGrads {
    Vec d_motion;
    std::vector<Vec> d_hidden;  // per queue slot, oldest first
    std::vector<Vec> d_cell;
};

/// Reverse pass of icm_forward. Parameter gradients are added into `grads`.
/// Throws std::logic_error when the cache does not come from the current values of `store`.
IcmInputGrads icm_backward(const ParamStore& store, const IcmParams& params, const IcmCache& cache,
                           std::span<const Real> d_hidden, std::span<const Real> d_cell, Gradients& grads);

}  // namespace dscmp

#endif  // DSCMP_ICM_HPP_
