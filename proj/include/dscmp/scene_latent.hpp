#ifndef DSCMP_SCENE_LATENT_HPP_
#define DSCMP_SCENE_LATENT_HPP_

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dscmp/geometry.hpp"
#include "dscmp/numkit/param_store.hpp"
#include "dscmp/numkit/rng.hpp"
#include "dscmp/semantic_map.hpp"

namespace dscmp {

/// How the raw sigma output is made positive.
enum class SigmaTransform {
    sigmoid,   // sigma = sigmoid(raw), in (0, 1)
    softplus,  // sigma = log(1 + exp(raw))
};

/// Three convolutions (tanh after the first two) over the map, global average
/// pooling, plus a linear embedding of the agent-summed observed displacements;
/// the two are added and a fully connected layer yields [mu, sigma].
struct SceneEncoderConfig {
    std::size_t map_channels = 3;
    std::array<std::size_t, 3> conv_channels{8, 16, 16};
    std::array<std::size_t, 3> kernels{10, 10, 1};
    std::array<std::size_t, 3> strides{6, 4, 1};
    std::size_t feature_width = 16;  // motion embedding width; must equal conv_channels[2]
    std::size_t obs_len = 8;
    std::size_t latent = 16;
    SigmaTransform sigma = SigmaTransform::sigmoid;
    Real sigma_bias = 0;  // initial bias of the raw sigma outputs
};

struct SceneEncoderParams {
    std::array<ParamId, 3> conv_w, conv_b;
    ParamId motion_w, motion_b, fc_w, fc_b;
    SceneEncoderConfig config;

    /// Throws ShapeError when the map feature and motion embedding widths differ.
    static SceneEncoderParams declare(ParamStore& store, const std::string& prefix, const SceneEncoderConfig& config);
};

void init_scene_encoder(ParamStore& store, const SceneEncoderParams& params, Rng& rng);

/// Channel-major activation volume.
struct Volume {
    std::size_t channels = 0, height = 0, width = 0;
    std::vector<Real> values;

    Real& at(std::size_t c, std::size_t y, std::size_t x) { return values[(c * height + y) * width + x]; }
    Real at(std::size_t c, std::size_t y, std::size_t x) const { return values[(c * height + y) * width + x]; }
};

struct MapFeatureCache {
    const ParamStore* store = nullptr;
    std::uint64_t version = 0;
    std::array<Volume, 3> inputs;   // input of each conv layer
    std::array<Volume, 3> outputs;  // post-activation output of each conv layer
};

struct MapFeature {
    Vec pooled;
    MapFeatureCache cache;
};

/// Conv stack + global average pooling. Throws ShapeError if the map's channel
/// count differs from the config or a layer's kernel does not fit its input.
MapFeature encode_map(const ParamStore& store, const SceneEncoderParams& params, const SemanticMap& map);
void encode_map_backward(const ParamStore& store, const SceneEncoderParams& params, const MapFeatureCache& cache,
                         std::span<const Real> d_pooled, Gradients& grads);

/// Σ_i of the observed displacement sequences, flattened as (dx_1, dy_1, dx_2, ...).
Vec summed_motion(std::span<const Track> observed_displacements, std::size_t obs_len);

struct LatentCache {
    const ParamStore* store = nullptr;
    std::uint64_t version = 0;
    Vec motion, fused, raw;
};

struct LatentOutput {
    Vec mu;
    Vec sigma;
    LatentCache cache;
};

/// FC head over pooled map feature ⊕ motion embedding.
LatentOutput latent_head(const ParamStore& store, const SceneEncoderParams& params, std::span<const Real> pooled,
                         std::span<const Real> motion);
/// Returns the gradient w.r.t. the pooled map feature.
Vec latent_head_backward(const ParamStore& store, const SceneEncoderParams& params, const LatentCache& cache,
                         std::span<const Real> d_mu, std::span<const Real> d_sigma, Gradients& grads);

/// encode_map followed by latent_head. Deterministic.
LatentOutput encode_scene(const ParamStore& store, const SceneEncoderParams& params, const SemanticMap& map,
                          std::span<const Track> observed_displacements);

/// z = mu + sigma ⊙ eps.
Vec sample_latent(std::span<const Real> mu, std::span<const Real> sigma, Rng& rng);

}  // namespace dscmp

#endif  // DSCMP_SCENE_LATENT_HPP_
