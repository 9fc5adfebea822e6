#ifndef DSCMP_MODEL_HPP_
#define DSCMP_MODEL_HPP_

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dscmp/geometry.hpp"
#include "dscmp/icm.hpp"
#include "dscmp/numkit/param_store.hpp"
#include "dscmp/numkit/rng.hpp"
#include "dscmp/queue_state.hpp"
#include "dscmp/scene_latent.hpp"
#include "dscmp/scm.hpp"
#include "dscmp/semantic_map.hpp"

namespace dscmp {

/// All agents co-present in one observation (+ prediction) window.
struct SceneBatch {
    std::string id;
    std::vector<long> agent_ids;
    std::vector<Track> observed;  // absolute positions, obs_len frames per agent
    std::vector<Track> future;    // absolute ground truth, pred_len frames per agent; empty when unknown
    std::shared_ptr<const SemanticMap> map;
    Real frame_interval = Real(0.4);

    std::size_t agent_count() const noexcept { return observed.size(); }
};

/// Where the decoder's latent variable comes from.
enum class LatentMode {
    scene,     // z ~ N(mu, sigma) from the scene encoder
    gaussian,  // z ~ N(0, I)
    none,      // z = 0
};

struct ModelConfig {
    std::size_t hidden = 32;
    std::size_t latent = 16;
    std::size_t decoder_hidden = 32;
    std::size_t queue = 3;
    std::size_t obs_len = 8;
    std::size_t pred_len = 12;
    bool use_scm = true;
    LatentMode latent_mode = LatentMode::scene;
    ScmOptions scm;
    Real neighbor_radius = 0;  // <= 0: every agent in the window is a neighbour
    Real forget_bias = 1;
    SceneEncoderConfig scene;  // obs_len and latent are overwritten from the fields above
};

/// Decoder weights: fusion of [h_obs; z] to the initial decoder state, a vanilla LSTM
/// cell (stored with the same gate layout as the individual-context cell) and a
/// displacement read-out.
struct DecoderParams {
    ParamId fuse_w, fuse_b;
    IcmParams cell;
    ParamId out_w, out_b;
    std::size_t encoder_width = 0, latent_width = 0, hidden_width = 0;

    static DecoderParams declare(ParamStore& store, const std::string& prefix, std::size_t encoder_width,
                                 std::size_t latent_width, std::size_t hidden_width);
};

struct EncoderState {
    std::vector<FeatureQueue> queues;
    std::vector<Vec> last_hidden;  // newest hidden entry per agent after the final refinement
};

struct ObservationTrace {
    std::vector<Track> displacements;             // [agent][frame]
    std::vector<std::vector<IcmCache>> icm;       // [frame][agent]
    std::vector<std::vector<Vec>> icm_hidden;     // [agent][frame], cell outputs before refinement
    std::vector<std::vector<Vec>> icm_cell;       // [agent][frame]
    std::vector<ScmCache> scm;                    // [frame]; empty when refinement is disabled
    EncoderState state;
};

struct DecoderTrace {
    Vec fused_input;  // [h_obs; z]
    Vec initial_hidden;
    std::vector<IcmCache> steps;
    std::vector<Vec> hidden;  // decoder hidden after each step
    Track displacements;
    Track positions;
};

/// m sampled futures per agent and the latent draw behind each.
struct PredictionSet {
    std::vector<std::vector<Track>> samples;  // [sample][agent], absolute positions
    std::vector<Vec> latents;                 // [sample]
};

class Model {
public:
    explicit Model(ModelConfig config);

    void initialize(Rng& rng);

    const ModelConfig& config() const noexcept { return config_; }
    ParamStore& params() noexcept { return params_; }
    const ParamStore& params() const noexcept { return params_; }
    const IcmParams& icm() const noexcept { return icm_; }
    const ScmParams& scm() const noexcept { return scm_; }
    const SceneEncoderParams& scene_encoder() const noexcept { return scene_; }
    const DecoderParams& decoder() const noexcept { return decoder_; }

    /// Encodes the observation window frame by frame: cell step per agent, queue
    /// push/pop, then social refinement across agents.
    ObservationTrace observe_traced(const SceneBatch& scene) const;
    EncoderState observe(const SceneBatch& scene) const { return observe_traced(scene).state; }

    /// d_last_hidden[agent] and d_icm_hidden[agent][frame] are upstream gradients;
    /// parameter gradients are added into `grads`.
    void observe_backward(const ObservationTrace& trace, const std::vector<Vec>& d_last_hidden,
                          const std::vector<std::vector<Vec>>& d_icm_hidden, Gradients& grads) const;

    DecoderTrace decode_agent(std::span<const Real> last_hidden, std::span<const Real> z, std::size_t steps,
                              Point last_position, Point last_displacement) const;
    /// Returns (d_last_hidden, d_z) given d_positions per step.
    std::pair<Vec, Vec> decode_agent_backward(const DecoderTrace& trace, std::span<const Point> d_positions,
                                              Gradients& grads) const;

    /// One predicted track per agent. Deterministic given (state, z).
    std::vector<Track> decode(const EncoderState& state, std::span<const Real> z, std::size_t steps,
                              std::span<const Point> last_positions, std::span<const Point> last_displacements) const;

    /// Scene-level latent distribution (scene mode only).
    LatentOutput scene_latent(const SceneBatch& scene, const ObservationTrace& trace) const;

    /// Encodes once, draws m latents, decodes m futures per agent.
    PredictionSet predict(const SceneBatch& scene, std::size_t m, Rng& rng) const;

private:
    ModelConfig config_;
    ParamStore params_;
    IcmParams icm_;
    ScmParams scm_;
    SceneEncoderParams scene_;
    DecoderParams decoder_;
};

/// Absolute position of the last observed frame and the displacement into it, per agent.
std::vector<Point> last_positions(const SceneBatch& scene);
std::vector<Point> last_displacements(const SceneBatch& scene);

}  // namespace dscmp

#endif  // DSCMP_MODEL_HPP_
