#ifndef DSCMP_OBJECTIVES_HPP_
#define DSCMP_OBJECTIVES_HPP_

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dscmp/geometry.hpp"
#include "dscmp/model.hpp"
#include "dscmp/numkit/param_store.hpp"
#include "dscmp/numkit/rng.hpp"

namespace dscmp {

/// Distance between a predicted and a ground-truth track in the variety loss.
enum class VarietyDistance {
    concatenated,    // L2 norm of the whole stacked error vector
    per_frame_mean,  // mean over frames of the per-frame L2 distance
};

struct LossConfig {
    Real lambda = Real(0.1);
    Real margin = Real(0.5);
    std::size_t m = 20;
    std::size_t pairs_per_batch = 0;  // 0: one pair per scene in the batch
    VarietyDistance distance = VarietyDistance::concatenated;

    /// Throws std::invalid_argument when lambda < 0, margin is outside [0, 1] or m == 0.
    void validate() const;
};

// ---- coherence -------------------------------------------------------------

struct FeaturePair {
    std::size_t agent = 0;
    std::size_t t1 = 0, t2 = 0;
};

/// Contribution of one pair: 1 - cos(a, b) when the frames are closer than q,
/// otherwise max(0, cos(a, b) - margin).
Real coherence_term(std::span<const Real> a, std::span<const Real> b, bool within_queue, Real margin);
/// Adds scale * d(term)/da and d(term)/db into da and db.
void coherence_term_backward(std::span<const Real> a, std::span<const Real> b, bool within_queue, Real margin,
                             Real scale, std::span<Real> da, std::span<Real> db);

struct CoherenceResult {
    Real value = 0;
    bool valid = false;  // false when no agent had two frames to pair; value is then 0
    std::vector<FeaturePair> pairs;
};

/// features[agent][frame]. Draws `pairs` pairs: a uniform agent among those with at
/// least two frames, then two distinct uniform frames of that agent. Returns the mean
/// contribution.
CoherenceResult coherence_loss(const std::vector<std::vector<Vec>>& features, std::size_t q, std::size_t pairs,
                               Real margin, Rng& rng);
/// Gradient of the mean contribution, shaped like `features`.
std::vector<std::vector<Vec>> coherence_backward(const std::vector<std::vector<Vec>>& features, std::size_t q,
                                                 Real margin, const CoherenceResult& result);

// ---- variety ---------------------------------------------------------------

Real track_distance(std::span<const Point> gt, std::span<const Point> pred, VarietyDistance mode);
/// d(track_distance)/d(pred), zero where the distance is not differentiable.
std::vector<Point> track_distance_grad(std::span<const Point> gt, std::span<const Point> pred, VarietyDistance mode);

/// Mean over agents of the minimum over samples of track_distance. Throws ShapeError on
/// misaligned samples.
Real variety_loss(std::span<const Track> gt, const PredictionSet& preds,
                  VarietyDistance mode = VarietyDistance::concatenated);

// ---- training objective ----------------------------------------------------

struct LossBreakdown {
    Real coherence = 0;  // L_c before weighting
    Real variety = 0;
    Real total = 0;  // lambda * coherence + variety
    bool coherence_valid = false;
    std::size_t agents = 0;
};

/// lambda * L_c + variety over a batch of scenes, each with m latent draws. When `grads`
/// is non-null the gradient of `total` is added into it. Random draws happen in a fixed
/// order (latents scene by scene, then coherence pairs), so the value depends only on
/// (params, scenes, config, rng state).
LossBreakdown total_loss(const Model& model, std::span<const SceneBatch* const> scenes, const LossConfig& config,
                         Rng& rng, Gradients* grads = nullptr);
LossBreakdown total_loss(const Model& model, const SceneBatch& scene, const LossConfig& config, Rng& rng,
                         Gradients* grads = nullptr);

// ---- metrics ---------------------------------------------------------------

struct AdeFde {
    Real ade = 0;
    Real fde = 0;
};

/// ADE: mean over agents and frames of per-frame L2 error; FDE: mean over agents of the
/// final-frame error. Throws std::invalid_argument on empty input, ShapeError on
/// mismatched lengths.
AdeFde ade_fde(std::span<const Track> gt, std::span<const Track> pred);

/// Variance below which an axis is treated as constant.
inline constexpr Real kTccVarianceGuard = Real(1e-12);

/// Pearson correlation of two equal-length series, 0 when either variance is below the guard.
Real pearson(std::span<const Real> a, std::span<const Real> b);
/// Mean over agents and both axes of the per-axis Pearson correlation between predicted
/// and true coordinates. Throws std::invalid_argument when the horizon is below 2 frames.
Real tcc(std::span<const Track> gt, std::span<const Track> pred);

struct HorizonMetrics {
    std::size_t frames = 0;
    Real ade = 0;
    Real fde = 0;

    friend bool operator==(const HorizonMetrics&, const HorizonMetrics&) = default;
};

struct MetricsReport {
    Real ade = 0;
    Real fde = 0;
    Real tcc = 0;
    std::size_t agents = 0;
    std::vector<HorizonMetrics> horizons;  // ADE/FDE over the first k frames, k = 1..horizon

    friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// Running aggregate over agents (equal-length horizons).
class MetricsAccumulator {
public:
    void add(std::span<const Point> gt, std::span<const Point> pred);
    MetricsReport report() const;
    std::size_t agents() const noexcept { return agents_; }

private:
    std::size_t agents_ = 0;
    std::size_t horizon_ = 0;
    Real tcc_sum_ = 0;
    std::vector<Real> error_sum_;  // per frame, summed over agents
};

/// Uses the first m samples. Per agent, the sample with the smallest ADE is scored.
MetricsReport best_of_m_metrics(std::span<const Track> gt, const PredictionSet& preds, std::size_t m);
/// Same selection, accumulated into an existing aggregate.
void add_best_of_m(MetricsAccumulator& acc, std::span<const Track> gt, const PredictionSet& preds, std::size_t m);

/// One `metric horizon value` line per entry; horizon "all" is the full prediction length.
void write_metrics(std::ostream& out, const MetricsReport& report);

inline constexpr Real kNonlinearThreshold = Real(0.1);

/// Root-mean-square perpendicular distance of the points to their total-least-squares line.
Real line_fit_residual(std::span<const Point> track);
/// True when line_fit_residual exceeds the threshold.
bool nonlinear_filter(std::span<const Point> track, Real threshold = kNonlinearThreshold);

}  // namespace dscmp

#endif  // DSCMP_OBJECTIVES_HPP_
