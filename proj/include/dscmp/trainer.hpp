#ifndef DSCMP_TRAINER_HPP_
#define DSCMP_TRAINER_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dscmp/data.hpp"
#include "dscmp/model.hpp"
#include "dscmp/objectives.hpp"

namespace dscmp {

struct AdamConfig {
    Real learning_rate = Real(0.001);
    Real beta1 = Real(0.9);
    Real beta2 = Real(0.999);
    Real epsilon = Real(1e-8);
};

struct TrainConfig {
    ModelConfig model;
    bool queue_auto = false;  // pick q from the dataset name (see queue_for_subset)
    LossConfig loss;
    AdamConfig adam;
    std::size_t batch_size = 64;  // scenes per update
    std::size_t epochs = 200;
    std::size_t max_iterations = 0;  // 0: no limit
    std::size_t checkpoint_every = 1;  // epochs between checkpoint files
    std::uint64_t seed = 1;
    std::string held_out;  // subset left out of training; empty: train on everything
    std::size_t window_stride = 1;
    std::size_t eval_samples = 20;

    void validate() const;
};

/// Flat `key = value` text, '#' comments. Unknown or repeated keys are ParseErrors.
/// Keys absent from the text keep their defaults. See docs/formats.md for the key list.
TrainConfig parse_train_config(std::istream& in);
TrainConfig read_train_config(const std::filesystem::path& path);
/// Writes every key in a fixed order; parsing the text back reproduces the same text.
void write_train_config(std::ostream& out, const TrainConfig& config);
std::string train_config_text(const TrainConfig& config);
/// FNV-1a over train_config_text.
std::uint64_t config_hash(const TrainConfig& config);

/// Queue length used for a dataset subset: 4 for eth, 2 for zara*, 3 otherwise.
std::size_t queue_for_subset(std::string_view subset);
/// Resolves queue_auto against the manifest: the held-out subset when set, otherwise
/// the common choice of all subsets (3 when they disagree).
void resolve_queue(TrainConfig& config, std::span<const ManifestEntry> entries);

struct AdamState {
    std::uint64_t step = 0;
    std::vector<Mat> first, second;

    /// Zero moments shaped like `params`.
    static AdamState zeros(const ParamStore& params);
    friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// Bias-corrected Adam update of every parameter. All gradients are checked before any
/// value changes; a non-finite entry throws NumericError naming the parameter.
void adam_step(ParamStore& params, const Gradients& grads, AdamState& state, const AdamConfig& config);

struct Checkpoint {
    TrainConfig config;
    Model model;
    AdamState adam;
    std::size_t epoch = 0;  // completed epochs
    std::uint64_t iteration = 0;
};

/// Text checkpoint: config, config hash, progress counters, parameters and Adam moments.
/// Values round-trip exactly.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint);
/// Throws ParseError on malformed input or a config-hash mismatch.
Checkpoint read_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct LossRecord {
    std::uint64_t iteration = 0;
    std::size_t epoch = 0;
    Real weighted_coherence = 0;  // lambda * L_c
    Real variety = 0;
    Real total = 0;
};

void write_loss_curve_header(std::ostream& out);
void write_loss_record(std::ostream& out, const LossRecord& record);

struct TrainOptions {
    std::optional<std::filesystem::path> out_dir;  // checkpoints and loss_curve.tsv go here
    std::ostream* log = nullptr;                   // one line per epoch when set
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<LossRecord> curve;
};

/// Seeded initialisation, per-epoch seeded shuffles, batches of batch_size scenes,
/// total_loss with m samples, Adam. Stops after `epochs` epochs or max_iterations
/// updates, whichever comes first. Throws std::invalid_argument on an empty dataset and
/// NumericError when the loss turns non-finite.
TrainResult train(const TrainConfig& config, std::span<const SceneBatch> scenes, const TrainOptions& options = {});

struct EvalOptions {
    std::size_t samples = 20;
    std::uint64_t seed = 1;
    bool nonlinear_only = false;  // score only agents whose full track fails the line fit
    Real nonlinear_threshold = kNonlinearThreshold;
};

/// predict() with `samples` draws per scene, best-of-m metrics over every scene's agents.
/// Each scene draws from its own child stream of `seed`, so the first k samples of a
/// scene do not depend on `samples`.
MetricsReport evaluate(const Model& model, std::span<const SceneBatch> scenes, const EvalOptions& options);

}  // namespace dscmp

#endif  // DSCMP_TRAINER_HPP_
