#ifndef DSCMP_DATA_HPP_
#define DSCMP_DATA_HPP_

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dscmp/geometry.hpp"
#include "dscmp/model.hpp"
#include "dscmp/numkit/rng.hpp"
#include "dscmp/semantic_map.hpp"

namespace dscmp {

/// One line of a trajectory file: `frame_id agent_id x y`.
struct TrajectoryRecord {
    long frame_id = 0;
    long agent_id = 0;
    Real x = 0;
    Real y = 0;

    friend bool operator==(const TrajectoryRecord&, const TrajectoryRecord&) = default;
};

/// Whitespace-delimited records, sorted by (frame_id, agent_id) on return. Blank lines
/// and lines starting with '#' are skipped. Integer-valued reals ("10.0") are accepted
/// for the id columns. Throws ParseError (with line number) on malformed lines and
/// duplicate (frame, agent) keys.
std::vector<TrajectoryRecord> parse_trajectories(std::istream& in);
std::vector<TrajectoryRecord> load_trajectories(const std::filesystem::path& path);
void write_trajectories(std::ostream& out, std::span<const TrajectoryRecord> records);
void write_trajectories(const std::filesystem::path& path, std::span<const TrajectoryRecord> records);

struct WindowConfig {
    std::size_t obs_len = 8;
    std::size_t pred_len = 12;
    std::size_t stride = 1;  // window starts advance by this many distinct frame ids
    long frame_step = 1;     // raw frame-id gap between consecutive 0.4 s samples
};

/// Sliding windows of obs_len + pred_len samples spaced frame_step apart. A window keeps
/// exactly the agents recorded at every one of its frames; windows with no such agent
/// are dropped. `records` must be sorted.
std::vector<SceneBatch> extract_windows(std::span<const TrajectoryRecord> records, const WindowConfig& config,
                                        std::shared_ptr<const SemanticMap> map = nullptr,
                                        std::string_view source = "scene");

/// Observation-only scene from the last obs_len samples of a recording (frame ids
/// max, max - step, ...). Agents present at all of them are kept; `future` is left empty.
/// Throws std::invalid_argument when no agent qualifies.
SceneBatch observation_scene(std::span<const TrajectoryRecord> records, std::size_t obs_len, long frame_step,
                             std::shared_ptr<const SemanticMap> map, std::string id = "scene");

/// displacement[t] = position[t] - position[t-1], displacement[0] = (0, 0).
Track to_relative(std::span<const Point> positions);
/// start + running sum of displacements; inverse of to_relative when start = positions[0].
Track cumulative_positions(Point start, std::span<const Point> displacements);

enum class SynthKind { parallel, face_to_face, turning, crossroad };

SynthKind parse_synth_kind(std::string_view name);
std::string_view to_string(SynthKind kind);
/// Fewest agents a kind can be generated with.
std::size_t min_agents(SynthKind kind);

struct SynthOptions {
    Real noise_sigma = 0;
    std::size_t obs_len = 8;
    std::size_t pred_len = 12;
    std::size_t map_size = 256;  // cells per side
    Real cell_size = Real(0.1);  // metres per cell; the map is centred on the origin
    Real min_speed = Real(0.4);  // metres per frame
    Real max_speed = Real(0.6);
};

/// Procedural scene with ground truth over obs_len + pred_len frames and a matching
/// class-label map (channels: walkway, obstacle, terrain).
///   parallel     - side-by-side walkers, same heading and speed (corridor map)
///   face_to_face - pairs walking toward each other, sidestepping as they pass (corridor map)
///   turning      - straight walk then a right-angle turn; all agents in a scene turn the
///                  same way, shown by an L-shaped corner map
///   crossroad    - each agent enters from an arm of a cross and goes straight or turns
/// Throws std::invalid_argument when n_agents < min_agents(kind).
SceneBatch synth_scene(SynthKind kind, std::size_t n_agents, Rng& rng, const SynthOptions& options = {});

/// Layouts used by synth_scene.
enum class MapLayout { corridor, corner_left, corner_right, crossroad };
std::shared_ptr<const SemanticMap> layout_map(MapLayout layout, const SynthOptions& options = {});

/// One dataset line: `<subset> <trajectory-file> <map-file|-> <frame_step> [coord_scale]`.
struct ManifestEntry {
    std::string subset;
    std::filesystem::path trajectories;
    std::optional<std::filesystem::path> map;
    long frame_step = 1;
    Real coord_scale = 1;
};

/// Relative paths are resolved against the manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries);

struct DatasetOptions {
    WindowConfig window;
    std::size_t map_channels = 3;  // used for the all-zero map of entries without one
    std::size_t map_size = 256;
};

/// Loads every entry, applies coord_scale and extracts windows.
std::vector<SceneBatch> load_dataset(std::span<const ManifestEntry> entries, const DatasetOptions& options);

struct Split {
    std::vector<ManifestEntry> train;
    std::vector<ManifestEntry> test;
};

/// Train on every subset except `held_out`, test on `held_out`. Throws when the subset is unknown.
Split leave_one_out(std::span<const ManifestEntry> entries, std::string_view held_out);

/// Scene indices of fold `fold` out of k (contiguous blocks), and the rest.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> k_fold(std::size_t count, std::size_t k,
                                                                    std::size_t fold);

}  // namespace dscmp

#endif  // DSCMP_DATA_HPP_
