#include "dscmp/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "dscmp/numkit/param_store.hpp"

namespace dscmp {

namespace {

long parse_id(const std::string& token, std::size_t line) {
    const Real value = parse_real(token, line);
    if (!std::isfinite(value) || value != std::floor(value)) {
        throw ParseError("id '" + token + "' is not an integer", line);
    }
    return static_cast<long>(value);
}

}  // namespace

std::vector<TrajectoryRecord> parse_trajectories(std::istream& in) {
    std::vector<TrajectoryRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream ss(line);
        std::string cols[4];
        for (auto& col : cols) {
            if (!(ss >> col)) throw ParseError("expected 4 columns 'frame_id agent_id x y'", line_no);
        }
        std::string extra;
        if (ss >> extra) throw ParseError("expected 4 columns, found more", line_no);
        TrajectoryRecord r;
        r.frame_id = parse_id(cols[0], line_no);
        r.agent_id = parse_id(cols[1], line_no);
        r.x = parse_real(cols[2], line_no);
        r.y = parse_real(cols[3], line_no);
        if (!std::isfinite(r.x) || !std::isfinite(r.y)) throw ParseError("non-finite coordinate", line_no);
        records.push_back(r);
    }
    std::stable_sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
        return std::tie(a.frame_id, a.agent_id) < std::tie(b.frame_id, b.agent_id);
    });
    for (std::size_t k = 1; k < records.size(); ++k) {
        if (records[k].frame_id == records[k - 1].frame_id && records[k].agent_id == records[k - 1].agent_id) {
            throw ParseError("duplicate record for frame " + std::to_string(records[k].frame_id) + ", agent " +
                                 std::to_string(records[k].agent_id),
                             0);
        }
    }
    return records;
}

std::vector<TrajectoryRecord> load_trajectories(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open trajectory file '" + path.string() + "'");
    try {
        return parse_trajectories(in);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what(), e.line());
    }
}

void write_trajectories(std::ostream& out, std::span<const TrajectoryRecord> records) {
    for (const auto& r : records) {
        out << r.frame_id << '\t' << r.agent_id << '\t' << format_real(r.x) << '\t' << format_real(r.y) << '\n';
    }
}

void write_trajectories(const std::filesystem::path& path, std::span<const TrajectoryRecord> records) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write trajectory file '" + path.string() + "'");
    write_trajectories(out, records);
}

std::vector<SceneBatch> extract_windows(std::span<const TrajectoryRecord> records, const WindowConfig& config,
                                        std::shared_ptr<const SemanticMap> map, std::string_view source) {
    if (config.obs_len < 2 || config.pred_len < 1 || config.stride < 1 || config.frame_step < 1) {
        throw std::invalid_argument("extract_windows: invalid window configuration");
    }
    const std::size_t length = config.obs_len + config.pred_len;

    // frame -> (agent -> position), ordered.
    std::map<long, std::map<long, Point>> by_frame;
    for (const auto& r : records) by_frame[r.frame_id][r.agent_id] = Point{r.x, r.y};

    std::vector<long> frames;
    for (const auto& [frame, _] : by_frame) frames.push_back(frame);

    std::vector<SceneBatch> windows;
    for (std::size_t start = 0; start < frames.size(); start += config.stride) {
        const long first = frames[start];
        std::vector<const std::map<long, Point>*> slices;
        for (std::size_t k = 0; k < length; ++k) {
            const auto it = by_frame.find(first + static_cast<long>(k) * config.frame_step);
            if (it == by_frame.end()) break;
            slices.push_back(&it->second);
        }
        if (slices.size() != length) continue;

        SceneBatch scene;
        scene.id = std::string(source) + ":" + std::to_string(first);
        scene.map = map;
        for (const auto& [agent, _] : *slices.front()) {
            Track track;
            track.reserve(length);
            for (const auto* slice : slices) {
                const auto it = slice->find(agent);
                if (it == slice->end()) break;
                track.push_back(it->second);
            }
            if (track.size() != length) continue;
            scene.agent_ids.push_back(agent);
            scene.observed.emplace_back(track.begin(), track.begin() + static_cast<std::ptrdiff_t>(config.obs_len));
            scene.future.emplace_back(track.begin() + static_cast<std::ptrdiff_t>(config.obs_len), track.end());
        }
        if (!scene.observed.empty()) windows.push_back(std::move(scene));
    }
    return windows;
}

SceneBatch observation_scene(std::span<const TrajectoryRecord> records, std::size_t obs_len, long frame_step,
                             std::shared_ptr<const SemanticMap> map, std::string id) {
    if (records.empty()) throw std::invalid_argument("observation_scene: no records");
    if (obs_len < 2 || frame_step < 1) throw std::invalid_argument("observation_scene: invalid window");
    long last = records.front().frame_id;
    for (const auto& r : records) last = std::max(last, r.frame_id);
    const long first = last - static_cast<long>(obs_len - 1) * frame_step;

    std::map<long, Track> tracks;
    std::map<long, std::size_t> seen;
    for (const auto& r : records) {
        if (r.frame_id < first || (r.frame_id - first) % frame_step != 0) continue;
        const auto slot = static_cast<std::size_t>((r.frame_id - first) / frame_step);
        Track& t = tracks[r.agent_id];
        t.resize(obs_len);
        t[slot] = Point{r.x, r.y};
        ++seen[r.agent_id];
    }
    SceneBatch scene;
    scene.id = std::move(id);
    scene.map = std::move(map);
    for (auto& [agent, track] : tracks) {
        if (seen[agent] != obs_len) continue;
        scene.agent_ids.push_back(agent);
        scene.observed.push_back(std::move(track));
    }
    if (scene.observed.empty()) {
        throw std::invalid_argument("observation_scene: no agent is present in all of the last " +
                                    std::to_string(obs_len) + " frames");
    }
    return scene;
}

Track to_relative(std::span<const Point> positions) {
    Track out(positions.size());
    for (std::size_t t = 1; t < positions.size(); ++t) out[t] = positions[t] - positions[t - 1];
    return out;
}

Track cumulative_positions(Point start, std::span<const Point> displacements) {
    Track out;
    out.reserve(displacements.size());
    Point p = start;
    for (Point d : displacements) {
        p += d;
        out.push_back(p);
    }
    return out;
}

SynthKind parse_synth_kind(std::string_view name) {
    if (name == "parallel") return SynthKind::parallel;
    if (name == "face_to_face") return SynthKind::face_to_face;
    if (name == "turning") return SynthKind::turning;
    if (name == "crossroad") return SynthKind::crossroad;
    throw std::invalid_argument("unknown scene kind '" + std::string(name) + "'");
}

std::string_view to_string(SynthKind kind) {
    switch (kind) {
    case SynthKind::parallel: return "parallel";
    case SynthKind::face_to_face: return "face_to_face";
    case SynthKind::turning: return "turning";
    case SynthKind::crossroad: return "crossroad";
    }
    return "?";
}

std::size_t min_agents(SynthKind kind) {
    switch (kind) {
    case SynthKind::parallel:
    case SynthKind::face_to_face: return 2;
    case SynthKind::turning:
    case SynthKind::crossroad: return 1;
    }
    return 1;
}

namespace {

enum Channel : std::size_t { kWalkway = 0, kObstacle = 1, kTerrain = 2 };

Real uniform_between(Rng& rng, Real lo, Real hi) {
    return lo + (hi - lo) * static_cast<Real>(rng.uniform());
}

SemanticMap build_layout(MapLayout layout, const SynthOptions& opt) {
    const std::size_t n = opt.map_size;
    SemanticMap map = SemanticMap::zeros("", n, n, 3);
    const Real half = static_cast<Real>(n) * opt.cell_size / 2;
    const Real lane = 2;  // walkway half-width in metres
    for (std::size_t row = 0; row < n; ++row) {
        const Real y = half - (static_cast<Real>(row) + Real(0.5)) * opt.cell_size;
        for (std::size_t col = 0; col < n; ++col) {
            const Real x = (static_cast<Real>(col) + Real(0.5)) * opt.cell_size - half;
            bool walk = false;
            switch (layout) {
            case MapLayout::corridor: walk = std::abs(y) <= lane + 1; break;
            case MapLayout::corner_left: walk = (std::abs(x) <= lane && y <= lane) || (std::abs(y) <= lane && x <= lane); break;
            case MapLayout::corner_right: walk = (std::abs(x) <= lane && y <= lane) || (std::abs(y) <= lane && x >= -lane); break;
            case MapLayout::crossroad: walk = std::abs(x) <= lane || std::abs(y) <= lane; break;
            }
            std::size_t cls = kTerrain;
            if (walk) {
                cls = kWalkway;
            } else {
                // Buildings border the walkways; open terrain further out.
                const Real gap_x = std::abs(x) - lane, gap_y = std::abs(y) - lane;
                const Real gap = layout == MapLayout::corridor ? std::abs(y) - (lane + 1) : std::min(gap_x, gap_y);
                if (gap <= 3) cls = kObstacle;
            }
            map.at(cls, row, col) = Real(1);
        }
    }
    switch (layout) {
    case MapLayout::corridor: map.scene_id = "corridor"; break;
    case MapLayout::corner_left: map.scene_id = "corner_left"; break;
    case MapLayout::corner_right: map.scene_id = "corner_right"; break;
    case MapLayout::crossroad: map.scene_id = "crossroad"; break;
    }
    return map;
}

// Position of a walker at frame t moving from `start` along unit `dir` at `speed`,
// switching to `dir2` at frame `t_turn`.
Point piecewise(Point start, Point dir, Point dir2, Real speed, Real t_turn, Real t) {
    if (t <= t_turn) return start + (speed * t) * dir;
    return start + (speed * t_turn) * dir + (speed * (t - t_turn)) * dir2;
}

}  // namespace

std::shared_ptr<const SemanticMap> layout_map(MapLayout layout, const SynthOptions& options) {
    static std::mutex mutex;
    static std::map<std::tuple<int, std::size_t, Real>, std::shared_ptr<const SemanticMap>> cache;
    const auto key = std::make_tuple(static_cast<int>(layout), options.map_size, options.cell_size);
    std::lock_guard lock(mutex);
    auto& slot = cache[key];
    if (!slot) slot = std::make_shared<const SemanticMap>(build_layout(layout, options));
    return slot;
}

SceneBatch synth_scene(SynthKind kind, std::size_t n_agents, Rng& rng, const SynthOptions& opt) {
    if (n_agents < min_agents(kind)) {
        throw std::invalid_argument("synth_scene: '" + std::string(to_string(kind)) + "' needs at least " +
                                    std::to_string(min_agents(kind)) + " agents");
    }
    const std::size_t frames = opt.obs_len + opt.pred_len;
    const Real mid = static_cast<Real>(frames - 1) / 2;
    std::vector<Track> tracks(n_agents, Track(frames));
    MapLayout layout = MapLayout::corridor;

    switch (kind) {
    case SynthKind::parallel: {
        const Real speed = uniform_between(rng, opt.min_speed, opt.max_speed);
        const Point dir = rng.uniform() < 0.5 ? Point{1, 0} : Point{-1, 0};
        const Real spacing = Real(0.8);
        const Real y0 = -spacing * static_cast<Real>(n_agents - 1) / 2 + uniform_between(rng, -1, 1);
        for (std::size_t i = 0; i < n_agents; ++i) {
            const Point start = Point{-speed * mid * dir.x, y0 + spacing * static_cast<Real>(i)};
            for (std::size_t t = 0; t < frames; ++t) tracks[i][t] = start + (speed * static_cast<Real>(t)) * dir;
        }
        break;
    }
    case SynthKind::face_to_face: {
        const Real width = Real(3);  // bump half-width in frames
        const Real sidestep = Real(0.4);
        for (std::size_t i = 0; i < n_agents; i += 2) {
            const Real lane_y = uniform_between(rng, -2, 2);
            const Real meet =
                uniform_between(rng, Real(0.35) * static_cast<Real>(frames), Real(0.6) * static_cast<Real>(frames));
            const Real speed = uniform_between(rng, opt.min_speed, opt.max_speed);
            const std::size_t members = std::min<std::size_t>(2, n_agents - i);
            for (std::size_t k = 0; k < members; ++k) {
                const Real sign = k == 0 ? Real(1) : Real(-1);
                for (std::size_t t = 0; t < frames; ++t) {
                    const Real tt = static_cast<Real>(t);
                    const Real bump = std::exp(-((tt - meet) / width) * ((tt - meet) / width));
                    tracks[i + k][t] = Point{sign * speed * (tt - meet), lane_y + sign * sidestep * bump};
                }
            }
        }
        break;
    }
    case SynthKind::turning: {
        const bool left = rng.uniform() < 0.5;
        layout = left ? MapLayout::corner_left : MapLayout::corner_right;
        const Point north{0, 1};
        const Point side = left ? Point{-1, 0} : Point{1, 0};
        for (std::size_t i = 0; i < n_agents; ++i) {
            const Real speed = uniform_between(rng, opt.min_speed, opt.max_speed);
            // Integer turn frame in [0.3 F, 0.65 F] (6..13 for 20 frames): both legs stay long.
            const std::size_t lo = frames * 3 / 10;
            const std::size_t hi = (frames * 65 + 99) / 100;
            const Real t_turn = static_cast<Real>(lo + rng.uniform_index(hi - lo + 1));
            const Real lane_x = uniform_between(rng, Real(-1.2), Real(1.2));
            const Point start{lane_x, -speed * t_turn + uniform_between(rng, Real(-0.5), Real(0.5))};
            for (std::size_t t = 0; t < frames; ++t) {
                tracks[i][t] = piecewise(start, north, side, speed, t_turn, static_cast<Real>(t));
            }
        }
        break;
    }
    case SynthKind::crossroad: {
        layout = MapLayout::crossroad;
        const Point arms[4] = {{0, 1}, {1, 0}, {0, -1}, {-1, 0}};  // heading when entering
        for (std::size_t i = 0; i < n_agents; ++i) {
            const std::size_t arm = rng.uniform_index(4);
            const Point dir = arms[arm];
            const std::size_t choice = rng.uniform_index(3);  // straight, left, right
            const Point left{-dir.y, dir.x};
            const Point right{dir.y, -dir.x};
            const Point dir2 = choice == 0 ? dir : (choice == 1 ? left : right);
            const Real speed = uniform_between(rng, opt.min_speed, opt.max_speed);
            const Real t_center =
                uniform_between(rng, Real(0.25) * static_cast<Real>(frames), Real(0.7) * static_cast<Real>(frames));
            const Real offset = uniform_between(rng, Real(-1), Real(1));
            const Point lateral{-dir.y * offset, dir.x * offset};
            const Point start = lateral + (-speed * t_center) * dir;
            for (std::size_t t = 0; t < frames; ++t) {
                tracks[i][t] = piecewise(start, dir, dir2, speed, t_center, static_cast<Real>(t));
            }
        }
        break;
    }
    }

    if (opt.noise_sigma > 0) {
        for (auto& track : tracks) {
            for (auto& p : track) {
                p.x += opt.noise_sigma * static_cast<Real>(rng.normal());
                p.y += opt.noise_sigma * static_cast<Real>(rng.normal());
            }
        }
    }

    SceneBatch scene;
    scene.id = "synth-" + std::string(to_string(kind));
    scene.map = layout_map(layout, opt);
    for (std::size_t i = 0; i < n_agents; ++i) {
        scene.agent_ids.push_back(static_cast<long>(i));
        scene.observed.emplace_back(tracks[i].begin(), tracks[i].begin() + static_cast<std::ptrdiff_t>(opt.obs_len));
        scene.future.emplace_back(tracks[i].begin() + static_cast<std::ptrdiff_t>(opt.obs_len), tracks[i].end());
    }
    return scene;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest '" + path.string() + "'");
    const std::filesystem::path base = path.parent_path();
    const auto resolve = [&](const std::string& p) {
        const std::filesystem::path fp(p);
        return fp.is_absolute() ? fp : base / fp;
    };
    std::vector<ManifestEntry> entries;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream ss(line);
        ManifestEntry e;
        std::string traj, map, step;
        if (!(ss >> e.subset >> traj >> map >> step)) {
            throw ParseError("expected '<subset> <trajectory-file> <map-file|-> <frame_step> [coord_scale]'", line_no);
        }
        e.trajectories = resolve(traj);
        if (map != "-") e.map = resolve(map);
        e.frame_step = parse_id(step, line_no);
        if (e.frame_step < 1) throw ParseError("frame_step must be positive", line_no);
        std::string scale;
        if (ss >> scale) e.coord_scale = parse_real(scale, line_no);
        if (ss >> scale) throw ParseError("too many columns", line_no);
        entries.push_back(std::move(e));
    }
    return entries;
}

void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write manifest '" + path.string() + "'");
    const std::filesystem::path base = path.parent_path();
    const auto rel = [&](const std::filesystem::path& p) {
        return base.empty() ? p.string() : std::filesystem::relative(p, base).string();
    };
    out << "# subset trajectory-file map-file frame_step coord_scale\n";
    for (const auto& e : entries) {
        out << e.subset << ' ' << rel(e.trajectories) << ' ' << (e.map ? rel(*e.map) : std::string("-")) << ' '
            << e.frame_step << ' ' << format_real(e.coord_scale) << '\n';
    }
}

std::vector<SceneBatch> load_dataset(std::span<const ManifestEntry> entries, const DatasetOptions& options) {
    std::vector<SceneBatch> scenes;
    std::map<std::filesystem::path, std::shared_ptr<const SemanticMap>> maps;
    std::shared_ptr<const SemanticMap> blank;
    for (const auto& e : entries) {
        std::shared_ptr<const SemanticMap> map;
        if (e.map) {
            auto& slot = maps[*e.map];
            if (!slot) slot = std::make_shared<const SemanticMap>(read_semantic_map(*e.map));
            map = slot;
        } else {
            if (!blank) {
                blank = std::make_shared<const SemanticMap>(
                    SemanticMap::zeros("blank", options.map_size, options.map_size, options.map_channels));
            }
            map = blank;
        }
        std::vector<TrajectoryRecord> records = load_trajectories(e.trajectories);
        for (auto& r : records) {
            r.x *= e.coord_scale;
            r.y *= e.coord_scale;
        }
        WindowConfig window = options.window;
        window.frame_step = e.frame_step;
        const std::string source = e.subset + "/" + e.trajectories.stem().string();
        auto windows = extract_windows(records, window, map, source);
        for (auto& w : windows) scenes.push_back(std::move(w));
    }
    return scenes;
}

Split leave_one_out(std::span<const ManifestEntry> entries, std::string_view held_out) {
    Split split;
    for (const auto& e : entries) (e.subset == held_out ? split.test : split.train).push_back(e);
    if (split.test.empty()) throw std::invalid_argument("leave_one_out: no subset named '" + std::string(held_out) + "'");
    return split;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> k_fold(std::size_t count, std::size_t k,
                                                                    std::size_t fold) {
    if (k == 0 || fold >= k) throw std::invalid_argument("k_fold: fold index out of range");
    const std::size_t begin = count * fold / k;
    const std::size_t end = count * (fold + 1) / k;
    std::vector<std::size_t> test, train;
    for (std::size_t i = 0; i < count; ++i) (i >= begin && i < end ? test : train).push_back(i);
    return {std::move(test), std::move(train)};
}

}  // namespace dscmp
