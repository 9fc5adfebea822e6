#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "dscmp/data.hpp"
#include "dscmp/objectives.hpp"

using namespace dscmp;
namespace fs = std::filesystem;

namespace {

std::vector<TrajectoryRecord> parse(const std::string& text) {
    std::istringstream in(text);
    return parse_trajectories(in);
}

std::vector<TrajectoryRecord> span_agent(long agent, long first, long count, long step = 1) {
    std::vector<TrajectoryRecord> out;
    for (long k = 0; k < count; ++k) out.push_back({first + k * step, agent, Real(k), Real(agent)});
    return out;
}

std::vector<TrajectoryRecord> sorted(std::vector<TrajectoryRecord> r) {
    std::stable_sort(r.begin(), r.end(), [](const auto& a, const auto& b) {
        return std::tie(a.frame_id, a.agent_id) < std::tie(b.frame_id, b.agent_id);
    });
    return r;
}

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("dscmp_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("trajectory parsing") {
    CHECK(parse("10 1 3.5 -2.0\n") == std::vector<TrajectoryRecord>{{10, 1, 3.5, -2.0}});
    CHECK(parse("").empty());
    const auto r = parse("# header\n\n20 2 0 0\n10.0 3 1 1\n10 1 2 2\n");
    REQUIRE(r.size() == 3);
    CHECK(r[0].agent_id == 1);
    CHECK(r[1].agent_id == 3);
    CHECK(r[2].frame_id == 20);
}

TEST_CASE("malformed trajectory lines report their line number") {
    try {
        parse("1 1 0 0\n2 1 0\n");
        FAIL("expected a ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }
    CHECK_THROWS_AS(parse("1 1 0 0 7\n"), ParseError);
    CHECK_THROWS_AS(parse("1.5 1 0 0\n"), ParseError);
    CHECK_THROWS_AS(parse("1 1 x 0\n"), ParseError);
    CHECK_THROWS_AS(parse("1 1 0 0\n1 1 2 2\n"), ParseError);
}

TEST_CASE("trajectory files round trip") {
    const fs::path dir = scratch_dir("traj");
    const std::vector<TrajectoryRecord> recs{{1, 1, 0.1, -1.0 / 3.0}, {1, 2, 5, 6}, {2, 1, 1e-7, 2}};
    write_trajectories(dir / "t.txt", recs);
    CHECK(load_trajectories(dir / "t.txt") == recs);
    CHECK_THROWS(load_trajectories(dir / "missing.txt"));
}

TEST_CASE("window counts") {
    WindowConfig cfg;  // 8 + 12, stride 1
    CHECK(extract_windows(span_agent(1, 0, 20), cfg).size() == 1);
    CHECK(extract_windows(span_agent(1, 0, 19), cfg).empty());

    auto two = span_agent(1, 0, 25);
    const auto other = span_agent(2, 0, 25);
    two.insert(two.end(), other.begin(), other.end());
    const auto windows = extract_windows(sorted(two), cfg);
    CHECK(windows.size() == 6);
    for (const SceneBatch& w : windows) {
        CHECK(w.agent_count() == 2);
        CHECK(w.observed[0].size() == 8);
        CHECK(w.future[0].size() == 12);
    }

    cfg.stride = 2;
    CHECK(extract_windows(sorted(two), cfg).size() == 3);
}

TEST_CASE("windows keep only agents present at every frame") {
    auto recs = span_agent(1, 0, 20);
    auto partial = span_agent(2, 0, 19);
    recs.insert(recs.end(), partial.begin(), partial.end());
    const auto w = extract_windows(sorted(recs), WindowConfig{});
    REQUIRE(w.size() == 1);
    CHECK(w[0].agent_ids == std::vector<long>{1});
}

TEST_CASE("frame_step resamples the recording") {
    WindowConfig cfg;
    cfg.obs_len = 2;
    cfg.pred_len = 1;
    cfg.frame_step = 10;
    const auto recs = span_agent(7, 100, 4, 10);
    const auto w = extract_windows(recs, cfg, nullptr, "src");
    CHECK(w.size() == 2);
    CHECK(w[0].id == "src:100");
    CHECK(w[0].observed[0][1].x == 1);
    CHECK(w[0].future[0][0].x == 2);
    // Frames 100..145 every 5: a window needs first, first + 10 and first + 20, so it can
    // start anywhere from 100 to 125.
    CHECK(extract_windows(span_agent(7, 100, 10, 5), cfg).size() == 6);
}

TEST_CASE("observation scenes use the trailing frames") {
    auto recs = span_agent(1, 0, 10);
    auto late = span_agent(2, 6, 4);
    recs.insert(recs.end(), late.begin(), late.end());
    const SceneBatch s = observation_scene(sorted(recs), 4, 1, nullptr, "live");
    CHECK(s.agent_count() == 2);
    CHECK(s.observed[0].front().x == 6);
    CHECK(s.future.empty());
    CHECK_THROWS_AS(observation_scene(sorted(recs), 11, 1, nullptr), std::invalid_argument);
}

TEST_CASE("to_relative and its inverse") {
    const Track p{{0, 0}, {1, 1}, {2, 2}};
    CHECK(to_relative(p) == Track{{0, 0}, {1, 1}, {1, 1}});
    CHECK(to_relative(Track(4, {3, 3})) == Track(4, {0, 0}));
    Rng rng(1);
    Track r;
    for (int k = 0; k < 10; ++k) r.push_back({Real(rng.normal()), Real(rng.normal())});
    const Track back = cumulative_positions(r[0], to_relative(r));
    for (std::size_t k = 0; k < r.size(); ++k) {
        CHECK(back[k].x == doctest::Approx(r[k].x).epsilon(1e-14));
        CHECK(back[k].y == doctest::Approx(r[k].y).epsilon(1e-14));
    }
}

TEST_CASE("synthetic parallel walkers") {
    Rng rng(3);
    const SceneBatch s = synth_scene(SynthKind::parallel, 2, rng);
    REQUIRE(s.agent_count() == 2);
    CHECK(s.observed[0].size() == 8);
    CHECK(s.future[0].size() == 12);
    Track a = s.observed[0], b = s.observed[1];
    a.insert(a.end(), s.future[0].begin(), s.future[0].end());
    b.insert(b.end(), s.future[1].begin(), s.future[1].end());
    const Track da = to_relative(a), db = to_relative(b);
    for (std::size_t t = 1; t < da.size(); ++t) {
        CHECK(da[t].x == doctest::Approx(da[1].x).epsilon(1e-12));
        CHECK(da[t].y == doctest::Approx(da[1].y).epsilon(1e-12));
        CHECK(db[t].x == doctest::Approx(da[t].x).epsilon(1e-12));
        CHECK(db[t].y == doctest::Approx(da[t].y).epsilon(1e-12));
    }
    REQUIRE(s.map);
    CHECK(s.map->channels == 3);
}

TEST_CASE("noiseless turning agents are all nonlinear") {
    Rng rng(4);
    for (int k = 0; k < 20; ++k) {
        const SceneBatch s = synth_scene(SynthKind::turning, 3, rng);
        for (std::size_t i = 0; i < s.agent_count(); ++i) {
            Track full = s.observed[i];
            full.insert(full.end(), s.future[i].begin(), s.future[i].end());
            CHECK(nonlinear_filter(full));
        }
    }
}

TEST_CASE("synth is reproducible and validates agent counts") {
    for (SynthKind kind : {SynthKind::parallel, SynthKind::face_to_face, SynthKind::turning, SynthKind::crossroad}) {
        Rng a(9), b(9);
        SynthOptions opt;
        opt.noise_sigma = Real(0.05);
        const SceneBatch x = synth_scene(kind, 4, a, opt), y = synth_scene(kind, 4, b, opt);
        CHECK(x.observed == y.observed);
        CHECK(x.future == y.future);
        CHECK(parse_synth_kind(to_string(kind)) == kind);
        Rng c(1);
        if (min_agents(kind) > 1) CHECK_THROWS_AS(synth_scene(kind, min_agents(kind) - 1, c), std::invalid_argument);
    }
    CHECK_THROWS(parse_synth_kind("zigzag"));
}

TEST_CASE("layout maps are one-hot and cached") {
    const auto m = layout_map(MapLayout::crossroad);
    CHECK(m->height == 256);
    for (std::size_t y = 0; y < m->height; y += 17)
        for (std::size_t x = 0; x < m->width; x += 13) {
            const Real s = m->at(0, y, x) + m->at(1, y, x) + m->at(2, y, x);
            CHECK(s == 1);
        }
    // Centre of the cross is walkway.
    CHECK(m->at(0, 128, 128) == 1);
    CHECK(layout_map(MapLayout::crossroad) == m);
}

TEST_CASE("manifests, datasets and splits") {
    const fs::path dir = scratch_dir("manifest");
    fs::create_directories(dir / "eth");
    auto recs = span_agent(1, 0, 20);
    write_trajectories(dir / "eth" / "a.txt", recs);
    write_trajectories(dir / "b.txt", span_agent(2, 0, 21));
    write_semantic_map(dir / "m.map", SemanticMap::zeros("m", 4, 4, 3));
    {
        std::ofstream out(dir / "manifest.txt");
        out << "# subset trajectories map frame_step [coord_scale]\n"
            << "eth eth/a.txt m.map 1 2\n"
            << "hotel b.txt - 1\n";
    }
    const auto entries = read_manifest(dir / "manifest.txt");
    REQUIRE(entries.size() == 2);
    CHECK(entries[0].trajectories == dir / "eth" / "a.txt");
    CHECK(entries[0].coord_scale == 2);
    CHECK_FALSE(entries[1].map.has_value());

    DatasetOptions opt;
    const auto scenes = load_dataset(entries, opt);
    CHECK(scenes.size() == 1 + 2);
    CHECK(scenes[0].observed[0][1].x == 2);  // coord_scale applied
    CHECK(scenes[2].map->height == 256);

    const Split s = leave_one_out(entries, "hotel");
    CHECK(s.train.size() == 1);
    CHECK(s.test.size() == 1);
    CHECK(s.test[0].subset == "hotel");
    CHECK_THROWS(leave_one_out(entries, "univ"));

    write_manifest(dir / "copy.txt", entries);
    const auto again = read_manifest(dir / "copy.txt");
    CHECK(again.size() == 2);
    CHECK(again[0].trajectories == entries[0].trajectories);
    CHECK(again[1].frame_step == 1);
}

TEST_CASE("leave-one-out partitions the subsets") {
    std::vector<ManifestEntry> e;
    for (const char* s : {"eth", "hotel", "univ", "zara1", "zara2", "univ"}) e.push_back({s, "x", std::nullopt, 1, 1});
    for (const char* held : {"eth", "hotel", "univ", "zara1", "zara2"}) {
        const Split s = leave_one_out(e, held);
        CHECK(s.train.size() + s.test.size() == e.size());
        std::set<std::string> train, test;
        for (const auto& x : s.train) train.insert(x.subset);
        for (const auto& x : s.test) test.insert(x.subset);
        CHECK(test == std::set<std::string>{held});
        CHECK_FALSE(train.contains(held));
    }
}

TEST_CASE("k-fold blocks cover every index once") {
    std::vector<int> seen(10, 0);
    for (std::size_t f = 0; f < 3; ++f) {
        const auto [test, train] = k_fold(10, 3, f);
        CHECK(test.size() + train.size() == 10);
        for (std::size_t i : test) ++seen[i];
    }
    CHECK(seen == std::vector<int>(10, 1));
    CHECK_THROWS(k_fold(10, 3, 3));
}

}  // TEST_SUITE
