#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dscmp/diagnostics.hpp"
#include "dscmp/trainer.hpp"

using namespace dscmp;
namespace fs = std::filesystem;

namespace {

TrainConfig micro_train_config() {
    TrainConfig c;
    c.model = micro_model_config();
    c.loss.m = 3;
    c.batch_size = 2;
    c.epochs = 2;
    c.seed = 5;
    return c;
}

std::vector<SceneBatch> micro_scenes(std::size_t n) {
    std::vector<SceneBatch> out;
    for (std::size_t k = 0; k < n; ++k) out.push_back(micro_scene(100 + k));
    return out;
}

TrainConfig parse(const std::string& text) {
    std::istringstream in(text);
    return parse_train_config(in);
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("adam on a scalar with a constant unit gradient") {
    // Trace from tests/oracles/golden.py.
    ParamStore p;
    const ParamId t = p.add("theta", 1, 1);
    AdamState s = AdamState::zeros(p);
    AdamConfig cfg;
    cfg.learning_rate = Real(0.1);
    Gradients g = p.make_gradients();
    g[t][0] = 1;
    const double expect[3] = {-0.09999999900000002, -0.19999999799999935, -0.29999999699999935};
    for (int k = 0; k < 3; ++k) {
        adam_step(p, g, s, cfg);
        CHECK(p.value(t)[0] == doctest::Approx(expect[k]).epsilon(1e-15));
    }
    CHECK(s.step == 3);
}

TEST_CASE("zero gradients leave parameters alone but advance the step") {
    ParamStore p;
    const ParamId t = p.add("w", 2, 2);
    p.mutable_value(t) = Mat(2, 2, {1, 2, 3, 4});
    AdamState s = AdamState::zeros(p);
    adam_step(p, p.make_gradients(), s, AdamConfig{});
    CHECK(p.value(t) == Mat(2, 2, {1, 2, 3, 4}));
    CHECK(s.step == 1);
}

TEST_CASE("a non-finite gradient names the parameter and changes nothing") {
    ParamStore p;
    p.add("first", 1, 1);
    const ParamId b = p.add("second.W", 1, 2);
    AdamState s = AdamState::zeros(p);
    Gradients g = p.make_gradients();
    g[ParamId{0}][0] = 1;
    g[b][1] = NAN;
    try {
        adam_step(p, g, s, AdamConfig{});
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("second.W") != std::string::npos);
    }
    CHECK(p.value(ParamId{0})[0] == 0);
    CHECK(s.step == 0);
}

TEST_CASE("config text round trip and hashing") {
    TrainConfig c = micro_train_config();
    c.held_out = "zara1";
    c.model.scm.norm = RelationNorm::softmax;
    c.loss.distance = VarietyDistance::per_frame_mean;
    c.adam.learning_rate = Real(3e-4);
    const std::string text = train_config_text(c);
    std::istringstream in(text);
    const TrainConfig back = parse_train_config(in);
    CHECK(train_config_text(back) == text);
    CHECK(config_hash(back) == config_hash(c));
    c.seed += 1;
    CHECK(config_hash(c) != config_hash(back));
}

TEST_CASE("config parsing") {
    const TrainConfig c = parse("# comment\nhidden = 8\nqueue = auto\nlambda=0.25\nheld_out = eth\nconv_kernels = 3, 3,1\n");
    CHECK(c.model.hidden == 8);
    CHECK(c.queue_auto);
    CHECK(c.loss.lambda == 0.25);
    CHECK(c.held_out == "eth");
    CHECK(c.model.scene.kernels == std::array<std::size_t, 3>{3, 3, 1});
    CHECK(c.batch_size == 64);
    CHECK(c.epochs == 200);
    CHECK_THROWS_AS(parse("hiden = 8\n"), ParseError);
    CHECK_THROWS_AS(parse("hidden = 8\nhidden = 9\n"), ParseError);
    CHECK_THROWS_AS(parse("hidden 8\n"), ParseError);
    CHECK_THROWS_AS(parse("use_scm = maybe\n"), ParseError);
    CHECK_THROWS(parse("margin = 2\n").validate());
}

TEST_CASE("queue length per subset") {
    CHECK(queue_for_subset("eth") == 4);
    CHECK(queue_for_subset("zara1") == 2);
    CHECK(queue_for_subset("zara2") == 2);
    CHECK(queue_for_subset("hotel") == 3);
    TrainConfig c;
    c.queue_auto = true;
    c.held_out = "eth";
    const std::vector<ManifestEntry> e{{"eth", "a", std::nullopt, 1, 1}, {"zara1", "b", std::nullopt, 1, 1}};
    resolve_queue(c, e);
    CHECK(c.model.queue == 4);
    TrainConfig d;
    d.queue_auto = true;
    resolve_queue(d, e);
    CHECK(d.model.queue == 3);
}

TEST_CASE("training is deterministic and the curve is finite") {
    const auto scenes = micro_scenes(5);
    const TrainConfig cfg = micro_train_config();
    const TrainResult a = train(cfg, scenes);
    const TrainResult b = train(cfg, scenes);
    CHECK(a.curve.size() == 6);  // 2 epochs of ceil(5 / 2) batches
    for (std::size_t k = 0; k < a.curve.size(); ++k) {
        CHECK(std::isfinite(a.curve[k].total));
        CHECK(a.curve[k].total == b.curve[k].total);
    }
    std::ostringstream ta, tb;
    write_checkpoint(ta, a.checkpoint);
    write_checkpoint(tb, b.checkpoint);
    CHECK(ta.str() == tb.str());
    CHECK(a.checkpoint.epoch == 2);
    CHECK(a.checkpoint.iteration == 6);
    CHECK_THROWS_AS(train(cfg, std::vector<SceneBatch>{}), std::invalid_argument);
}

TEST_CASE("max_iterations stops early") {
    TrainConfig cfg = micro_train_config();
    cfg.max_iterations = 4;
    const TrainResult r = train(cfg, micro_scenes(5));
    CHECK(r.curve.size() == 4);
    CHECK(r.checkpoint.iteration == 4);
}

TEST_CASE("lambda = 0 logs no weighted coherence") {
    TrainConfig cfg = micro_train_config();
    cfg.loss.lambda = 0;
    const TrainResult r = train(cfg, micro_scenes(3));
    for (const LossRecord& rec : r.curve) {
        CHECK(rec.weighted_coherence == 0);
        CHECK(rec.total == rec.variety);
    }
}

TEST_CASE("one small Adam step lowers the loss on a fixed batch") {
    Model model(micro_model_config());
    Rng init(3);
    model.initialize(init);
    const auto scenes = micro_scenes(2);
    std::vector<const SceneBatch*> batch{&scenes[0], &scenes[1]};
    LossConfig loss;
    loss.m = 3;
    Rng r0(8);
    Gradients g = model.params().make_gradients();
    const Real before = total_loss(model, batch, loss, r0, &g).total;
    AdamState s = AdamState::zeros(model.params());
    AdamConfig adam;
    adam.learning_rate = Real(1e-4);
    adam_step(model.params(), g, s, adam);
    Rng r1(8);
    const Real after = total_loss(model, batch, loss, r1).total;
    CHECK(after < before);
}

TEST_CASE("checkpoints round trip exactly") {
    const auto scenes = micro_scenes(3);
    const TrainResult r = train(micro_train_config(), scenes);
    const fs::path dir = fs::temp_directory_path() / "dscmp_test_ckpt";
    fs::remove_all(dir);
    fs::create_directories(dir);
    save_checkpoint(dir / "c.ckpt", r.checkpoint);
    const Checkpoint back = load_checkpoint(dir / "c.ckpt");
    CHECK(back.epoch == r.checkpoint.epoch);
    CHECK(back.iteration == r.checkpoint.iteration);
    CHECK(back.adam == r.checkpoint.adam);
    for (ParamId id : r.checkpoint.model.params().ids())
        CHECK(back.model.params().value(id) == r.checkpoint.model.params().value(id));

    EvalOptions eo;
    eo.samples = 5;
    CHECK(evaluate(back.model, scenes, eo) == evaluate(r.checkpoint.model, scenes, eo));

    std::ostringstream text;
    write_checkpoint(text, back);
    std::ifstream raw(dir / "c.ckpt");
    std::stringstream disk;
    disk << raw.rdbuf();
    CHECK(text.str() == disk.str());
}

TEST_CASE("a tampered checkpoint is rejected") {
    const TrainResult r = train(micro_train_config(), micro_scenes(2));
    std::ostringstream out;
    write_checkpoint(out, r.checkpoint);
    std::string text = out.str();
    const auto pos = text.find("\nseed = 5\n");
    REQUIRE(pos != std::string::npos);
    text[pos + 8] = '9';
    std::istringstream in(text);
    CHECK_THROWS_AS(read_checkpoint(in), ParseError);
    std::istringstream junk("not a checkpoint\n");
    CHECK_THROWS_AS(read_checkpoint(junk), ParseError);
}

TEST_CASE("training writes checkpoints and the loss curve") {
    const fs::path dir = fs::temp_directory_path() / "dscmp_test_train_out";
    fs::remove_all(dir);
    TrainOptions opt;
    opt.out_dir = dir;
    std::ostringstream log;
    opt.log = &log;
    train(micro_train_config(), micro_scenes(3), opt);
    CHECK(fs::exists(dir / "epoch-1.ckpt"));
    CHECK(fs::exists(dir / "epoch-2.ckpt"));
    CHECK(fs::exists(dir / "last.ckpt"));
    std::ifstream curve(dir / "loss_curve.tsv");
    std::string header;
    std::getline(curve, header);
    CHECK(header == "iteration\tepoch\tweighted_coherence\tvariety\ttotal");
    std::size_t rows = 0;
    for (std::string line; std::getline(curve, line);) ++rows;
    CHECK(rows == 4);
    CHECK(log.str().find("epoch 2") != std::string::npos);
}

TEST_CASE("evaluation is reproducible and more samples never hurt") {
    const auto scenes = micro_scenes(3);
    const TrainResult r = train(micro_train_config(), scenes);
    EvalOptions one, twenty;
    one.samples = 1;
    twenty.samples = 20;
    CHECK(evaluate(r.checkpoint.model, scenes, twenty) == evaluate(r.checkpoint.model, scenes, twenty));
    CHECK(evaluate(r.checkpoint.model, scenes, twenty).ade <= evaluate(r.checkpoint.model, scenes, one).ade);
}

}  // TEST_SUITE
