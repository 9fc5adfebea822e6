#include "dscmp/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "dscmp/numkit/errors.hpp"

namespace dscmp {

namespace {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::size_t parse_count(std::string_view text, std::size_t line) {
    std::size_t value = 0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        throw ParseError("expected a non-negative integer, got '" + std::string(text) + "'", line);
    }
    return value;
}

std::uint64_t parse_u64(std::string_view text, std::size_t line) {
    std::uint64_t value = 0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        throw ParseError("expected an unsigned integer, got '" + std::string(text) + "'", line);
    }
    return value;
}

bool parse_bool(std::string_view text, std::size_t line) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw ParseError("expected true or false, got '" + std::string(text) + "'", line);
}

std::array<std::size_t, 3> parse_triple(std::string_view text, std::size_t line) {
    std::array<std::size_t, 3> out{};
    std::size_t k = 0;
    while (true) {
        const auto comma = text.find(',');
        if (k == 3) throw ParseError("expected three comma-separated integers", line);
        out[k++] = parse_count(trim(text.substr(0, comma)), line);
        if (comma == std::string_view::npos) break;
        text.remove_prefix(comma + 1);
    }
    if (k != 3) throw ParseError("expected three comma-separated integers", line);
    return out;
}

template <typename Enum>
Enum parse_enum(std::string_view text, std::initializer_list<std::pair<std::string_view, Enum>> options,
                std::size_t line) {
    std::string allowed;
    for (const auto& [name, value] : options) {
        if (name == text) return value;
        allowed += (allowed.empty() ? "" : "|") + std::string(name);
    }
    throw ParseError("expected one of " + allowed + ", got '" + std::string(text) + "'", line);
}

std::string_view latent_mode_name(LatentMode m) {
    switch (m) {
    case LatentMode::scene: return "scene";
    case LatentMode::gaussian: return "gaussian";
    case LatentMode::none: return "none";
    }
    return "?";
}

std::string triple_text(const std::array<std::size_t, 3>& t) {
    return std::to_string(t[0]) + "," + std::to_string(t[1]) + "," + std::to_string(t[2]);
}

using Setter = std::function<void(TrainConfig&, std::string_view, std::size_t)>;

const std::map<std::string, Setter, std::less<>>& setters() {
    static const std::map<std::string, Setter, std::less<>> table = {
        {"hidden", [](TrainConfig& c, std::string_view v, std::size_t l) { c.model.hidden = parse_count(v, l); }},
        {"latent", [](TrainConfig& c, std::string_view v, std::size_t l) { c.model.latent = parse_count(v, l); }},
        {"decoder_hidden",
         [](TrainConfig& c, std::string_view v, std::size_t l) { c.model.decoder_hidden = parse_count(v, l); }},
        {"queue",
         [](TrainConfig& c, std::string_view v, std::size_t l) {
             c.queue_auto = v == "auto";
             if (!c.queue_auto) c.model.queue = parse_count(v, l);
         }},
        {"obs_len", [](TrainConfig& c, std::string_view v, std::size_t l) { c.model.obs_len = parse_count(v, l); }},
        {"pred_len", [](TrainConfig& c, std::string_view v, std::size_t l) { c.model.pred_len = parse_count(v, l); }},
        {"use_scm", [](TrainConfig& c, std::string_view v, std::size_t l) { c.model.use_scm = parse_bool(v, l); }},
        {"latent_mode",
         [](TrainConfig& c, std::string_view v, std::size_t l) {
             c.model.latent_mode = parse_enum<LatentMode>(
                 v, {{"scene", LatentMode::scene}, {"gaussian", LatentMode::gaussian}, {"none", LatentMode::none}}, l);
         }},
        {"relation_norm",
         [](TrainConfig& c, std::string_view v, std::size_t l) {
             c.model.scm.norm = parse_enum<RelationNorm>(
                 v, {{"signed_sum", RelationNorm::signed_sum}, {"softmax", RelationNorm::softmax}}, l);
         }},
        {"relation_guard",
         [](TrainConfig& c, std::string_view v, std::size_t l) { c.model.scm.z_guard = parse_real(v, l); }},
        {"neighbor_radius",
         [](TrainConfig& c, std::string_view v, std::size_t l) { c.model.neighbor_radius = parse_real(v, l); }},
        {"forget_bias",
         [](TrainConfig& c, std::string_view v, std::size_t l) { c.model.forget_bias = parse_real(v, l); }},
        {"map_channels",
         [](TrainConfig& c, std::string_view v, std::size_t l) { c.model.scene.map_channels = parse_count(v, l); }},
        {"conv_channels",
         [](TrainConfig& c, std::string_view v, std::size_t l) { c.model.scene.conv_channels = parse_triple(v, l); }},
        {"conv_kernels",
         [](TrainConfig& c, std::string_view v, std::size_t l) { c.model.scene.kernels = parse_triple(v, l); }},
        {"conv_strides",
         [](TrainConfig& c, std::string_view v, std::size_t l) { c.model.scene.strides = parse_triple(v, l); }},
        {"feature_width",
         [](TrainConfig& c, std::string_view v, std::size_t l) { c.model.scene.feature_width = parse_count(v, l); }},
        {"sigma_transform",
         [](TrainConfig& c, std::string_view v, std::size_t l) {
             c.model.scene.sigma = parse_enum<SigmaTransform>(
                 v, {{"sigmoid", SigmaTransform::sigmoid}, {"softplus", SigmaTransform::softplus}}, l);
         }},
        {"sigma_bias",
         [](TrainConfig& c, std::string_view v, std::size_t l) { c.model.scene.sigma_bias = parse_real(v, l); }},
        {"lambda", [](TrainConfig& c, std::string_view v, std::size_t l) { c.loss.lambda = parse_real(v, l); }},
        {"margin", [](TrainConfig& c, std::string_view v, std::size_t l) { c.loss.margin = parse_real(v, l); }},
        {"samples", [](TrainConfig& c, std::string_view v, std::size_t l) { c.loss.m = parse_count(v, l); }},
        {"pairs_per_batch",
         [](TrainConfig& c, std::string_view v, std::size_t l) { c.loss.pairs_per_batch = parse_count(v, l); }},
        {"variety_distance",
         [](TrainConfig& c, std::string_view v, std::size_t l) {
             c.loss.distance = parse_enum<VarietyDistance>(
                 v, {{"concatenated", VarietyDistance::concatenated}, {"per_frame_mean", VarietyDistance::per_frame_mean}},
                 l);
         }},
        {"learning_rate",
         [](TrainConfig& c, std::string_view v, std::size_t l) { c.adam.learning_rate = parse_real(v, l); }},
        {"beta1", [](TrainConfig& c, std::string_view v, std::size_t l) { c.adam.beta1 = parse_real(v, l); }},
        {"beta2", [](TrainConfig& c, std::string_view v, std::size_t l) { c.adam.beta2 = parse_real(v, l); }},
        {"adam_epsilon", [](TrainConfig& c, std::string_view v, std::size_t l) { c.adam.epsilon = parse_real(v, l); }},
        {"batch_size", [](TrainConfig& c, std::string_view v, std::size_t l) { c.batch_size = parse_count(v, l); }},
        {"epochs", [](TrainConfig& c, std::string_view v, std::size_t l) { c.epochs = parse_count(v, l); }},
        {"max_iterations",
         [](TrainConfig& c, std::string_view v, std::size_t l) { c.max_iterations = parse_count(v, l); }},
        {"checkpoint_every",
         [](TrainConfig& c, std::string_view v, std::size_t l) { c.checkpoint_every = parse_count(v, l); }},
        {"seed", [](TrainConfig& c, std::string_view v, std::size_t l) { c.seed = parse_u64(v, l); }},
        {"held_out", [](TrainConfig& c, std::string_view v, std::size_t) { c.held_out = v == "-" ? "" : std::string(v); }},
        {"window_stride",
         [](TrainConfig& c, std::string_view v, std::size_t l) { c.window_stride = parse_count(v, l); }},
        {"eval_samples",
         [](TrainConfig& c, std::string_view v, std::size_t l) { c.eval_samples = parse_count(v, l); }},
    };
    return table;
}

}  // namespace

void TrainConfig::validate() const {
    loss.validate();
    if (batch_size == 0) throw std::invalid_argument("config: batch_size must be positive");
    if (!(adam.learning_rate > 0)) throw std::invalid_argument("config: learning_rate must be positive");
    if (!(adam.beta1 >= 0 && adam.beta1 < 1 && adam.beta2 >= 0 && adam.beta2 < 1)) {
        throw std::invalid_argument("config: Adam betas must lie in [0, 1)");
    }
    if (!(adam.epsilon > 0)) throw std::invalid_argument("config: adam_epsilon must be positive");
    if (checkpoint_every == 0) throw std::invalid_argument("config: checkpoint_every must be positive");
    if (window_stride == 0) throw std::invalid_argument("config: window_stride must be positive");
    if (eval_samples == 0) throw std::invalid_argument("config: eval_samples must be positive");
}

TrainConfig parse_train_config(std::istream& in) {
    TrainConfig config;
    std::map<std::string, std::size_t, std::less<>> seen;
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string_view line = raw;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ParseError("expected 'key = value'", line_no);
        const std::string_view key = trim(line.substr(0, eq));
        const std::string_view value = trim(line.substr(eq + 1));
        if (value.empty()) throw ParseError("missing value for '" + std::string(key) + "'", line_no);
        const auto it = setters().find(key);
        if (it == setters().end()) throw ParseError("unknown key '" + std::string(key) + "'", line_no);
        if (const auto [pos, inserted] = seen.emplace(std::string(key), line_no); !inserted) {
            throw ParseError("key '" + std::string(key) + "' already set on line " + std::to_string(pos->second),
                             line_no);
        }
        it->second(config, value, line_no);
    }
    return config;
}

TrainConfig read_train_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config '" + path.string() + "'");
    try {
        return parse_train_config(in);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what(), e.line());
    }
}

void write_train_config(std::ostream& out, const TrainConfig& c) {
    const ModelConfig& m = c.model;
    out << "hidden = " << m.hidden << '\n'
        << "latent = " << m.latent << '\n'
        << "decoder_hidden = " << m.decoder_hidden << '\n'
        << "queue = " << (c.queue_auto ? std::string("auto") : std::to_string(m.queue)) << '\n'
        << "obs_len = " << m.obs_len << '\n'
        << "pred_len = " << m.pred_len << '\n'
        << "use_scm = " << (m.use_scm ? "true" : "false") << '\n'
        << "latent_mode = " << latent_mode_name(m.latent_mode) << '\n'
        << "relation_norm = " << (m.scm.norm == RelationNorm::signed_sum ? "signed_sum" : "softmax") << '\n'
        << "relation_guard = " << format_real(m.scm.z_guard) << '\n'
        << "neighbor_radius = " << format_real(m.neighbor_radius) << '\n'
        << "forget_bias = " << format_real(m.forget_bias) << '\n'
        << "map_channels = " << m.scene.map_channels << '\n'
        << "conv_channels = " << triple_text(m.scene.conv_channels) << '\n'
        << "conv_kernels = " << triple_text(m.scene.kernels) << '\n'
        << "conv_strides = " << triple_text(m.scene.strides) << '\n'
        << "feature_width = " << m.scene.feature_width << '\n'
        << "sigma_transform = " << (m.scene.sigma == SigmaTransform::sigmoid ? "sigmoid" : "softplus") << '\n'
        << "sigma_bias = " << format_real(m.scene.sigma_bias) << '\n'
        << "lambda = " << format_real(c.loss.lambda) << '\n'
        << "margin = " << format_real(c.loss.margin) << '\n'
        << "samples = " << c.loss.m << '\n'
        << "pairs_per_batch = " << c.loss.pairs_per_batch << '\n'
        << "variety_distance = "
        << (c.loss.distance == VarietyDistance::concatenated ? "concatenated" : "per_frame_mean") << '\n'
        << "learning_rate = " << format_real(c.adam.learning_rate) << '\n'
        << "beta1 = " << format_real(c.adam.beta1) << '\n'
        << "beta2 = " << format_real(c.adam.beta2) << '\n'
        << "adam_epsilon = " << format_real(c.adam.epsilon) << '\n'
        << "batch_size = " << c.batch_size << '\n'
        << "epochs = " << c.epochs << '\n'
        << "max_iterations = " << c.max_iterations << '\n'
        << "checkpoint_every = " << c.checkpoint_every << '\n'
        << "seed = " << c.seed << '\n'
        << "held_out = " << (c.held_out.empty() ? std::string("-") : c.held_out) << '\n'
        << "window_stride = " << c.window_stride << '\n'
        << "eval_samples = " << c.eval_samples << '\n';
}

std::string train_config_text(const TrainConfig& config) {
    std::ostringstream out;
    write_train_config(out, config);
    return out.str();
}

std::uint64_t config_hash(const TrainConfig& config) {
    std::uint64_t h = 14695981039346656037ULL;
    for (const unsigned char ch : train_config_text(config)) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

std::size_t queue_for_subset(std::string_view subset) {
    if (subset == "eth") return 4;
    if (subset.starts_with("zara")) return 2;
    return 3;
}

void resolve_queue(TrainConfig& config, std::span<const ManifestEntry> entries) {
    if (!config.queue_auto) return;
    if (!config.held_out.empty()) {
        config.model.queue = queue_for_subset(config.held_out);
        return;
    }
    std::optional<std::size_t> common;
    for (const auto& e : entries) {
        const std::size_t q = queue_for_subset(e.subset);
        if (common && *common != q) {
            config.model.queue = 3;
            return;
        }
        common = q;
    }
    config.model.queue = common.value_or(3);
}

AdamState AdamState::zeros(const ParamStore& params) {
    AdamState s;
    for (ParamId id : params.ids()) {
        const Mat& v = params.value(id);
        s.first.emplace_back(v.rows(), v.cols());
        s.second.emplace_back(v.rows(), v.cols());
    }
    return s;
}

void adam_step(ParamStore& params, const Gradients& grads, AdamState& state, const AdamConfig& config) {
    const std::vector<ParamId> ids = params.ids();
    if (grads.size() != ids.size()) throw ShapeError("adam_step: gradient buffer does not match the parameters");
    if (state.first.empty() && state.step == 0) state = AdamState::zeros(params);
    if (state.first.size() != ids.size() || state.second.size() != ids.size()) {
        throw ShapeError("adam_step: optimizer state does not match the parameters");
    }
    for (ParamId id : ids) {
        const Mat& g = grads[id];
        if (!g.same_shape(params.value(id))) throw ShapeError("adam_step: gradient shape of '" + params.name(id) + "'");
        for (std::size_t k = 0; k < g.size(); ++k) {
            if (!std::isfinite(g[k])) {
                throw NumericError("non-finite gradient in parameter '" + params.name(id) + "' at index " +
                                   std::to_string(k));
            }
        }
    }

    ++state.step;
    const Real t = static_cast<Real>(state.step);
    const Real correction1 = Real(1) - std::pow(config.beta1, t);
    const Real correction2 = Real(1) - std::pow(config.beta2, t);
    for (ParamId id : ids) {
        const Mat& g = grads[id];
        Mat& m = state.first[id.index];
        Mat& v = state.second[id.index];
        Mat& value = params.mutable_value(id);
        for (std::size_t k = 0; k < g.size(); ++k) {
            m[k] = config.beta1 * m[k] + (Real(1) - config.beta1) * g[k];
            v[k] = config.beta2 * v[k] + (Real(1) - config.beta2) * g[k] * g[k];
            const Real m_hat = m[k] / correction1;
            const Real v_hat = v[k] / correction2;
            value[k] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
        }
    }
}

namespace {

constexpr std::string_view kCheckpointMagic = "dscmp-checkpoint";
constexpr int kCheckpointVersion = 1;

std::string hex64(std::uint64_t v) {
    char buf[17];
    const auto res = std::to_chars(buf, buf + 16, v, 16);
    return std::string(static_cast<std::size_t>(16 - (res.ptr - buf)), '0') + std::string(buf, res.ptr);
}

void write_values(std::ostream& out, const Mat& m) {
    for (std::size_t k = 0; k < m.size(); ++k) out << ' ' << format_real(m[k]);
    out << '\n';
}

std::string expect_token(std::istream& in, std::string_view what) {
    std::string token;
    if (!(in >> token)) throw ParseError("checkpoint truncated: expected " + std::string(what), 0);
    return token;
}

void expect_keyword(std::istream& in, std::string_view keyword) {
    const std::string token = expect_token(in, keyword);
    if (token != keyword) throw ParseError("checkpoint: expected '" + std::string(keyword) + "', got '" + token + "'", 0);
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ck) {
    const std::string text = train_config_text(ck.config);
    const auto lines = static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
    out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
    out << "config_hash " << hex64(config_hash(ck.config)) << '\n';
    out << "epoch " << ck.epoch << '\n';
    out << "iteration " << ck.iteration << '\n';
    out << "config " << lines << '\n' << text;
    ck.model.params().write(out);
    const ParamStore& params = ck.model.params();
    const std::vector<ParamId> ids = params.ids();
    const bool have_moments = ck.adam.first.size() == ids.size();
    out << "adam " << ck.adam.step << ' ' << (have_moments ? 1 : 0) << '\n';
    if (have_moments) {
        for (ParamId id : ids) {
            out << params.name(id) << " m";
            write_values(out, ck.adam.first[id.index]);
            out << params.name(id) << " v";
            write_values(out, ck.adam.second[id.index]);
        }
    }
    out << "end\n";
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("cannot write checkpoint '" + tmp.string() + "'");
        write_checkpoint(out, checkpoint);
        if (!out) throw std::runtime_error("error writing checkpoint '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(std::istream& in) {
    expect_keyword(in, kCheckpointMagic);
    if (expect_token(in, "version") != std::to_string(kCheckpointVersion)) {
        throw ParseError("unsupported checkpoint version", 0);
    }
    expect_keyword(in, "config_hash");
    const std::string stored_hash = expect_token(in, "hash");
    expect_keyword(in, "epoch");
    const std::size_t epoch = parse_count(expect_token(in, "epoch"), 0);
    expect_keyword(in, "iteration");
    const std::uint64_t iteration = parse_u64(expect_token(in, "iteration"), 0);
    expect_keyword(in, "config");
    const std::size_t lines = parse_count(expect_token(in, "line count"), 0);
    std::string rest;
    std::getline(in, rest);
    std::string text;
    for (std::size_t k = 0; k < lines; ++k) {
        std::string line;
        if (!std::getline(in, line)) throw ParseError("checkpoint truncated inside config block", 0);
        text += line + '\n';
    }
    std::istringstream config_in(text);
    TrainConfig config = parse_train_config(config_in);
    if (hex64(config_hash(config)) != stored_hash) {
        throw ParseError("checkpoint config hash mismatch (stored " + stored_hash + ")", 0);
    }

    Checkpoint ck{config, Model(config.model), {}, epoch, iteration};
    ck.model.params().read_values(in);

    expect_keyword(in, "adam");
    ck.adam.step = parse_u64(expect_token(in, "step"), 0);
    const bool have_moments = expect_token(in, "moment flag") == "1";
    if (have_moments) {
        const ParamStore& params = ck.model.params();
        const std::uint64_t step = ck.adam.step;
        ck.adam = AdamState::zeros(params);
        ck.adam.step = step;
        for (ParamId id : params.ids()) {
            for (Mat* target : {&ck.adam.first[id.index], &ck.adam.second[id.index]}) {
                const std::string name = expect_token(in, "parameter name");
                if (name != params.name(id)) {
                    throw ParseError("checkpoint: expected moments of '" + params.name(id) + "', got '" + name + "'", 0);
                }
                expect_token(in, "moment tag");
                for (std::size_t k = 0; k < target->size(); ++k) (*target)[k] = parse_real(expect_token(in, "value"));
            }
        }
    }
    expect_keyword(in, "end");
    return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
    try {
        return read_checkpoint(in);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what(), e.line());
    }
}

void write_loss_curve_header(std::ostream& out) {
    out << "iteration\tepoch\tweighted_coherence\tvariety\ttotal\n";
}

void write_loss_record(std::ostream& out, const LossRecord& r) {
    out << r.iteration << '\t' << r.epoch << '\t' << format_real(r.weighted_coherence) << '\t'
        << format_real(r.variety) << '\t' << format_real(r.total) << '\n';
}

TrainResult train(const TrainConfig& config, std::span<const SceneBatch> scenes, const TrainOptions& options) {
    config.validate();
    if (scenes.empty()) throw std::invalid_argument("train: empty dataset");

    Rng root(config.seed);
    Rng init_rng = root.split();
    Rng shuffle_rng = root.split();
    Rng loss_rng = root.split();

    TrainResult result{Checkpoint{config, Model(config.model), {}, 0, 0}, {}};
    Checkpoint& ck = result.checkpoint;
    ck.model.initialize(init_rng);
    ck.adam = AdamState::zeros(ck.model.params());

    std::ofstream curve;
    if (options.out_dir) {
        std::filesystem::create_directories(*options.out_dir);
        curve.open(*options.out_dir / "loss_curve.tsv");
        if (!curve) throw std::runtime_error("cannot write loss curve in '" + options.out_dir->string() + "'");
        write_loss_curve_header(curve);
    }

    Gradients grads = ck.model.params().make_gradients();
    std::vector<std::size_t> order(scenes.size());
    std::vector<const SceneBatch*> batch;
    bool done = config.max_iterations != 0 && ck.iteration >= config.max_iterations;
    for (std::size_t epoch = 0; epoch < config.epochs && !done; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        shuffle(std::span<std::size_t>(order), shuffle_rng);
        Real epoch_total = 0;
        std::size_t epoch_batches = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            batch.clear();
            for (std::size_t k = start; k < end; ++k) batch.push_back(&scenes[order[k]]);

            grads.zero();
            const LossBreakdown loss = total_loss(ck.model, batch, config.loss, loss_rng, &grads);
            if (!std::isfinite(loss.total)) {
                throw NumericError("non-finite loss at iteration " + std::to_string(ck.iteration));
            }
            adam_step(ck.model.params(), grads, ck.adam, config.adam);
            ++ck.iteration;

            const LossRecord record{ck.iteration, epoch, config.loss.lambda * loss.coherence, loss.variety,
                                    loss.total};
            result.curve.push_back(record);
            if (curve.is_open()) write_loss_record(curve, record);
            epoch_total += loss.total;
            ++epoch_batches;
            if (config.max_iterations != 0 && ck.iteration >= config.max_iterations) {
                done = true;
                break;
            }
        }
        ck.epoch = epoch + 1;
        if (options.log) {
            *options.log << "epoch " << ck.epoch << " iteration " << ck.iteration << " mean_loss "
                         << epoch_total / static_cast<Real>(std::max<std::size_t>(1, epoch_batches)) << '\n';
        }
        const bool last = done || ck.epoch == config.epochs;
        if (options.out_dir && (last || ck.epoch % config.checkpoint_every == 0)) {
            save_checkpoint(*options.out_dir / ("epoch-" + std::to_string(ck.epoch) + ".ckpt"), ck);
            save_checkpoint(*options.out_dir / "last.ckpt", ck);
        }
        if (curve.is_open()) curve.flush();
    }
    return result;
}

MetricsReport evaluate(const Model& model, std::span<const SceneBatch> scenes, const EvalOptions& options) {
    if (options.samples == 0) throw std::invalid_argument("evaluate: samples must be positive");
    Rng rng(options.seed);
    MetricsAccumulator acc;
    for (const SceneBatch& scene : scenes) {
        if (scene.future.size() != scene.agent_count()) {
            throw std::invalid_argument("evaluate: scene '" + scene.id + "' has no ground truth");
        }
        // A child stream per scene: sample k of a scene is the same whatever `samples` is,
        // so best-of-m results are nested in m.
        Rng scene_rng = rng.split();
        const PredictionSet preds = model.predict(scene, options.samples, scene_rng);
        if (!options.nonlinear_only) {
            add_best_of_m(acc, scene.future, preds, options.samples);
            continue;
        }
        std::vector<std::size_t> keep;
        for (std::size_t i = 0; i < scene.agent_count(); ++i) {
            Track full = scene.observed[i];
            full.insert(full.end(), scene.future[i].begin(), scene.future[i].end());
            if (nonlinear_filter(full, options.nonlinear_threshold)) keep.push_back(i);
        }
        if (keep.empty()) continue;
        std::vector<Track> gt;
        PredictionSet subset;
        subset.samples.resize(preds.samples.size());
        for (std::size_t i : keep) {
            gt.push_back(scene.future[i]);
            for (std::size_t k = 0; k < preds.samples.size(); ++k) subset.samples[k].push_back(preds.samples[k][i]);
        }
        add_best_of_m(acc, gt, subset, options.samples);
    }
    return acc.report();
}

}  // namespace dscmp
