#include "dscmp/scene_latent.hpp"

#include <cmath>
#include <stdexcept>

namespace dscmp {

namespace {

void uniform_init(Mat& m, Rng& rng, double bound) {
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = static_cast<Real>((2.0 * rng.uniform() - 1.0) * bound);
}

std::size_t conv_extent(std::size_t in, std::size_t kernel, std::size_t stride) {
    if (in < kernel) return 0;
    return (in - kernel) / stride + 1;
}

// Valid convolution; weight row co is laid out as (c, ky, kx).
Volume conv_forward(const Volume& in, const Mat& w, const Mat& b, std::size_t kernel, std::size_t stride) {
    Volume out;
    out.channels = w.rows();
    out.height = conv_extent(in.height, kernel, stride);
    out.width = conv_extent(in.width, kernel, stride);
    out.values.assign(out.channels * out.height * out.width, Real(0));
    for (std::size_t co = 0; co < out.channels; ++co) {
        const Real* wrow = w.data() + co * w.cols();
        for (std::size_t oy = 0; oy < out.height; ++oy) {
            for (std::size_t ox = 0; ox < out.width; ++ox) {
                Real acc = b[co];
                const Real* wk = wrow;
                for (std::size_t c = 0; c < in.channels; ++c) {
                    for (std::size_t ky = 0; ky < kernel; ++ky) {
                        const Real* src = &in.values[(c * in.height + oy * stride + ky) * in.width + ox * stride];
                        for (std::size_t kx = 0; kx < kernel; ++kx) acc += wk[kx] * src[kx];
                        wk += kernel;
                    }
                }
                out.at(co, oy, ox) = acc;
            }
        }
    }
    return out;
}

// d_out is the gradient w.r.t. the pre-activation output. d_in may be null.
void conv_backward(const Volume& in, const Volume& d_out, const Mat& w, Mat& dw, Mat& db, std::size_t kernel,
                   std::size_t stride, Volume* d_in) {
    for (std::size_t co = 0; co < d_out.channels; ++co) {
        const Real* wrow = w.data() + co * w.cols();
        Real* dwrow = dw.data() + co * dw.cols();
        for (std::size_t oy = 0; oy < d_out.height; ++oy) {
            for (std::size_t ox = 0; ox < d_out.width; ++ox) {
                const Real g = d_out.at(co, oy, ox);
                if (g == Real(0)) continue;
                db[co] += g;
                std::size_t k = 0;
                for (std::size_t c = 0; c < in.channels; ++c) {
                    for (std::size_t ky = 0; ky < kernel; ++ky) {
                        const std::size_t base = (c * in.height + oy * stride + ky) * in.width + ox * stride;
                        for (std::size_t kx = 0; kx < kernel; ++kx, ++k) {
                            dwrow[k] += g * in.values[base + kx];
                            if (d_in) d_in->values[base + kx] += g * wrow[k];
                        }
                    }
                }
            }
        }
    }
}

void require_fresh(const ParamStore& store, const ParamStore* cached, std::uint64_t version, const char* who) {
    if (cached != &store || version != store.version()) {
        throw std::logic_error(std::string(who) + ": stale cache (parameters changed since the forward pass)");
    }
}

}  // namespace

SceneEncoderParams SceneEncoderParams::declare(ParamStore& store, const std::string& prefix,
                                               const SceneEncoderConfig& config) {
    if (config.conv_channels[2] != config.feature_width) {
        throw ShapeError("scene encoder: map feature width " + std::to_string(config.conv_channels[2]) +
                         " does not match motion embedding width " + std::to_string(config.feature_width));
    }
    if (config.latent == 0 || config.obs_len == 0 || config.map_channels == 0) {
        throw std::invalid_argument("scene encoder: zero-sized configuration");
    }
    SceneEncoderParams p;
    p.config = config;
    std::size_t in_channels = config.map_channels;
    for (std::size_t l = 0; l < 3; ++l) {
        if (config.kernels[l] == 0 || config.strides[l] == 0 || config.conv_channels[l] == 0) {
            throw std::invalid_argument("scene encoder: zero-sized convolution");
        }
        const std::string name = prefix + ".conv" + std::to_string(l + 1);
        p.conv_w[l] = store.add(name + ".W", config.conv_channels[l], in_channels * config.kernels[l] * config.kernels[l]);
        p.conv_b[l] = store.add(name + ".b", config.conv_channels[l], 1);
        in_channels = config.conv_channels[l];
    }
    p.motion_w = store.add(prefix + ".motion.W", config.feature_width, 2 * config.obs_len);
    p.motion_b = store.add(prefix + ".motion.b", config.feature_width, 1);
    p.fc_w = store.add(prefix + ".fc.W", 2 * config.latent, config.feature_width);
    p.fc_b = store.add(prefix + ".fc.b", 2 * config.latent, 1);
    return p;
}

void init_scene_encoder(ParamStore& store, const SceneEncoderParams& p, Rng& rng) {
    for (std::size_t l = 0; l < 3; ++l) {
        Mat& w = store.mutable_value(p.conv_w[l]);
        uniform_init(w, rng, 1.0 / std::sqrt(static_cast<double>(w.cols())));
        store.mutable_value(p.conv_b[l]).fill(Real(0));
    }
    for (ParamId w : {p.motion_w, p.fc_w}) {
        Mat& m = store.mutable_value(w);
        uniform_init(m, rng, 1.0 / std::sqrt(static_cast<double>(m.cols())));
    }
    store.mutable_value(p.motion_b).fill(Real(0));
    Mat& fc_b = store.mutable_value(p.fc_b);
    fc_b.fill(Real(0));
    for (std::size_t k = p.config.latent; k < fc_b.rows(); ++k) fc_b[k] = p.config.sigma_bias;
}

MapFeature encode_map(const ParamStore& store, const SceneEncoderParams& p, const SemanticMap& map) {
    const SceneEncoderConfig& cfg = p.config;
    if (map.channels != cfg.map_channels) {
        throw ShapeError("encode_map: map has " + std::to_string(map.channels) + " channels, encoder expects " +
                         std::to_string(cfg.map_channels));
    }
    MapFeature out;
    MapFeatureCache& cache = out.cache;
    cache.store = &store;
    cache.version = store.version();

    Volume current{map.channels, map.height, map.width, map.values};
    for (std::size_t l = 0; l < 3; ++l) {
        if (conv_extent(current.height, cfg.kernels[l], cfg.strides[l]) == 0 ||
            conv_extent(current.width, cfg.kernels[l], cfg.strides[l]) == 0) {
            throw ShapeError("encode_map: conv layer " + std::to_string(l + 1) + " kernel does not fit a " +
                             std::to_string(current.height) + "x" + std::to_string(current.width) + " input");
        }
        Volume next = conv_forward(current, store.value(p.conv_w[l]), store.value(p.conv_b[l]), cfg.kernels[l],
                                   cfg.strides[l]);
        if (l < 2) {
            for (auto& v : next.values) v = std::tanh(v);
        }
        cache.inputs[l] = std::move(current);
        current = next;
        cache.outputs[l] = std::move(next);
    }

    const Volume& last = cache.outputs[2];
    const std::size_t area = last.height * last.width;
    out.pooled = Vec(last.channels);
    for (std::size_t c = 0; c < last.channels; ++c) {
        Real acc = 0;
        for (std::size_t k = 0; k < area; ++k) acc += last.values[c * area + k];
        out.pooled[c] = acc / static_cast<Real>(area);
    }
    return out;
}

void encode_map_backward(const ParamStore& store, const SceneEncoderParams& p, const MapFeatureCache& cache,
                         std::span<const Real> d_pooled, Gradients& grads) {
    require_fresh(store, cache.store, cache.version, "encode_map_backward");
    const SceneEncoderConfig& cfg = p.config;
    const Volume& last = cache.outputs[2];
    if (d_pooled.size() != last.channels) throw ShapeError("encode_map_backward: gradient width");

    const std::size_t area = last.height * last.width;
    Volume d_out{last.channels, last.height, last.width, std::vector<Real>(last.values.size())};
    for (std::size_t c = 0; c < last.channels; ++c) {
        const Real g = d_pooled[c] / static_cast<Real>(area);
        for (std::size_t k = 0; k < area; ++k) d_out.values[c * area + k] = g;
    }

    for (std::size_t li = 3; li-- > 0;) {
        if (li < 2) {
            // through tanh
            const Volume& y = cache.outputs[li];
            for (std::size_t k = 0; k < d_out.values.size(); ++k) {
                d_out.values[k] *= Real(1) - y.values[k] * y.values[k];
            }
        }
        const Volume& in = cache.inputs[li];
        Volume d_in;
        Volume* d_in_ptr = nullptr;
        if (li > 0) {
            d_in = Volume{in.channels, in.height, in.width, std::vector<Real>(in.values.size())};
            d_in_ptr = &d_in;
        }
        conv_backward(in, d_out, store.value(p.conv_w[li]), grads[p.conv_w[li]], grads[p.conv_b[li]],
                      cfg.kernels[li], cfg.strides[li], d_in_ptr);
        if (li > 0) d_out = std::move(d_in);
    }
}

Vec summed_motion(std::span<const Track> observed, std::size_t obs_len) {
    Vec out(2 * obs_len);
    for (const Track& track : observed) {
        if (track.size() != obs_len) {
            throw ShapeError("summed_motion: track has " + std::to_string(track.size()) + " frames, expected " +
                             std::to_string(obs_len));
        }
        for (std::size_t t = 0; t < obs_len; ++t) {
            out[2 * t] += track[t].x;
            out[2 * t + 1] += track[t].y;
        }
    }
    return out;
}

LatentOutput latent_head(const ParamStore& store, const SceneEncoderParams& p, std::span<const Real> pooled,
                         std::span<const Real> motion) {
    const SceneEncoderConfig& cfg = p.config;
    if (pooled.size() != cfg.feature_width) throw ShapeError("latent_head: map feature width mismatch");
    if (motion.size() != 2 * cfg.obs_len) throw ShapeError("latent_head: motion width mismatch");

    LatentOutput out;
    LatentCache& c = out.cache;
    c.store = &store;
    c.version = store.version();
    c.motion = Vec(motion);
    c.fused = matvec(store.value(p.motion_w), motion);
    c.fused += store.value(p.motion_b).span();
    c.fused += pooled;
    c.raw = matvec(store.value(p.fc_w), c.fused);
    c.raw += store.value(p.fc_b).span();

    const std::size_t z = cfg.latent;
    out.mu = Vec(z);
    out.sigma = Vec(z);
    for (std::size_t k = 0; k < z; ++k) {
        out.mu[k] = sigmoid(c.raw[k]);
        out.sigma[k] = cfg.sigma == SigmaTransform::sigmoid ? sigmoid(c.raw[z + k]) : softplus(c.raw[z + k]);
    }
    return out;
}

Vec latent_head_backward(const ParamStore& store, const SceneEncoderParams& p, const LatentCache& c,
                         std::span<const Real> d_mu, std::span<const Real> d_sigma, Gradients& grads) {
    require_fresh(store, c.store, c.version, "latent_head_backward");
    const std::size_t z = p.config.latent;
    if (d_mu.size() != z || d_sigma.size() != z) throw ShapeError("latent_head_backward: gradient width");

    Vec d_raw(2 * z);
    for (std::size_t k = 0; k < z; ++k) {
        const Real m = sigmoid(c.raw[k]);
        d_raw[k] = d_mu[k] * m * (Real(1) - m);
        const Real s = sigmoid(c.raw[z + k]);
        // d softplus(x)/dx = sigmoid(x)
        d_raw[z + k] = p.config.sigma == SigmaTransform::sigmoid ? d_sigma[k] * s * (Real(1) - s) : d_sigma[k] * s;
    }
    add_outer(grads[p.fc_w], d_raw, c.fused);
    axpy(Real(1), d_raw, grads[p.fc_b].span());
    Vec d_fused = matvec_t(store.value(p.fc_w), d_raw);
    add_outer(grads[p.motion_w], d_fused, c.motion);
    axpy(Real(1), d_fused, grads[p.motion_b].span());
    return d_fused;
}

LatentOutput encode_scene(const ParamStore& store, const SceneEncoderParams& params, const SemanticMap& map,
                          std::span<const Track> observed_displacements) {
    const MapFeature feature = encode_map(store, params, map);
    return latent_head(store, params, feature.pooled, summed_motion(observed_displacements, params.config.obs_len));
}

Vec sample_latent(std::span<const Real> mu, std::span<const Real> sigma, Rng& rng) {
    return sample_gaussian(rng, mu, sigma);
}

}  // namespace dscmp
