#include "dscmp/icm.hpp"

#include <cmath>
#include <stdexcept>

namespace dscmp {

namespace {

// pre = W x + U h + b, accumulated in that order.
Vec gate_preactivation(const ParamStore& store, ParamId w, ParamId u, ParamId b, std::span<const Real> x,
                       std::span<const Real> h) {
    Vec pre = matvec(store.value(w), x);
    matvec_acc(store.value(u), h, pre.span());
    pre += store.value(b).span();
    return pre;
}

void uniform_init(Mat& m, Rng& rng, Real bound) {
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = static_cast<Real>((2.0 * rng.uniform() - 1.0) * bound);
}

}  // namespace

IcmParams IcmParams::declare(ParamStore& store, const std::string& prefix, std::size_t input_width,
                             std::size_t hidden_width) {
    if (input_width == 0 || hidden_width == 0) throw std::invalid_argument("IcmParams: zero width");
    IcmParams p;
    p.input_width = input_width;
    p.hidden_width = hidden_width;
    const std::size_t d = input_width, h = hidden_width;
    p.w_input = store.add(prefix + ".W_input", h, d);
    p.w_forget = store.add(prefix + ".W_forget", h, d);
    p.w_output = store.add(prefix + ".W_output", h, d);
    p.w_update = store.add(prefix + ".W_update", h, d);
    p.u_input = store.add(prefix + ".U_input", h, h);
    p.u_forget = store.add(prefix + ".U_forget", h, h);
    p.u_output = store.add(prefix + ".U_output", h, h);
    p.u_update = store.add(prefix + ".U_update", h, h);
    p.b_input = store.add(prefix + ".b_input", h, 1);
    p.b_forget = store.add(prefix + ".b_forget", h, 1);
    p.b_output = store.add(prefix + ".b_output", h, 1);
    p.b_update = store.add(prefix + ".b_update", h, 1);
    return p;
}

void init_icm(ParamStore& store, const IcmParams& p, Rng& rng, Real forget_bias) {
    const Real bound = Real(1) / std::sqrt(static_cast<Real>(p.hidden_width));
    for (ParamId id : {p.w_input, p.w_forget, p.w_output, p.w_update, p.u_input, p.u_forget, p.u_output,
                       p.u_update}) {
        uniform_init(store.mutable_value(id), rng, bound);
    }
    for (ParamId id : {p.b_input, p.b_output, p.b_update}) store.mutable_value(id).fill(Real(0));
    store.mutable_value(p.b_forget).fill(forget_bias);
}

IcmStep icm_forward(const ParamStore& store, const IcmParams& p, std::span<const Real> motion,
                    const FeatureQueue& queue) {
    if (motion.size() != p.input_width) throw ShapeError("icm_forward: motion width does not match parameters");
    if (queue.width() != p.hidden_width) throw ShapeError("icm_forward: queue width does not match parameters");

    IcmStep step;
    IcmCache& c = step.cache;
    c.store = &store;
    c.version = store.version();
    c.motion = Vec(motion);
    const std::size_t q = queue.length();
    c.child_hidden.reserve(q);
    c.child_cell.reserve(q);
    for (std::size_t s = 0; s < q; ++s) {
        c.child_hidden.push_back(queue.hidden(s));
        c.child_cell.push_back(queue.cell(s));
    }
    c.mean_hidden = mean_hidden(queue);

    c.input_gate = sigmoid(gate_preactivation(store, p.w_input, p.u_input, p.b_input, motion, c.mean_hidden));
    c.output_gate = sigmoid(gate_preactivation(store, p.w_output, p.u_output, p.b_output, motion, c.mean_hidden));
    c.update = tanh(gate_preactivation(store, p.w_update, p.u_update, p.b_update, motion, c.mean_hidden));

    c.cell = hadamard(c.input_gate, c.update);
    c.forget_gates.reserve(q);
    for (std::size_t s = 0; s < q; ++s) {
        c.forget_gates.push_back(
            sigmoid(gate_preactivation(store, p.w_forget, p.u_forget, p.b_forget, motion, c.child_hidden[s])));
        const Vec& f = c.forget_gates.back();
        const Vec& child = c.child_cell[s];
        for (std::size_t k = 0; k < c.cell.size(); ++k) c.cell[k] += f[k] * child[k];
    }
    c.tanh_cell = tanh(c.cell);
    step.hidden = hadamard(c.output_gate, c.tanh_cell);
    step.cell = c.cell;
    return step;
}

IcmInputGrads icm_backward(const ParamStore& store, const IcmParams& p, const IcmCache& c,
                           std::span<const Real> d_hidden, std::span<const Real> d_cell, Gradients& grads) {
    if (c.store != &store || c.version != store.version()) {
        throw std::logic_error("icm_backward: stale cache (parameters changed since the forward pass)");
    }
    const std::size_t h = p.hidden_width;
    if (d_hidden.size() != h || d_cell.size() != h) throw ShapeError("icm_backward: upstream gradient width");
    const std::size_t q = c.child_hidden.size();

    // dc = dc_ext + dh * o * (1 - tanh(c)^2)
    Vec dc(h), d_pre_input(h), d_pre_output(h), d_pre_update(h);
    for (std::size_t k = 0; k < h; ++k) {
        const Real th = c.tanh_cell[k];
        dc[k] = d_cell[k] + d_hidden[k] * c.output_gate[k] * (Real(1) - th * th);
        const Real o = c.output_gate[k];
        d_pre_output[k] = d_hidden[k] * th * o * (Real(1) - o);
        const Real g = c.input_gate[k];
        d_pre_input[k] = dc[k] * c.update[k] * g * (Real(1) - g);
        const Real u = c.update[k];
        d_pre_update[k] = dc[k] * g * (Real(1) - u * u);
    }

    IcmInputGrads out;
    out.d_motion = Vec(p.input_width);
    Vec d_mean(h);

    const auto accumulate_gate = [&](ParamId w, ParamId u, ParamId b, const Vec& d_pre, std::span<const Real> x,
                                     std::span<const Real> hid, std::span<Real> d_hid) {
        add_outer(grads[w], d_pre, x);
        add_outer(grads[u], d_pre, hid);
        axpy(Real(1), d_pre, grads[b].span());
        matvec_t_acc(store.value(w), d_pre, out.d_motion.span());
        matvec_t_acc(store.value(u), d_pre, d_hid);
    };
    accumulate_gate(p.w_input, p.u_input, p.b_input, d_pre_input, c.motion, c.mean_hidden, d_mean.span());
    accumulate_gate(p.w_output, p.u_output, p.b_output, d_pre_output, c.motion, c.mean_hidden, d_mean.span());
    accumulate_gate(p.w_update, p.u_update, p.b_update, d_pre_update, c.motion, c.mean_hidden, d_mean.span());

    out.d_hidden.assign(q, Vec(h));
    out.d_cell.assign(q, Vec(h));
    const Real inv_q = Real(1) / static_cast<Real>(q);
    for (std::size_t s = 0; s < q; ++s) {
        const Vec& f = c.forget_gates[s];
        Vec d_pre_forget(h);
        for (std::size_t k = 0; k < h; ++k) {
            d_pre_forget[k] = dc[k] * c.child_cell[s][k] * f[k] * (Real(1) - f[k]);
            out.d_cell[s][k] = dc[k] * f[k];
        }
        accumulate_gate(p.w_forget, p.u_forget, p.b_forget, d_pre_forget, c.motion, c.child_hidden[s],
                        out.d_hidden[s].span());
        axpy(inv_q, d_mean, out.d_hidden[s].span());
    }
    return out;
}

}  // namespace dscmp
