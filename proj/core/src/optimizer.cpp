#include "zfm/optimizer.hpp"

#include <algorithm>
#include <cmath>

namespace zfm {

OptimizerState OptimizerState::init(const OptimizerConfig& cfg, const ModelParams& params) {
    OptimizerState s;
    s.cfg = cfg;
    bool adam_family = cfg.kind != OptimizerKind::Adagrad;
    if (adam_family) {
        s.m_w.assign(params.w.size(), 0.0f);
        s.m_v.assign(params.v.size(), 0.0f);
    }
    s.v_w.assign(params.w.size(), 0.0f);
    s.v_v.assign(params.v.size(), 0.0f);
    for (const auto& l : params.mlp) {
        DenseLayer z;
        z.in = l.in;
        z.out = l.out;
        z.weights.assign(l.weights.size(), 0.0f);
        z.bias.assign(l.bias.size(), 0.0f);
        s.v_mlp.push_back(z);
        if (adam_family) s.m_mlp.push_back(z);
    }
    if (cfg.kind == OptimizerKind::LazyAdam)
        s.t_row.assign(params.n_features, 0);
    return s;
}

size_t OptimizerState::moment_value_count() const {
    size_t n = v_w.size() + v_v.size() + 1;
    for (const auto& l : v_mlp) n += l.weights.size() + l.bias.size();
    if (!m_w.empty()) {
        n += m_w.size() + m_v.size() + 1;
        for (const auto& l : m_mlp) n += l.weights.size() + l.bias.size();
    }
    return n;
}

namespace {

void check_shapes(const ModelParams& params, const OptimizerState& state,
                  const SparseGradient& grad) {
    if (state.v_w.size() != params.w.size() || state.v_v.size() != params.v.size())
        throw ValidationError("optimizer state shape does not match model");
    if (grad.g_w.size() != grad.rows.size() ||
        grad.g_v.size() != grad.rows.size() * params.k)
        throw ValidationError("gradient shape inconsistent");
    if (!grad.rows.empty() && grad.rows.back() >= params.n_features)
        throw ValidationError("gradient row out of range");
    if (grad.g_mlp.size() != params.mlp.size())
        throw ValidationError("MLP gradient layer count mismatch");
    for (size_t l = 0; l < grad.g_mlp.size(); ++l)
        if (grad.g_mlp[l].weights.size() != params.mlp[l].weights.size() ||
            grad.g_mlp[l].bias.size() != params.mlp[l].bias.size())
            throw ValidationError("MLP gradient layer shape mismatch");
}

inline void adagrad_one(float& theta, float& v, double g, float lr, float eps) {
    double vn = double(v) + g * g;
    v = float(vn);
    theta = float(double(theta) - double(lr) * g / (std::sqrt(vn) + double(eps)));
}

inline void adam_one(float& theta, float& m, float& v, double g, double bc1, double bc2,
                     const OptimizerConfig& c) {
    double mn = double(c.beta1) * m + (1.0 - c.beta1) * g;
    double vn = double(c.beta2) * v + (1.0 - c.beta2) * g * g;
    m = float(mn);
    v = float(vn);
    double mhat = mn / bc1;
    double vhat = vn / bc2;
    theta = float(double(theta) - double(c.lr) * mhat / (std::sqrt(vhat) + double(c.eps)));
}

}  // namespace

void adagrad_step(ModelParams& params, OptimizerState& state, const SparseGradient& grad) {
    check_shapes(params, state, grad);
    const auto& c = state.cfg;
    uint64_t touched = 1;
    adagrad_one(params.w0, state.v_w0, grad.g_w0, c.lr, c.eps);
    const uint32_t k = params.k;
    for (size_t s = 0; s < grad.rows.size(); ++s) {
        uint32_t r = grad.rows[s];
        adagrad_one(params.w[r], state.v_w[r], grad.g_w[s], c.lr, c.eps);
        for (uint32_t f = 0; f < k; ++f)
            adagrad_one(params.v[size_t(r) * k + f], state.v_v[size_t(r) * k + f],
                        grad.g_v[s * k + f], c.lr, c.eps);
        touched += k + 1;
    }
    for (size_t l = 0; l < params.mlp.size(); ++l) {
        auto& pl = params.mlp[l];
        auto& vl = state.v_mlp[l];
        const auto& gl = grad.g_mlp[l];
        for (size_t i = 0; i < pl.weights.size(); ++i)
            adagrad_one(pl.weights[i], vl.weights[i], gl.weights[i], c.lr, c.eps);
        for (size_t i = 0; i < pl.bias.size(); ++i)
            adagrad_one(pl.bias[i], vl.bias[i], gl.bias[i], c.lr, c.eps);
        touched += pl.weights.size() + pl.bias.size();
    }
    state.t_global++;
    state.touched_entries_last_step = touched;
    state.touched_entries_total += touched;
}

void adam_step(ModelParams& params, OptimizerState& state, const SparseGradient& grad) {
    check_shapes(params, state, grad);
    const auto& c = state.cfg;
    state.t_global++;
    double bc1 = 1.0 - std::pow(double(c.beta1), double(state.t_global));
    double bc2 = 1.0 - std::pow(double(c.beta2), double(state.t_global));

    adam_one(params.w0, state.m_w0, state.v_w0, grad.g_w0, bc1, bc2, c);
    uint64_t touched = 1;

    // dense semantics: every row's moments decay each step, gradient or not
    const uint32_t k = params.k;
    size_t s = 0;
    for (uint32_t r = 0; r < params.n_features; ++r) {
        bool active = s < grad.rows.size() && grad.rows[s] == r;
        double gw = active ? double(grad.g_w[s]) : 0.0;
        adam_one(params.w[r], state.m_w[r], state.v_w[r], gw, bc1, bc2, c);
        for (uint32_t f = 0; f < k; ++f) {
            double gv = active ? double(grad.g_v[s * k + f]) : 0.0;
            size_t idx = size_t(r) * k + f;
            adam_one(params.v[idx], state.m_v[idx], state.v_v[idx], gv, bc1, bc2, c);
        }
        if (active) ++s;
        touched += k + 1;
    }

    for (size_t l = 0; l < params.mlp.size(); ++l) {
        auto& pl = params.mlp[l];
        const auto& gl = grad.g_mlp[l];
        for (size_t i = 0; i < pl.weights.size(); ++i)
            adam_one(pl.weights[i], state.m_mlp[l].weights[i], state.v_mlp[l].weights[i],
                     gl.weights[i], bc1, bc2, c);
        for (size_t i = 0; i < pl.bias.size(); ++i)
            adam_one(pl.bias[i], state.m_mlp[l].bias[i], state.v_mlp[l].bias[i],
                     gl.bias[i], bc1, bc2, c);
        touched += pl.weights.size() + pl.bias.size();
    }
    state.touched_entries_last_step = touched;
    state.touched_entries_total += touched;
}

void lazy_adam_step(ModelParams& params, OptimizerState& state, const SparseGradient& grad) {
    check_shapes(params, state, grad);
    if (state.t_row.size() != params.n_features)
        throw ValidationError("lazy Adam state missing per-row counters");
    const auto& c = state.cfg;
    state.t_global++;
    double bc1g = 1.0 - std::pow(double(c.beta1), double(state.t_global));
    double bc2g = 1.0 - std::pow(double(c.beta2), double(state.t_global));

    adam_one(params.w0, state.m_w0, state.v_w0, grad.g_w0, bc1g, bc2g, c);
    uint64_t touched = 1;

    // sparse groups: only rows in the gradient support, bias-corrected by
    // each row's own update count
    const uint32_t k = params.k;
    for (size_t s = 0; s < grad.rows.size(); ++s) {
        uint32_t r = grad.rows[s];
        uint32_t t = ++state.t_row[r];
        double bc1 = 1.0 - std::pow(double(c.beta1), double(t));
        double bc2 = 1.0 - std::pow(double(c.beta2), double(t));
        adam_one(params.w[r], state.m_w[r], state.v_w[r], grad.g_w[s], bc1, bc2, c);
        for (uint32_t f = 0; f < k; ++f) {
            size_t idx = size_t(r) * k + f;
            adam_one(params.v[idx], state.m_v[idx], state.v_v[idx],
                     double(grad.g_v[s * k + f]), bc1, bc2, c);
        }
        touched += k + 1;
    }

    for (size_t l = 0; l < params.mlp.size(); ++l) {
        auto& pl = params.mlp[l];
        const auto& gl = grad.g_mlp[l];
        for (size_t i = 0; i < pl.weights.size(); ++i)
            adam_one(pl.weights[i], state.m_mlp[l].weights[i], state.v_mlp[l].weights[i],
                     gl.weights[i], bc1g, bc2g, c);
        for (size_t i = 0; i < pl.bias.size(); ++i)
            adam_one(pl.bias[i], state.m_mlp[l].bias[i], state.v_mlp[l].bias[i],
                     gl.bias[i], bc1g, bc2g, c);
        touched += pl.weights.size() + pl.bias.size();
    }
    state.touched_entries_last_step = touched;
    state.touched_entries_total += touched;
}

void optimizer_step(ModelParams& params, OptimizerState& state, const SparseGradient& grad) {
    switch (state.cfg.kind) {
        case OptimizerKind::Adagrad: adagrad_step(params, state, grad); break;
        case OptimizerKind::Adam: adam_step(params, state, grad); break;
        case OptimizerKind::LazyAdam: lazy_adam_step(params, state, grad); break;
    }
}

}  // namespace zfm
