#include "zfm/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace zfm {

size_t ModelParams::weight_count() const {
    size_t n = 1 + w.size() + v.size();
    for (const auto& l : mlp) n += l.weights.size() + l.bias.size();
    return n;
}

void ModelParams::validate() const {
    if (n_features == 0 || k == 0)
        throw ValidationError("n_features and k must be positive");
    if (w.size() != n_features || v.size() != size_t(n_features) * k)
        throw ValidationError("w/v sizes inconsistent with dimensions");
    if (arch == Arch::DeepFM) {
        if (n_fields == 0)
            throw ValidationError("DeepFM requires n_fields > 0");
        if (field_starts.size() != n_fields + 1 || field_starts.front() != 0 ||
            field_starts.back() != n_features)
            throw ValidationError("field_starts must partition [0, n_features)");
        for (size_t i = 1; i < field_starts.size(); ++i)
            if (field_starts[i] <= field_starts[i - 1])
                throw ValidationError("field_starts must be strictly increasing");
        if (mlp.empty())
            throw ValidationError("DeepFM requires at least one MLP layer");
        uint32_t width = n_fields * k;
        for (const auto& l : mlp) {
            if (l.in != width || l.weights.size() != size_t(l.in) * l.out ||
                l.bias.size() != l.out)
                throw ValidationError("MLP layer shapes do not chain");
            width = l.out;
        }
        if (width != 1)
            throw ValidationError("final MLP layer must have output width 1");
    }
}

void ModelParams::check_finite() const {
    auto bad = [](float x) { return !std::isfinite(x); };
    if (bad(w0) || std::any_of(w.begin(), w.end(), bad) ||
        std::any_of(v.begin(), v.end(), bad))
        throw ValidationError("non-finite model parameter");
    for (const auto& l : mlp)
        if (std::any_of(l.weights.begin(), l.weights.end(), bad) ||
            std::any_of(l.bias.begin(), l.bias.end(), bad))
            throw ValidationError("non-finite MLP parameter");
}

ModelParams init_model(Arch arch, uint32_t n_features, uint32_t k, uint32_t n_fields,
                       const std::vector<uint32_t>& field_starts,
                       const std::vector<uint32_t>& hidden_sizes, uint64_t seed) {
    ModelParams p;
    p.arch = arch;
    p.n_features = n_features;
    p.k = k;
    p.n_fields = n_fields;
    p.field_starts = field_starts;
    p.w.assign(n_features, 0.0f);
    p.v.resize(size_t(n_features) * k);

    std::mt19937_64 rng(seed);
    float scale = 1.0f / std::sqrt(float(k));
    std::uniform_real_distribution<float> dist(-scale, scale);
    for (auto& x : p.v) x = dist(rng);

    if (arch == Arch::DeepFM) {
        uint32_t in = n_fields * k;
        std::vector<uint32_t> outs(hidden_sizes);
        outs.push_back(1);
        for (uint32_t out : outs) {
            DenseLayer l;
            l.in = in;
            l.out = out;
            l.weights.resize(size_t(in) * out);
            for (auto& x : l.weights) x = dist(rng);
            l.bias.assign(out, 0.0f);
            p.mlp.push_back(std::move(l));
            in = out;
        }
    }
    p.validate();
    return p;
}

namespace {

inline float sigmoid(float x) { return 1.0f / (1.0f + std::exp(-x)); }

void check_ids(const PackedBatch& batch, const ModelParams& params) {
    for (size_t i = 0; i < batch.batch_size(); ++i)
        for (uint32_t j = batch.offsets[i]; j < batch.offsets[i + 1]; ++j)
            if (batch.ids[j] >= params.n_features)
                throw ValidationError("feature id " + std::to_string(batch.ids[j]) +
                                      " out of range in example " + std::to_string(i));
}

// FM logit for one example slice, optionally capturing the per-factor sums
// S_f = sum_i V_{i,f} x_i (needed by backward).
double fm_logit_one(const uint32_t* ids, const float* vals, size_t n,
                    const ModelParams& p, float* factor_sums) {
    double acc = p.w0;
    for (size_t j = 0; j < n; ++j) acc += double(p.w[ids[j]]) * vals[j];
    for (uint32_t f = 0; f < p.k; ++f) {
        double s = 0.0, s2 = 0.0;
        for (size_t j = 0; j < n; ++j) {
            double t = double(p.v[size_t(ids[j]) * p.k + f]) * vals[j];
            s += t;
            s2 += t * t;
        }
        acc += 0.5 * (s * s - s2);
        if (factor_sums) factor_sums[f] = float(s);
    }
    return acc;
}

// Verifies the one-active-id-per-field rule and writes the per-field active
// slot index into field_slot (index into the example's id list).
void resolve_fields(const uint32_t* ids, size_t n, const ModelParams& p,
                    size_t example_index, std::vector<size_t>& field_slot) {
    field_slot.assign(p.n_fields, SIZE_MAX);
    for (size_t j = 0; j < n; ++j) {
        auto it = std::upper_bound(p.field_starts.begin(), p.field_starts.end(), ids[j]);
        size_t field = size_t(it - p.field_starts.begin()) - 1;
        if (field_slot[field] != SIZE_MAX)
            throw ValidationError("example " + std::to_string(example_index) +
                                  " has two active ids in field " + std::to_string(field));
        field_slot[field] = j;
    }
    for (size_t f = 0; f < p.n_fields; ++f)
        if (field_slot[f] == SIZE_MAX)
            throw ValidationError("example " + std::to_string(example_index) +
                                  " is missing field " + std::to_string(f));
}

// MLP forward; act[l] holds layer l's post-activation output, act[0] the input.
double mlp_forward(const std::vector<float>& input, const ModelParams& p,
                   std::vector<std::vector<float>>* act) {
    std::vector<float> cur = input;
    if (act) {
        act->clear();
        act->push_back(cur);
    }
    double out = 0.0;
    for (size_t l = 0; l < p.mlp.size(); ++l) {
        const DenseLayer& layer = p.mlp[l];
        bool last = (l + 1 == p.mlp.size());
        std::vector<float> next(layer.out);
        for (uint32_t o = 0; o < layer.out; ++o) {
            double a = layer.bias[o];
            const float* wrow = layer.weights.data() + size_t(o) * layer.in;
            for (uint32_t i = 0; i < layer.in; ++i) a += double(wrow[i]) * cur[i];
            next[o] = last ? float(a) : std::max(0.0f, float(a));
        }
        if (last) out = next[0];
        cur = std::move(next);
        if (act) act->push_back(cur);
    }
    return out;
}

}  // namespace

std::vector<float> fm_logit(const PackedBatch& batch, const ModelParams& params) {
    batch.validate();
    check_ids(batch, params);
    std::vector<float> out(batch.batch_size());
    for (size_t i = 0; i < batch.batch_size(); ++i) {
        size_t n = batch.offsets[i + 1] - batch.offsets[i];
        out[i] = float(fm_logit_one(batch.ids.data() + batch.offsets[i],
                                    batch.values.data() + batch.offsets[i], n, params,
                                    nullptr));
    }
    return out;
}

std::vector<float> deepfm_logit(const PackedBatch& batch, const ModelParams& params) {
    if (params.arch != Arch::DeepFM)
        throw ValidationError("deepfm_logit requires a DeepFM model");
    batch.validate();
    check_ids(batch, params);
    std::vector<float> out(batch.batch_size());
    std::vector<size_t> field_slot;
    std::vector<float> mlp_in(size_t(params.n_fields) * params.k);
    for (size_t i = 0; i < batch.batch_size(); ++i) {
        const uint32_t* ids = batch.ids.data() + batch.offsets[i];
        const float* vals = batch.values.data() + batch.offsets[i];
        size_t n = batch.offsets[i + 1] - batch.offsets[i];
        resolve_fields(ids, n, params, i, field_slot);
        double logit = fm_logit_one(ids, vals, n, params, nullptr);
        for (size_t f = 0; f < params.n_fields; ++f) {
            size_t j = field_slot[f];
            const float* vrow = params.v.data() + size_t(ids[j]) * params.k;
            for (uint32_t d = 0; d < params.k; ++d)
                mlp_in[f * params.k + d] = vrow[d] * vals[j];
        }
        logit += mlp_forward(mlp_in, params, nullptr);
        out[i] = float(logit);
    }
    return out;
}

std::vector<float> logits(const PackedBatch& batch, const ModelParams& params) {
    return params.arch == Arch::DeepFM ? deepfm_logit(batch, params)
                                       : fm_logit(batch, params);
}

std::vector<float> predict(const PackedBatch& batch, const ModelParams& params) {
    std::vector<float> p = logits(batch, params);
    for (auto& x : p) x = sigmoid(x);
    return p;
}

float logloss(const std::vector<float>& p, const std::vector<uint8_t>& labels) {
    if (p.size() != labels.size())
        throw ValidationError("logloss: length mismatch");
    constexpr float kEps = 1e-7f;
    double acc = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        float pc = std::clamp(p[i], kEps, 1.0f - kEps);
        acc += labels[i] ? -std::log(double(pc)) : -std::log(1.0 - double(pc));
    }
    return p.empty() ? 0.0f : float(acc / double(p.size()));
}

SparseGradient backward(const PackedBatch& batch, const ModelParams& params) {
    batch.validate();
    check_ids(batch, params);
    if (batch.labels.size() != batch.batch_size())
        throw ValidationError("backward requires labels for every example");

    SparseGradient g;
    g.rows = batch.ids;
    std::sort(g.rows.begin(), g.rows.end());
    g.rows.erase(std::unique(g.rows.begin(), g.rows.end()), g.rows.end());

    const uint32_t k = params.k;
    std::vector<double> acc_w(g.rows.size(), 0.0);
    std::vector<double> acc_v(g.rows.size() * k, 0.0);
    double acc_w0 = 0.0;

    std::vector<std::vector<double>> acc_mlp_w, acc_mlp_b;
    for (const auto& l : params.mlp) {
        acc_mlp_w.emplace_back(l.weights.size(), 0.0);
        acc_mlp_b.emplace_back(l.bias.size(), 0.0);
    }

    auto slot_of = [&](uint32_t id) {
        return size_t(std::lower_bound(g.rows.begin(), g.rows.end(), id) - g.rows.begin());
    };

    const double inv_b = 1.0 / double(batch.batch_size());
    std::vector<float> factor_sums(k);
    std::vector<size_t> field_slot;
    std::vector<float> mlp_in(size_t(params.n_fields) * k);
    std::vector<std::vector<float>> act;

    for (size_t i = 0; i < batch.batch_size(); ++i) {
        const uint32_t* ids = batch.ids.data() + batch.offsets[i];
        const float* vals = batch.values.data() + batch.offsets[i];
        size_t n = batch.offsets[i + 1] - batch.offsets[i];

        double logit = fm_logit_one(ids, vals, n, params, factor_sums.data());
        if (params.arch == Arch::DeepFM) {
            resolve_fields(ids, n, params, i, field_slot);
            for (size_t f = 0; f < params.n_fields; ++f) {
                size_t j = field_slot[f];
                const float* vrow = params.v.data() + size_t(ids[j]) * k;
                for (uint32_t d = 0; d < k; ++d)
                    mlp_in[f * k + d] = vrow[d] * vals[j];
            }
            logit += mlp_forward(mlp_in, params, &act);
        }

        // dL/dlogit, averaged over the batch
        double d = (1.0 / (1.0 + std::exp(-logit)) - double(batch.labels[i])) * inv_b;

        acc_w0 += d;
        for (size_t j = 0; j < n; ++j) {
            size_t s = slot_of(ids[j]);
            double x = vals[j];
            acc_w[s] += d * x;
            const float* vrow = params.v.data() + size_t(ids[j]) * k;
            for (uint32_t f = 0; f < k; ++f)
                acc_v[s * k + f] += d * x * (double(factor_sums[f]) - double(vrow[f]) * x);
        }

        if (params.arch == Arch::DeepFM) {
            // backprop through the MLP; delta starts at the scalar output
            std::vector<double> delta{d};
            for (size_t l = params.mlp.size(); l-- > 0;) {
                const DenseLayer& layer = params.mlp[l];
                const std::vector<float>& in_act = act[l];
                std::vector<double> prev(layer.in, 0.0);
                for (uint32_t o = 0; o < layer.out; ++o) {
                    double dl = delta[o];
                    if (dl == 0.0) continue;
                    acc_mlp_b[l][o] += dl;
                    const float* wrow = layer.weights.data() + size_t(o) * layer.in;
                    double* gwrow = acc_mlp_w[l].data() + size_t(o) * layer.in;
                    for (uint32_t c = 0; c < layer.in; ++c) {
                        gwrow[c] += dl * in_act[c];
                        prev[c] += dl * wrow[c];
                    }
                }
                if (l > 0) {
                    // ReLU mask from the post-activation output of layer l-1
                    for (uint32_t c = 0; c < layer.in; ++c)
                        if (act[l][c] <= 0.0f) prev[c] = 0.0;
                }
                delta = std::move(prev);
            }
            // delta now holds the gradient wrt the concatenated embedding input
            for (size_t f = 0; f < params.n_fields; ++f) {
                size_t j = field_slot[f];
                size_t s = slot_of(ids[j]);
                double x = vals[j];
                for (uint32_t dd = 0; dd < k; ++dd)
                    acc_v[s * k + dd] += delta[f * k + dd] * x;
            }
        }
    }

    g.g_w0 = acc_w0;
    g.g_w.resize(g.rows.size());
    g.g_v.resize(g.rows.size() * k);
    for (size_t s = 0; s < g.rows.size(); ++s) {
        g.g_w[s] = float(acc_w[s]);
        for (uint32_t f = 0; f < k; ++f) g.g_v[s * k + f] = float(acc_v[s * k + f]);
    }
    for (size_t l = 0; l < params.mlp.size(); ++l) {
        DenseLayer gl;
        gl.in = params.mlp[l].in;
        gl.out = params.mlp[l].out;
        gl.weights.assign(acc_mlp_w[l].begin(), acc_mlp_w[l].end());
        gl.bias.assign(acc_mlp_b[l].begin(), acc_mlp_b[l].end());
        g.g_mlp.push_back(std::move(gl));
    }
    return g;
}

}  // namespace zfm
