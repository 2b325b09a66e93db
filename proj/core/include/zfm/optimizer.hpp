#ifndef ZFM_OPTIMIZER_HPP
#define ZFM_OPTIMIZER_HPP

#include <cstdint>
#include <vector>

#include "zfm/model.hpp"

namespace zfm {

enum class OptimizerKind : uint8_t { Adagrad = 0, Adam = 1, LazyAdam = 2 };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::LazyAdam;
    float lr = 0.001f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;

    static OptimizerConfig adagrad(float lr = 0.05f) {
        return {OptimizerKind::Adagrad, lr, 0.0f, 0.0f, 1e-8f};
    }
};

// Moment storage mirrors ModelParams layout. Adagrad uses only `v` (the
// accumulated squared gradient); Adam-family uses both m and v. LazyAdam
// additionally keeps a per-row update counter for bias correction.
struct OptimizerState {
    OptimizerConfig cfg;

    float m_w0 = 0.0f, v_w0 = 0.0f;
    std::vector<float> m_w, v_w;      // n_features
    std::vector<float> m_v, v_v;      // n_features * k
    std::vector<DenseLayer> m_mlp, v_mlp;
    uint64_t t_global = 0;
    std::vector<uint32_t> t_row;      // n_features; LazyAdam only

    // per-step instrumentation: parameter entries written by the last step,
    // and a running total
    uint64_t touched_entries_last_step = 0;
    uint64_t touched_entries_total = 0;

    static OptimizerState init(const OptimizerConfig& cfg, const ModelParams& params);

    size_t moment_value_count() const;  // state-size accounting (m + v entries)
};

// Applies one optimizer step in place. Dispatches on state.cfg.kind.
void optimizer_step(ModelParams& params, OptimizerState& state, const SparseGradient& grad);

void adagrad_step(ModelParams& params, OptimizerState& state, const SparseGradient& grad);
void adam_step(ModelParams& params, OptimizerState& state, const SparseGradient& grad);
void lazy_adam_step(ModelParams& params, OptimizerState& state, const SparseGradient& grad);

}  // namespace zfm

#endif
