#include <benchmark/benchmark.h>

#include "zfm/optimizer.hpp"
#include "zfm/synth.hpp"

using namespace zfm;

namespace {

// Dense Adam touches every row each step; lazy Adam only the gradient
// support. The wall-clock gap here is the desk-scale stand-in for the
// production training speedup.
void bench_optimizer(benchmark::State& state, OptimizerKind kind) {
    SynthSchema schema{{20000, 20000, 10000, 5000}};
    ModelParams params =
        init_model(Arch::FM, schema.n_features(), 8, 0, {}, {}, 1);
    OptimizerConfig cfg;
    cfg.kind = kind;
    OptimizerState st = OptimizerState::init(cfg, params);
    SyntheticSource src(schema, 2);
    PackedBatch batch;
    for (int i = 0; i < 256; ++i) batch.push(src.next());
    SparseGradient grad = backward(batch, params);
    for (auto _ : state) optimizer_step(params, st, grad);
    state.counters["touched_per_step"] =
        double(st.touched_entries_last_step);
}

void BM_DenseAdamStep(benchmark::State& state) {
    bench_optimizer(state, OptimizerKind::Adam);
}
void BM_LazyAdamStep(benchmark::State& state) {
    bench_optimizer(state, OptimizerKind::LazyAdam);
}
void BM_AdagradStep(benchmark::State& state) {
    bench_optimizer(state, OptimizerKind::Adagrad);
}
BENCHMARK(BM_DenseAdamStep);
BENCHMARK(BM_LazyAdamStep);
BENCHMARK(BM_AdagradStep);

}  // namespace
