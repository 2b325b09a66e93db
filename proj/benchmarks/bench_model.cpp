#include <benchmark/benchmark.h>

#include "zfm/model.hpp"
#include "zfm/synth.hpp"

using namespace zfm;

namespace {

void BM_FmForward(benchmark::State& state) {
    SynthSchema schema{{1000, 1000, 500, 500, 100}};
    ModelParams params =
        init_model(Arch::FM, schema.n_features(), 8, 0, {}, {}, 1);
    SyntheticSource src(schema, 2);
    PackedBatch batch;
    for (int i = 0; i < int(state.range(0)); ++i) batch.push(src.next());
    for (auto _ : state) {
        auto out = fm_logit(batch, params);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(int64_t(state.iterations()) * state.range(0));
}
BENCHMARK(BM_FmForward)->Arg(1)->Arg(16)->Arg(64)->Arg(256);

void BM_DeepFmForward(benchmark::State& state) {
    SynthSchema schema{{1000, 1000, 500, 500, 100}};
    ModelParams params = init_model(Arch::DeepFM, schema.n_features(), 8, 5,
                                    schema.field_starts(), {64, 32}, 1);
    SyntheticSource src(schema, 2);
    PackedBatch batch;
    for (int i = 0; i < int(state.range(0)); ++i) batch.push(src.next());
    for (auto _ : state) {
        auto out = deepfm_logit(batch, params);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(int64_t(state.iterations()) * state.range(0));
}
BENCHMARK(BM_DeepFmForward)->Arg(1)->Arg(64)->Arg(256);

}  // namespace
