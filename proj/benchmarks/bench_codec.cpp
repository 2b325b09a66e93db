#include <benchmark/benchmark.h>

#include <sstream>

#include "zfm/record_io.hpp"
#include "zfm/synth.hpp"

using namespace zfm;

namespace {

const SynthSchema kSchema{{100, 100, 100, 50, 50}};
constexpr size_t kExamples = 20000;

// Binary vs CSV decode rate. The paper-era comparison is hardware-bound;
// these numbers are reported, not asserted anywhere.
void BM_BinaryDecode(benchmark::State& state) {
    std::vector<uint8_t> bytes = generate_stream_bytes(kSchema, 1, kExamples);
    for (auto _ : state) {
        size_t pos = kStreamHeaderSize;
        size_t n = 0;
        while (auto ex = decode_record(bytes.data(), bytes.size(), pos)) {
            benchmark::DoNotOptimize(ex->feature_ids.data());
            ++n;
        }
        if (n != kExamples) state.SkipWithError("decode count mismatch");
    }
    state.SetItemsProcessed(int64_t(state.iterations()) * kExamples);
}
BENCHMARK(BM_BinaryDecode);

void BM_CsvDecode(benchmark::State& state) {
    std::string csv = generate_stream_csv(kSchema, 1, kExamples);
    for (auto _ : state) {
        std::istringstream in(csv);
        std::vector<SparseExample> out = csv_decode(in);
        benchmark::DoNotOptimize(out.data());
        if (out.size() != kExamples) state.SkipWithError("decode count mismatch");
    }
    state.SetItemsProcessed(int64_t(state.iterations()) * kExamples);
}
BENCHMARK(BM_CsvDecode);

}  // namespace

BENCHMARK_MAIN();
