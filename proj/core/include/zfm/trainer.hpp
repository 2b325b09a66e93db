#ifndef ZFM_TRAINER_HPP
#define ZFM_TRAINER_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "zfm/model.hpp"
#include "zfm/optimizer.hpp"
#include "zfm/record_io.hpp"

namespace zfm {

struct TrainConfig {
    Arch arch = Arch::FM;
    uint32_t n_features = 0;
    uint32_t k = 4;
    uint32_t n_fields = 0;
    std::vector<uint32_t> field_starts;
    std::vector<uint32_t> hidden_sizes;
    OptimizerConfig optimizer;
    size_t batch_size = 256;
    uint64_t seed = 42;
    size_t loss_window = 10;  // batches averaged per window-loss entry
};

struct TrainReport {
    uint64_t examples = 0;
    uint64_t steps = 0;
    double wall_seconds = 0.0;       // hardware-dependent
    double examples_per_sec = 0.0;   // hardware-dependent
    double input_wait_seconds = 0.0; // time blocked on the record stream
    std::vector<double> batch_loss;  // progressive (score-before-train) per batch
    std::vector<double> window_loss;
    double mean_progressive_loss = 0.0;
    uint64_t touched_entries_total = 0;

    std::string to_json() const;
};

struct TrainResult {
    ModelParams params;
    OptimizerState state;
    TrainReport report;
};

// Single-pass online training: each mini-batch is scored before the model
// trains on it, so batch_loss doubles as a progressive evaluation.
TrainResult train_stream(RecordStream& stream, const TrainConfig& cfg);

std::vector<double> progressive_eval(RecordStream& stream, const TrainConfig& cfg);

}  // namespace zfm

#endif
