#include "zfm/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include <json.hpp>

namespace zfm {

TrainResult train_stream(RecordStream& stream, const TrainConfig& cfg) {
    if (cfg.batch_size == 0) throw ValidationError("batch_size must be positive");
    ModelParams params = init_model(cfg.arch, cfg.n_features, cfg.k, cfg.n_fields,
                                    cfg.field_starts, cfg.hidden_sizes, cfg.seed);
    OptimizerState state = OptimizerState::init(cfg.optimizer, params);
    TrainReport report;

    using Clock = std::chrono::steady_clock;
    auto t0 = Clock::now();
    double wait = 0.0;

    while (true) {
        auto w0 = Clock::now();
        std::vector<SparseExample> block = stream.next_examples(cfg.batch_size);
        wait += std::chrono::duration<double>(Clock::now() - w0).count();
        if (block.empty()) break;

        PackedBatch batch;
        for (auto& ex : block) {
            if (!ex.label)
                throw ValidationError("training stream contains unlabeled example");
            batch.push(ex);
        }

        // score before training on the batch
        std::vector<float> probs = predict(batch, params);
        float loss = logloss(probs, batch.labels);
        if (!std::isfinite(loss))
            throw ValidationError("non-finite loss at step " +
                                  std::to_string(report.steps));
        report.batch_loss.push_back(loss);

        SparseGradient grad = backward(batch, params);
        optimizer_step(params, state, grad);
        report.steps++;
        report.examples += batch.batch_size();
    }

    report.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    report.input_wait_seconds = wait;
    report.examples_per_sec =
        report.wall_seconds > 0 ? double(report.examples) / report.wall_seconds : 0.0;
    report.touched_entries_total = state.touched_entries_total;

    for (size_t i = 0; i < report.batch_loss.size(); i += cfg.loss_window) {
        size_t end = std::min(i + cfg.loss_window, report.batch_loss.size());
        double s = std::accumulate(report.batch_loss.begin() + i,
                                   report.batch_loss.begin() + end, 0.0);
        report.window_loss.push_back(s / double(end - i));
    }
    if (!report.batch_loss.empty())
        report.mean_progressive_loss =
            std::accumulate(report.batch_loss.begin(), report.batch_loss.end(), 0.0) /
            double(report.batch_loss.size());

    params.check_finite();
    return {std::move(params), std::move(state), std::move(report)};
}

std::vector<double> progressive_eval(RecordStream& stream, const TrainConfig& cfg) {
    return train_stream(stream, cfg).report.batch_loss;
}

std::string TrainReport::to_json() const {
    nlohmann::json j{
        {"examples", examples},
        {"steps", steps},
        {"wall_seconds", wall_seconds},                // hardware-dependent
        {"examples_per_sec", examples_per_sec},        // hardware-dependent
        {"input_wait_seconds", input_wait_seconds},    // hardware-dependent
        {"window_loss", window_loss},
        {"mean_progressive_loss", mean_progressive_loss},
        {"final_window_loss", window_loss.empty() ? 0.0 : window_loss.back()},
        {"touched_entries_total", touched_entries_total},
    };
    return j.dump(2);
}

}  // namespace zfm
