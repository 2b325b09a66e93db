#ifndef ZFM_AUTOBATCHER_HPP
#define ZFM_AUTOBATCHER_HPP

#include <chrono>
#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include "zfm/metrics.hpp"
#include "zfm/model.hpp"

namespace zfm {

struct BatcherConfig {
    size_t max_batch = 64;
    std::chrono::microseconds flush_interval{3000};
    unsigned n_batcher_threads = 2;
    std::chrono::microseconds request_timeout{100000};

    // fault injection: with this probability a flush stalls for stall_duration
    // before computing (used by the timeout-SLA harness; 0 disables)
    double stall_probability = 0.0;
    std::chrono::microseconds stall_duration{0};
    uint64_t stall_seed = 1;

    void validate() const {
        if (max_batch < 1) throw ValidationError("max_batch must be >= 1");
        if (flush_interval >= request_timeout)
            throw ValidationError("flush_interval must be < request_timeout");
        if (n_batcher_threads < 1)
            throw ValidationError("need at least one batcher thread");
    }
};

enum class OutcomeKind : uint8_t { Probability, Timeout, Shutdown, Validation, ComputeError };

struct Outcome {
    OutcomeKind kind;
    float probability = 0.0f;
    std::string message;
};

namespace detail {
struct TicketState;
}

// Handle for one enqueued prediction. wait() blocks until the engine resolves
// it; every ticket resolves exactly once.
class PredictionTicket {
  public:
    Outcome wait();
    bool ready() const;
    uint64_t id() const;

  private:
    friend class BatchEngine;
    std::shared_ptr<detail::TicketState> state_;
};

// In-process autobatching engine. Producers enqueue single examples from any
// thread; batcher threads coalesce them into PackedBatches, flushing on fill
// or when the oldest waiter has aged past flush_interval. The model snapshot
// is immutable for the engine's lifetime.
class BatchEngine {
  public:
    BatchEngine(std::shared_ptr<const ModelParams> model, BatcherConfig cfg = {});
    ~BatchEngine();

    BatchEngine(const BatchEngine&) = delete;
    BatchEngine& operator=(const BatchEngine&) = delete;

    PredictionTicket enqueue(SparseExample example);
    PredictionTicket enqueue(SparseExample example, std::chrono::microseconds deadline);

    ServeMetrics metrics_snapshot() const;

    // Stops accepting enqueues, flushes the queue, resolves anything still
    // pending after `grace` as a shutdown error. Idempotent.
    ServeMetrics shutdown_drain(std::chrono::microseconds grace);

  private:
    struct Pending;
    void batcher_loop(unsigned thread_index);
    void resolve(const std::shared_ptr<detail::TicketState>& st, Outcome out);

    std::shared_ptr<const ModelParams> model_;
    BatcherConfig cfg_;

    mutable std::mutex mu_;
    std::condition_variable cv_work_, cv_idle_;
    std::deque<Pending> queue_;
    bool draining_ = false;
    bool stopped_ = false;
    unsigned busy_threads_ = 0;
    uint64_t next_id_ = 0;

    ServeMetrics metrics_;
    std::vector<std::thread> threads_;
};

}  // namespace zfm

#endif
