#include "zfm/autobatcher.hpp"

#include <random>
#include <sstream>

#include <json.hpp>

namespace zfm {

using Clock = std::chrono::steady_clock;

namespace detail {
struct TicketState {
    std::mutex mu;
    std::condition_variable cv;
    bool resolved = false;
    Outcome outcome;
    uint64_t id = 0;
    Clock::time_point enqueue_time;
};
}  // namespace detail

Outcome PredictionTicket::wait() {
    std::unique_lock lk(state_->mu);
    state_->cv.wait(lk, [&] { return state_->resolved; });
    return state_->outcome;
}

bool PredictionTicket::ready() const {
    std::lock_guard lk(state_->mu);
    return state_->resolved;
}

uint64_t PredictionTicket::id() const { return state_->id; }

struct BatchEngine::Pending {
    SparseExample example;
    std::shared_ptr<detail::TicketState> state;
    Clock::time_point deadline;
};

BatchEngine::BatchEngine(std::shared_ptr<const ModelParams> model, BatcherConfig cfg)
    : model_(std::move(model)), cfg_(cfg) {
    cfg_.validate();
    model_->validate();
    threads_.reserve(cfg_.n_batcher_threads);
    for (unsigned i = 0; i < cfg_.n_batcher_threads; ++i)
        threads_.emplace_back([this, i] { batcher_loop(i); });
}

BatchEngine::~BatchEngine() {
    shutdown_drain(std::chrono::microseconds(0));
}

// mu_ must be held
void BatchEngine::resolve(const std::shared_ptr<detail::TicketState>& st, Outcome out) {
    {
        std::lock_guard tlk(st->mu);
        if (st->resolved) return;
        st->resolved = true;
        st->outcome = std::move(out);
    }
    auto us = std::chrono::duration_cast<std::chrono::microseconds>(
                  Clock::now() - st->enqueue_time)
                  .count();
    metrics_.latency_us.record(uint64_t(us < 0 ? 0 : us));
    switch (st->outcome.kind) {
        case OutcomeKind::Probability: metrics_.resolved_probability++; break;
        case OutcomeKind::Timeout: metrics_.timeouts_total++; break;
        case OutcomeKind::Shutdown: metrics_.resolved_shutdown++; break;
        case OutcomeKind::Validation: metrics_.resolved_validation++; break;
        case OutcomeKind::ComputeError: metrics_.resolved_compute_error++; break;
    }
    st->cv.notify_all();
}

PredictionTicket BatchEngine::enqueue(SparseExample example) {
    return enqueue(std::move(example), cfg_.request_timeout);
}

PredictionTicket BatchEngine::enqueue(SparseExample example,
                                      std::chrono::microseconds deadline) {
    auto st = std::make_shared<detail::TicketState>();
    st->enqueue_time = Clock::now();
    PredictionTicket ticket;
    ticket.state_ = st;

    std::unique_lock lk(mu_);
    st->id = next_id_++;
    metrics_.requests_total++;
    if (draining_ || stopped_) {
        resolve(st, {OutcomeKind::Shutdown, 0.0f, "engine shut down"});
        return ticket;
    }
    try {
        example.validate();
        if (example.feature_ids.back() >= model_->n_features)
            throw ValidationError("feature id out of range for model");
    } catch (const std::exception& e) {
        resolve(st, {OutcomeKind::Validation, 0.0f, e.what()});
        return ticket;
    }
    queue_.push_back({std::move(example), st, st->enqueue_time + deadline});
    lk.unlock();
    cv_work_.notify_one();
    return ticket;
}

void BatchEngine::batcher_loop(unsigned thread_index) {
    std::mt19937_64 rng(cfg_.stall_seed + thread_index);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    std::unique_lock lk(mu_);
    while (true) {
        cv_work_.wait(lk, [&] { return stopped_ || !queue_.empty(); });
        if (stopped_) return;

        // wait until the batch fills or the oldest waiter ages out
        while (!stopped_ && !queue_.empty() && queue_.size() < cfg_.max_batch &&
               !draining_) {
            auto flush_at = queue_.front().state->enqueue_time + cfg_.flush_interval;
            if (Clock::now() >= flush_at) break;
            cv_work_.wait_until(lk, flush_at);
        }
        if (stopped_) return;
        if (queue_.empty()) continue;

        std::vector<Pending> taken;
        size_t n = std::min(queue_.size(), cfg_.max_batch);
        taken.reserve(n);
        for (size_t i = 0; i < n; ++i) {
            taken.push_back(std::move(queue_.front()));
            queue_.pop_front();
        }
        busy_threads_++;
        bool stall = cfg_.stall_probability > 0.0 && unif(rng) < cfg_.stall_probability;
        lk.unlock();

        if (stall) std::this_thread::sleep_for(cfg_.stall_duration);

        // requests already past deadline are dropped from compute
        auto now = Clock::now();
        PackedBatch batch;
        std::vector<std::shared_ptr<detail::TicketState>> live, late;
        for (auto& p : taken) {
            if (now > p.deadline) {
                late.push_back(p.state);
            } else {
                batch.push(p.example);
                live.push_back(p.state);
            }
        }

        std::vector<float> probs;
        std::string compute_error;
        if (!live.empty()) {
            try {
                probs = predict(batch, *model_);
            } catch (const std::exception& e) {
                compute_error = e.what();
            }
        }

        lk.lock();
        if (stall) metrics_.injected_stalls++;
        for (auto& st : late)
            resolve(st, {OutcomeKind::Timeout, 0.0f, "deadline expired before compute"});
        if (!live.empty()) {
            if (compute_error.empty()) {
                metrics_.compute_calls_total++;
                metrics_.examples_computed_total += live.size();
                if (metrics_.batch_size_hist.size() <= live.size())
                    metrics_.batch_size_hist.resize(live.size() + 1, 0);
                metrics_.batch_size_hist[live.size()]++;
                for (size_t i = 0; i < live.size(); ++i)
                    resolve(live[i], {OutcomeKind::Probability, probs[i], {}});
            } else {
                for (auto& st : live)
                    resolve(st, {OutcomeKind::ComputeError, 0.0f, compute_error});
            }
        }
        busy_threads_--;
        if (queue_.empty() && busy_threads_ == 0) cv_idle_.notify_all();
    }
}

ServeMetrics BatchEngine::metrics_snapshot() const {
    std::lock_guard lk(mu_);
    return metrics_;
}

ServeMetrics BatchEngine::shutdown_drain(std::chrono::microseconds grace) {
    std::unique_lock lk(mu_);
    if (!stopped_) {
        draining_ = true;
        cv_work_.notify_all();
        cv_idle_.wait_until(lk, Clock::now() + grace,
                            [&] { return queue_.empty() && busy_threads_ == 0; });
        stopped_ = true;
        for (auto& p : queue_)
            resolve(p.state, {OutcomeKind::Shutdown, 0.0f, "shut down before compute"});
        queue_.clear();
        cv_work_.notify_all();
        lk.unlock();
        for (auto& t : threads_) t.join();
        threads_.clear();
        lk.lock();
    }
    return metrics_;
}

std::string ServeMetrics::to_text() const {
    std::ostringstream os;
    os << "requests_total=" << requests_total << '\n'
       << "compute_calls_total=" << compute_calls_total << '\n'
       << "examples_computed_total=" << examples_computed_total << '\n'
       << "timeouts_total=" << timeouts_total << '\n'
       << "resolved_probability=" << resolved_probability << '\n'
       << "resolved_shutdown=" << resolved_shutdown << '\n'
       << "resolved_validation=" << resolved_validation << '\n'
       << "resolved_compute_error=" << resolved_compute_error << '\n'
       << "injected_stalls=" << injected_stalls << '\n'
       << "avg_batch_size=" << avg_batch_size() << '\n'
       << "latency_us_p50=" << latency_us.percentile(0.50) << '\n'
       << "latency_us_p95=" << latency_us.percentile(0.95) << '\n'
       << "latency_us_p99=" << latency_us.percentile(0.99) << '\n'
       << "latency_us_max=" << latency_us.max() << '\n';
    return os.str();
}

std::string ServeMetrics::to_json() const {
    nlohmann::json j{
        {"requests_total", requests_total},
        {"compute_calls_total", compute_calls_total},
        {"examples_computed_total", examples_computed_total},
        {"timeouts_total", timeouts_total},
        {"resolved_probability", resolved_probability},
        {"resolved_shutdown", resolved_shutdown},
        {"resolved_validation", resolved_validation},
        {"resolved_compute_error", resolved_compute_error},
        {"injected_stalls", injected_stalls},
        {"avg_batch_size", avg_batch_size()},
        {"latency_us",
         {{"mean", latency_us.mean()},
          {"p50", latency_us.percentile(0.50)},
          {"p95", latency_us.percentile(0.95)},
          {"p99", latency_us.percentile(0.99)},
          {"max", latency_us.max()}}},
        {"batch_size_hist", batch_size_hist},
    };
    return j.dump(2);
}

}  // namespace zfm
