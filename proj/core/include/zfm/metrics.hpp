#ifndef ZFM_METRICS_HPP
#define ZFM_METRICS_HPP

#include <bit>
#include <cstdint>
#include <string>
#include <vector>

namespace zfm {

// Log-bucketed histogram with 8 sub-buckets per octave (~12.5% resolution).
// Values are microseconds in practice but the type is unit-agnostic.
class LatencyHistogram {
  public:
    void record(uint64_t v) {
        size_t b = bucket_for(v);
        if (buckets_.size() <= b) buckets_.resize(b + 1, 0);
        buckets_[b]++;
        count_++;
        sum_ += v;
        if (v > max_) max_ = v;
    }

    uint64_t count() const { return count_; }
    uint64_t max() const { return max_; }
    double mean() const { return count_ ? double(sum_) / double(count_) : 0.0; }

    // upper bound of the bucket containing the q-quantile
    uint64_t percentile(double q) const {
        if (count_ == 0) return 0;
        uint64_t target = uint64_t(q * double(count_));
        if (target >= count_) target = count_ - 1;
        uint64_t seen = 0;
        for (size_t b = 0; b < buckets_.size(); ++b) {
            seen += buckets_[b];
            if (seen > target) return bucket_upper(b);
        }
        return max_;
    }

    const std::vector<uint64_t>& buckets() const { return buckets_; }

  private:
    static size_t bucket_for(uint64_t v) {
        if (v < 16) return size_t(v);
        int msb = 63 - std::countl_zero(v);
        return 16 + size_t(msb - 4) * 8 + ((v >> (msb - 3)) & 7);
    }
    static uint64_t bucket_upper(size_t b) {
        if (b < 16) return b;
        size_t oct = (b - 16) / 8, sub = (b - 16) % 8;
        int msb = int(oct) + 4;
        return ((uint64_t(8 + sub + 1)) << (msb - 3)) - 1;
    }

    std::vector<uint64_t> buckets_;
    uint64_t count_ = 0, sum_ = 0, max_ = 0;
};

struct ServeMetrics {
    uint64_t requests_total = 0;
    uint64_t compute_calls_total = 0;
    uint64_t examples_computed_total = 0;
    uint64_t timeouts_total = 0;
    uint64_t resolved_probability = 0;
    uint64_t resolved_shutdown = 0;
    uint64_t resolved_validation = 0;
    uint64_t resolved_compute_error = 0;
    uint64_t injected_stalls = 0;

    LatencyHistogram latency_us;            // enqueue -> resolution
    std::vector<uint64_t> batch_size_hist;  // index = batch size

    double avg_batch_size() const {
        return compute_calls_total
                   ? double(examples_computed_total) / double(compute_calls_total)
                   : 0.0;
    }
    uint64_t resolved_total() const {
        return resolved_probability + timeouts_total + resolved_shutdown +
               resolved_validation + resolved_compute_error;
    }

    std::string to_text() const;  // flat key=value lines
    std::string to_json() const;
};

}  // namespace zfm

#endif
