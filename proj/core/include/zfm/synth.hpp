#ifndef ZFM_SYNTH_HPP
#define ZFM_SYNTH_HPP

#include <cstdint>
#include <random>
#include <vector>

#include "zfm/types.hpp"

namespace zfm {

// One categorical field per entry; feature ids are the contiguous
// concatenation of the fields' ranges.
struct SynthSchema {
    std::vector<uint32_t> field_cardinalities;

    uint32_t n_features() const {
        uint32_t n = 0;
        for (uint32_t c : field_cardinalities) n += c;
        return n;
    }
    std::vector<uint32_t> field_starts() const {
        std::vector<uint32_t> s{0};
        for (uint32_t c : field_cardinalities) s.push_back(s.back() + c);
        return s;
    }
};

// Labeled-example generator with a planted logistic ground truth: one active
// id per field, label drawn from sigmoid of the planted linear logit. Keeps
// a running Monte-Carlo estimate of the planted model's (Bayes) logloss.
class SyntheticSource {
  public:
    SyntheticSource(SynthSchema schema, uint64_t seed, float logit_std = 1.5f);

    SparseExample next();

    double bayes_logloss() const {
        return generated_ ? entropy_sum_ / double(generated_) : 0.0;
    }
    uint64_t generated() const { return generated_; }
    const SynthSchema& schema() const { return schema_; }

  private:
    SynthSchema schema_;
    std::vector<uint32_t> starts_;
    std::vector<float> true_w;
    float true_b = 0.0f;
    std::mt19937_64 rng_;
    uint64_t generated_ = 0;
    double entropy_sum_ = 0.0;
};

// Full binary stream (header + n records). bayes_out, when non-null,
// receives the generator's Bayes-logloss estimate over the emitted examples.
std::vector<uint8_t> generate_stream_bytes(const SynthSchema& schema, uint64_t seed,
                                           size_t n, double* bayes_out = nullptr);

std::string generate_stream_csv(const SynthSchema& schema, uint64_t seed, size_t n);

}  // namespace zfm

#endif
