#include "zfm/synth.hpp"

#include <cmath>

#include "zfm/record_io.hpp"

namespace zfm {

SyntheticSource::SyntheticSource(SynthSchema schema, uint64_t seed, float logit_std)
    : schema_(std::move(schema)), starts_(schema_.field_starts()), rng_(seed) {
    if (schema_.field_cardinalities.empty())
        throw ValidationError("schema needs at least one field");
    for (uint32_t c : schema_.field_cardinalities)
        if (c == 0) throw ValidationError("field cardinality must be positive");
    // per-field weight scale so the planted logit has std ~= logit_std
    float scale = logit_std / std::sqrt(float(schema_.field_cardinalities.size()));
    std::normal_distribution<float> dist(0.0f, scale);
    true_w.resize(schema_.n_features());
    for (auto& w : true_w) w = dist(rng_);
}

SparseExample SyntheticSource::next() {
    SparseExample ex;
    double logit = true_b;
    for (size_t f = 0; f < schema_.field_cardinalities.size(); ++f) {
        uint32_t id = starts_[f] + std::uniform_int_distribution<uint32_t>(
                                       0, schema_.field_cardinalities[f] - 1)(rng_);
        ex.feature_ids.push_back(id);
        ex.feature_values.push_back(1.0f);
        logit += true_w[id];
    }
    double p = 1.0 / (1.0 + std::exp(-logit));
    ex.label = std::bernoulli_distribution(p)(rng_) ? 1 : 0;
    // expected logloss of the planted model on this feature vector
    entropy_sum_ += -(p * std::log(p) + (1.0 - p) * std::log(1.0 - p));
    generated_++;
    return ex;
}

std::vector<uint8_t> generate_stream_bytes(const SynthSchema& schema, uint64_t seed,
                                           size_t n, double* bayes_out) {
    SyntheticSource src(schema, seed);
    std::vector<uint8_t> bytes;
    append_stream_header(bytes);
    for (size_t i = 0; i < n; ++i) append_record(bytes, src.next());
    if (bayes_out) *bayes_out = src.bayes_logloss();
    return bytes;
}

std::string generate_stream_csv(const SynthSchema& schema, uint64_t seed, size_t n) {
    SyntheticSource src(schema, seed);
    std::string out;
    for (size_t i = 0; i < n; ++i) out += csv_encode(src.next());
    return out;
}

}  // namespace zfm
