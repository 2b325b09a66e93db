#ifndef ZFM_MODEL_HPP
#define ZFM_MODEL_HPP

#include <cstdint>
#include <vector>

#include "zfm/types.hpp"

namespace zfm {

enum class Arch : uint8_t { FM = 0, DeepFM = 1 };

// Fully-connected layer, row-major weights (out x in). Hidden layers use
// ReLU, the final layer is identity; activation is positional, not stored.
struct DenseLayer {
    uint32_t in = 0;
    uint32_t out = 0;
    std::vector<float> weights;  // out * in
    std::vector<float> bias;     // out
};

struct ModelParams {
    Arch arch = Arch::FM;
    uint32_t n_features = 0;
    uint32_t k = 0;
    uint32_t n_fields = 0;
    // field i covers ids [field_starts[i], field_starts[i+1]); size n_fields+1.
    std::vector<uint32_t> field_starts;

    float w0 = 0.0f;
    std::vector<float> w;  // n_features
    std::vector<float> v;  // n_features * k, row-major
    std::vector<DenseLayer> mlp;

    size_t weight_count() const;
    void validate() const;
    void check_finite() const;
};

// Initializes w/w0 to zero, v and MLP weights uniform in [-1/sqrt(k), 1/sqrt(k)]
// from the given seed. hidden_sizes lists hidden layer widths; the output
// layer of width 1 is appended automatically (DeepFM only).
ModelParams init_model(Arch arch, uint32_t n_features, uint32_t k, uint32_t n_fields,
                       const std::vector<uint32_t>& field_starts,
                       const std::vector<uint32_t>& hidden_sizes, uint64_t seed);

// Gradient restricted to the batch's active rows. rows is sorted unique;
// g_w and g_v are parallel to rows (g_v holds k entries per row).
struct SparseGradient {
    double g_w0 = 0.0;
    std::vector<uint32_t> rows;
    std::vector<float> g_w;
    std::vector<float> g_v;
    std::vector<DenseLayer> g_mlp;  // reuses DenseLayer as a shape-matched container
};

std::vector<float> fm_logit(const PackedBatch& batch, const ModelParams& params);
std::vector<float> deepfm_logit(const PackedBatch& batch, const ModelParams& params);

// Dispatches on params.arch and applies the sigmoid.
std::vector<float> logits(const PackedBatch& batch, const ModelParams& params);
std::vector<float> predict(const PackedBatch& batch, const ModelParams& params);

float logloss(const std::vector<float>& p, const std::vector<uint8_t>& labels);

// Analytic gradient of mean logloss over the batch. Requires labels.
SparseGradient backward(const PackedBatch& batch, const ModelParams& params);

}  // namespace zfm

#endif
