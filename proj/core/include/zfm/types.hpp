#ifndef ZFM_TYPES_HPP
#define ZFM_TYPES_HPP

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace zfm {

// Errors carry enough context to be actionable at the call site.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CorruptionError : std::runtime_error {
    CorruptionError(const std::string& what, uint64_t offset)
        : std::runtime_error(what + " (byte offset " + std::to_string(offset) + ")"),
          byte_offset(offset) {}
    uint64_t byte_offset;
};

struct CapacityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One instance: sorted unique feature ids, matching values, optional label.
struct SparseExample {
    std::vector<uint32_t> feature_ids;
    std::vector<float> feature_values;
    std::optional<uint8_t> label;

    void validate() const {
        if (feature_ids.empty())
            throw ValidationError("example has no features");
        if (feature_ids.size() != feature_values.size())
            throw ValidationError("feature_ids/feature_values length mismatch");
        for (size_t i = 1; i < feature_ids.size(); ++i)
            if (feature_ids[i] <= feature_ids[i - 1])
                throw ValidationError("feature_ids not strictly increasing");
    }

    bool operator==(const SparseExample&) const = default;
};

// Many examples joined into contiguous buffers. offsets has batch_size+1
// entries delimiting each example's slice of ids/values.
struct PackedBatch {
    std::vector<uint32_t> ids;
    std::vector<float> values;
    std::vector<uint32_t> offsets{0};
    std::vector<uint8_t> labels;  // empty for inference-only batches

    size_t batch_size() const { return offsets.size() - 1; }

    void push(const SparseExample& ex) {
        ids.insert(ids.end(), ex.feature_ids.begin(), ex.feature_ids.end());
        values.insert(values.end(), ex.feature_values.begin(), ex.feature_values.end());
        offsets.push_back(static_cast<uint32_t>(ids.size()));
        if (ex.label) labels.push_back(*ex.label);
    }

    SparseExample unpack(size_t i) const {
        SparseExample ex;
        ex.feature_ids.assign(ids.begin() + offsets[i], ids.begin() + offsets[i + 1]);
        ex.feature_values.assign(values.begin() + offsets[i], values.begin() + offsets[i + 1]);
        if (i < labels.size()) ex.label = labels[i];
        return ex;
    }

    void validate() const {
        if (offsets.empty() || offsets.front() != 0)
            throw ValidationError("offsets must start at 0");
        if (offsets.back() != ids.size() || ids.size() != values.size())
            throw ValidationError("offsets/ids/values sizes inconsistent");
        for (size_t i = 1; i < offsets.size(); ++i)
            if (offsets[i] < offsets[i - 1])
                throw ValidationError("offsets not non-decreasing");
    }
};

}  // namespace zfm

#endif
