#ifndef ZFM_MODEL_STORE_HPP
#define ZFM_MODEL_STORE_HPP

#include <cstdint>
#include <optional>
#include <vector>

#include "zfm/model.hpp"
#include "zfm/optimizer.hpp"

namespace zfm {

// Artifact file layout (.zmdl, all little-endian):
//   "ZMDL" | u16 version=1 | u8 arch | u8 flags (bit0 = has optimizer state)
//   | u32 n_features | u32 k | u32 n_fields | u32 n_mlp_layers
//   | u64 params_len | u64 optimizer_len | u32 crc32 (over both payloads)
//   | meta: (n_fields+1) x u32 field_starts (DeepFM) + per-layer u32 in,out
//   | params payload: f32 w0, w, V, then each layer's weights and bias
//   | optional optimizer payload: u8 kind | 3 pad | f32 lr,b1,b2,eps
//     | u64 t_global | u32 n_t_row | n_t_row x u32 | moment payloads
//     (v only for Adagrad; m then v for the Adam family), each laid out
//     exactly like the params payload.
inline constexpr char kModelMagic[4] = {'Z', 'M', 'D', 'L'};
inline constexpr uint16_t kModelVersion = 1;

struct ChecksumError : FormatError {
    using FormatError::FormatError;
};

struct LoadedArtifact {
    ModelParams params;
    std::optional<OptimizerState> optimizer;
};

struct ArtifactInfo {
    bool has_optimizer = false;
    uint64_t total_len = 0;
    uint64_t header_len = 0;  // fixed header + meta
    uint64_t params_len = 0;
    uint64_t optimizer_len = 0;
};

std::vector<uint8_t> save_artifact(const ModelParams& params,
                                   const OptimizerState* state,
                                   bool include_optimizer);

LoadedArtifact load_artifact(const std::vector<uint8_t>& bytes);

// Loads and requires optimizer state; throws ValidationError on a stripped
// artifact so training-resume fails loudly.
LoadedArtifact load_artifact_for_training(const std::vector<uint8_t>& bytes);

// Removes the optimizer section, clears the flag, recomputes lengths and
// checksum. Idempotent; the params payload is preserved byte for byte.
std::vector<uint8_t> strip_artifact(const std::vector<uint8_t>& bytes);

ArtifactInfo artifact_info(const std::vector<uint8_t>& bytes);

std::vector<uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<uint8_t>& bytes);

}  // namespace zfm

#endif
