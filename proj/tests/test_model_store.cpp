#include <doctest.h>

#include <random>

#include "zfm/model_store.hpp"
#include "zfm/synth.hpp"

using namespace zfm;

namespace {

ModelParams randomized_model(Arch arch, uint64_t seed) {
    SynthSchema schema{{40, 30, 30}};
    ModelParams p = init_model(arch, schema.n_features(), 4, 3,
                               schema.field_starts(),
                               arch == Arch::DeepFM ? std::vector<uint32_t>{8}
                                                    : std::vector<uint32_t>{},
                               seed);
    std::mt19937_64 rng(seed + 1);
    std::uniform_real_distribution<float> d(-1.0f, 1.0f);
    p.w0 = d(rng);
    for (auto& x : p.w) x = d(rng);
    return p;
}

OptimizerState trained_state(OptimizerKind kind, ModelParams& p, uint64_t seed) {
    OptimizerConfig cfg;
    cfg.kind = kind;
    if (kind == OptimizerKind::Adagrad) cfg = OptimizerConfig::adagrad();
    OptimizerState st = OptimizerState::init(cfg, p);
    std::mt19937_64 rng(seed);
    SyntheticSource src({{40, 30, 30}}, seed);
    for (int step = 0; step < 5; ++step) {
        PackedBatch b;
        for (int i = 0; i < 16; ++i) b.push(src.next());
        optimizer_step(p, st, backward(b, p));
    }
    return st;
}

bool params_equal(const ModelParams& a, const ModelParams& b) {
    if (a.w0 != b.w0 || a.w != b.w || a.v != b.v) return false;
    if (a.mlp.size() != b.mlp.size()) return false;
    for (size_t i = 0; i < a.mlp.size(); ++i)
        if (a.mlp[i].weights != b.mlp[i].weights || a.mlp[i].bias != b.mlp[i].bias)
            return false;
    return a.arch == b.arch && a.n_features == b.n_features && a.k == b.k &&
           a.field_starts == b.field_starts;
}

}  // namespace

TEST_CASE("save/load round-trip is exact, FM and DeepFM") {
    for (Arch arch : {Arch::FM, Arch::DeepFM}) {
        ModelParams p = randomized_model(arch, 11);
        OptimizerState st = trained_state(OptimizerKind::LazyAdam, p, 13);
        std::vector<uint8_t> bytes = save_artifact(p, &st, true);
        LoadedArtifact a = load_artifact(bytes);
        CHECK(params_equal(a.params, p));
        REQUIRE(a.optimizer.has_value());
        CHECK(a.optimizer->cfg.kind == OptimizerKind::LazyAdam);
        CHECK(a.optimizer->t_global == st.t_global);
        CHECK(a.optimizer->t_row == st.t_row);
        CHECK(a.optimizer->m_w == st.m_w);
        CHECK(a.optimizer->v_v == st.v_v);
        CHECK(a.optimizer->m_w0 == st.m_w0);
        // deterministic bytes
        CHECK(save_artifact(p, &st, true) == bytes);
    }
}

TEST_CASE("adam optimizer section is twice the params payload plus counters") {
    ModelParams p = randomized_model(Arch::FM, 21);
    OptimizerState st = trained_state(OptimizerKind::Adam, p, 23);
    std::vector<uint8_t> bytes = save_artifact(p, &st, true);
    ArtifactInfo info = artifact_info(bytes);
    // kind/pad + 4 hyperparameters + t_global + t_row count
    uint64_t counters_block = 4 + 16 + 8 + 4 + 4 * st.t_row.size();
    CHECK(info.optimizer_len == 2 * info.params_len + counters_block);

    OptimizerState ag_state = trained_state(OptimizerKind::Adagrad, p, 25);
    ArtifactInfo ag = artifact_info(save_artifact(p, &ag_state, true));
    CHECK(ag.optimizer_len == ag.params_len + counters_block);
}

TEST_CASE("strip removes the optimizer section and is idempotent") {
    ModelParams p = randomized_model(Arch::FM, 31);
    OptimizerState st = trained_state(OptimizerKind::Adam, p, 33);
    std::vector<uint8_t> full = save_artifact(p, &st, true);
    std::vector<uint8_t> stripped = strip_artifact(full);

    ArtifactInfo info = artifact_info(stripped);
    CHECK_FALSE(info.has_optimizer);
    CHECK(info.optimizer_len == 0);
    CHECK(stripped.size() == info.header_len + info.params_len);

    CHECK(strip_artifact(stripped) == stripped);  // idempotent

    // strip(save(x, true)) == save(x, false) bytewise
    CHECK(stripped == save_artifact(p, nullptr, false));

    // stripped artifact loads for inference, refuses training resume
    LoadedArtifact a = load_artifact(stripped);
    CHECK_FALSE(a.optimizer.has_value());
    CHECK(params_equal(a.params, p));
    CHECK_THROWS_AS(load_artifact_for_training(stripped), ValidationError);
    CHECK_NOTHROW(load_artifact_for_training(full));
}

TEST_CASE("predictions identical before and after strip") {
    ModelParams p = randomized_model(Arch::DeepFM, 41);
    OptimizerState st = trained_state(OptimizerKind::LazyAdam, p, 43);
    ModelParams from_full = load_artifact(save_artifact(p, &st, true)).params;
    ModelParams from_stripped =
        load_artifact(strip_artifact(save_artifact(p, &st, true))).params;

    SyntheticSource src({{40, 30, 30}}, 45);
    PackedBatch b;
    for (int i = 0; i < 64; ++i) b.push(src.next());
    CHECK(predict(b, from_full) == predict(b, from_stripped));
}

TEST_CASE("single-byte payload corruption is caught by the checksum") {
    ModelParams p = randomized_model(Arch::FM, 51);
    OptimizerState st = trained_state(OptimizerKind::Adam, p, 53);
    std::vector<uint8_t> bytes = save_artifact(p, &st, true);
    ArtifactInfo info = artifact_info(bytes);

    std::mt19937_64 rng(55);
    for (int t = 0; t < 50; ++t) {
        std::vector<uint8_t> corrupt = bytes;
        size_t at = info.header_len +
                    std::uniform_int_distribution<size_t>(
                        0, size_t(info.params_len + info.optimizer_len) - 1)(rng);
        corrupt[at] ^= uint8_t(1u << (rng() % 8));
        CHECK_THROWS_AS(load_artifact(corrupt), ChecksumError);
    }
}

TEST_CASE("format errors are distinct") {
    ModelParams p = randomized_model(Arch::FM, 61);
    std::vector<uint8_t> bytes = save_artifact(p, nullptr, false);

    std::vector<uint8_t> bad_magic = bytes;
    bad_magic[0] = 'Q';
    CHECK_THROWS_WITH_AS(load_artifact(bad_magic), doctest::Contains("magic"),
                         FormatError);

    std::vector<uint8_t> bad_version = bytes;
    bad_version[4] = 2;
    CHECK_THROWS_WITH_AS(load_artifact(bad_version), doctest::Contains("version"),
                         FormatError);

    std::vector<uint8_t> truncated(bytes.begin(), bytes.end() - 10);
    CHECK_THROWS_AS(load_artifact(truncated), CorruptionError);

    CHECK_THROWS_AS(save_artifact(p, nullptr, true), ValidationError);
}
