#include "zfm/model_store.hpp"

#include <cstring>
#include <fstream>

#include <zlib.h>

namespace zfm {

namespace {

constexpr size_t kFixedHeader = 4 + 2 + 1 + 1 + 4 * 4 + 8 + 8 + 4;
constexpr size_t kCrcOffset = 4 + 2 + 1 + 1 + 4 * 4 + 8 + 8;

struct Writer {
    std::vector<uint8_t>& out;
    void u8(uint8_t v) { out.push_back(v); }
    void u16(uint16_t v) { le(v, 2); }
    void u32(uint32_t v) { le(v, 4); }
    void u64(uint64_t v) { le(v, 8); }
    void f32(float v) {
        uint32_t bits;
        std::memcpy(&bits, &v, 4);
        le(bits, 4);
    }
    void le(uint64_t v, int n) {
        for (int i = 0; i < n; ++i) out.push_back(uint8_t(v >> (8 * i)));
    }
};

struct Reader {
    const uint8_t* p;
    const uint8_t* end;
    uint64_t base;

    uint64_t offset() const { return base + uint64_t(p - (end - (end - p))); }

    void need(size_t n, const char* what) {
        if (size_t(end - p) < n)
            throw CorruptionError(std::string("artifact truncated reading ") + what,
                                  base);
    }
    uint8_t u8(const char* what) {
        need(1, what);
        return *p++;
    }
    uint64_t le(int n, const char* what) {
        need(size_t(n), what);
        uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= uint64_t(p[i]) << (8 * i);
        p += n;
        return v;
    }
    uint16_t u16(const char* w) { return uint16_t(le(2, w)); }
    uint32_t u32(const char* w) { return uint32_t(le(4, w)); }
    uint64_t u64(const char* w) { return le(8, w); }
    float f32(const char* w) {
        uint32_t bits = u32(w);
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
};

void write_weight_payload(Writer& w, const ModelParams& p) {
    w.f32(p.w0);
    for (float x : p.w) w.f32(x);
    for (float x : p.v) w.f32(x);
    for (const auto& l : p.mlp) {
        for (float x : l.weights) w.f32(x);
        for (float x : l.bias) w.f32(x);
    }
}

// reads a payload laid out like the params payload into a shape-initialized
// destination (used for both parameters and moment blocks)
void read_weight_payload(Reader& r, ModelParams& p, const char* what) {
    p.w0 = r.f32(what);
    for (auto& x : p.w) x = r.f32(what);
    for (auto& x : p.v) x = r.f32(what);
    for (auto& l : p.mlp) {
        for (auto& x : l.weights) x = r.f32(what);
        for (auto& x : l.bias) x = r.f32(what);
    }
}

uint32_t payload_crc(const std::vector<uint8_t>& bytes, size_t payload_start,
                     size_t payload_len) {
    return uint32_t(
        crc32(0, bytes.data() + payload_start, uInt(payload_len)));
}

struct ParsedHeader {
    Arch arch;
    uint8_t flags;
    uint32_t n_features, k, n_fields, n_layers;
    uint64_t params_len, opt_len;
    uint32_t crc;
    std::vector<uint32_t> field_starts;
    std::vector<std::pair<uint32_t, uint32_t>> layer_dims;
    size_t payload_start;  // offset of params payload
};

ParsedHeader parse_header(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < kFixedHeader)
        throw CorruptionError("artifact shorter than header", 0);
    if (std::memcmp(bytes.data(), kModelMagic, 4) != 0)
        throw FormatError("bad artifact magic");
    Reader r{bytes.data() + 4, bytes.data() + bytes.size(), 4};
    uint16_t version = r.u16("version");
    if (version != kModelVersion)
        throw FormatError("unsupported artifact version " + std::to_string(version));
    ParsedHeader h;
    uint8_t arch = r.u8("arch");
    if (arch > 1) throw FormatError("unknown architecture code");
    h.arch = Arch(arch);
    h.flags = r.u8("flags");
    h.n_features = r.u32("n_features");
    h.k = r.u32("k");
    h.n_fields = r.u32("n_fields");
    h.n_layers = r.u32("n_layers");
    h.params_len = r.u64("params_len");
    h.opt_len = r.u64("optimizer_len");
    h.crc = r.u32("crc");
    if (h.arch == Arch::DeepFM || h.n_fields > 0)
        for (uint32_t i = 0; i <= h.n_fields; ++i)
            h.field_starts.push_back(r.u32("field_starts"));
    for (uint32_t i = 0; i < h.n_layers; ++i) {
        uint32_t in = r.u32("layer dims");
        uint32_t out = r.u32("layer dims");
        h.layer_dims.emplace_back(in, out);
    }
    h.payload_start = size_t(r.p - bytes.data());
    uint64_t expect = h.payload_start + h.params_len + h.opt_len;
    if (bytes.size() != expect)
        throw CorruptionError("artifact length mismatch", bytes.size());
    return h;
}

}  // namespace

std::vector<uint8_t> save_artifact(const ModelParams& params,
                                   const OptimizerState* state,
                                   bool include_optimizer) {
    params.validate();
    params.check_finite();
    if (include_optimizer && !state)
        throw ValidationError("include_optimizer requires optimizer state");

    std::vector<uint8_t> bytes;
    Writer w{bytes};
    bytes.insert(bytes.end(), kModelMagic, kModelMagic + 4);
    w.u16(kModelVersion);
    w.u8(uint8_t(params.arch));
    w.u8(include_optimizer ? 1 : 0);
    w.u32(params.n_features);
    w.u32(params.k);
    w.u32(params.n_fields);
    w.u32(uint32_t(params.mlp.size()));
    size_t lens_at = bytes.size();
    w.u64(0);  // params_len, patched below
    w.u64(0);  // optimizer_len
    w.u32(0);  // crc
    if (params.arch == Arch::DeepFM || params.n_fields > 0)
        for (uint32_t s : params.field_starts) w.u32(s);
    for (const auto& l : params.mlp) {
        w.u32(l.in);
        w.u32(l.out);
    }

    size_t payload_start = bytes.size();
    write_weight_payload(w, params);
    uint64_t params_len = bytes.size() - payload_start;

    uint64_t opt_len = 0;
    if (include_optimizer) {
        size_t opt_start = bytes.size();
        const auto& c = state->cfg;
        w.u8(uint8_t(c.kind));
        w.u8(0);
        w.u8(0);
        w.u8(0);
        w.f32(c.lr);
        w.f32(c.beta1);
        w.f32(c.beta2);
        w.f32(c.eps);
        w.u64(state->t_global);
        w.u32(uint32_t(state->t_row.size()));
        for (uint32_t t : state->t_row) w.u32(t);
        auto write_moments = [&](float s, const std::vector<float>& mw,
                                 const std::vector<float>& mv,
                                 const std::vector<DenseLayer>& mm) {
            w.f32(s);
            for (float x : mw) w.f32(x);
            for (float x : mv) w.f32(x);
            for (const auto& l : mm) {
                for (float x : l.weights) w.f32(x);
                for (float x : l.bias) w.f32(x);
            }
        };
        if (c.kind != OptimizerKind::Adagrad)
            write_moments(state->m_w0, state->m_w, state->m_v, state->m_mlp);
        write_moments(state->v_w0, state->v_w, state->v_v, state->v_mlp);
        opt_len = bytes.size() - opt_start;
    }

    // patch lengths and checksum
    std::vector<uint8_t> patch;
    Writer pw{patch};
    pw.u64(params_len);
    pw.u64(opt_len);
    pw.u32(payload_crc(bytes, payload_start, size_t(params_len + opt_len)));
    std::memcpy(bytes.data() + lens_at, patch.data(), patch.size());
    return bytes;
}

LoadedArtifact load_artifact(const std::vector<uint8_t>& bytes) {
    ParsedHeader h = parse_header(bytes);
    uint32_t actual =
        payload_crc(bytes, h.payload_start, size_t(h.params_len + h.opt_len));
    if (actual != h.crc)
        throw ChecksumError("artifact checksum mismatch");

    LoadedArtifact out;
    ModelParams& p = out.params;
    p.arch = h.arch;
    p.n_features = h.n_features;
    p.k = h.k;
    p.n_fields = h.n_fields;
    p.field_starts = h.field_starts;
    p.w.resize(h.n_features);
    p.v.resize(size_t(h.n_features) * h.k);
    for (auto [in, outw] : h.layer_dims) {
        DenseLayer l;
        l.in = in;
        l.out = outw;
        l.weights.resize(size_t(in) * outw);
        l.bias.resize(outw);
        p.mlp.push_back(std::move(l));
    }

    Reader r{bytes.data() + h.payload_start, bytes.data() + bytes.size(),
             h.payload_start};
    read_weight_payload(r, p, "params payload");
    p.validate();

    if (h.flags & 1) {
        OptimizerState st;
        uint8_t kind = r.u8("optimizer kind");
        if (kind > 2) throw FormatError("unknown optimizer kind");
        st.cfg.kind = OptimizerKind(kind);
        r.u8("pad");
        r.u8("pad");
        r.u8("pad");
        st.cfg.lr = r.f32("hyperparameters");
        st.cfg.beta1 = r.f32("hyperparameters");
        st.cfg.beta2 = r.f32("hyperparameters");
        st.cfg.eps = r.f32("hyperparameters");
        st.t_global = r.u64("t_global");
        uint32_t n_t = r.u32("t_row count");
        st.t_row.resize(n_t);
        for (auto& t : st.t_row) t = r.u32("t_row");
        auto read_moments = [&](float& s, std::vector<float>& mw, std::vector<float>& mv,
                                std::vector<DenseLayer>& mm) {
            ModelParams tmp = p;  // shape twin; every entry is overwritten
            read_weight_payload(r, tmp, "moment payload");
            s = tmp.w0;
            mw = std::move(tmp.w);
            mv = std::move(tmp.v);
            mm = std::move(tmp.mlp);
        };
        if (st.cfg.kind != OptimizerKind::Adagrad)
            read_moments(st.m_w0, st.m_w, st.m_v, st.m_mlp);
        read_moments(st.v_w0, st.v_w, st.v_v, st.v_mlp);
        out.optimizer = std::move(st);
    }
    return out;
}

LoadedArtifact load_artifact_for_training(const std::vector<uint8_t>& bytes) {
    LoadedArtifact a = load_artifact(bytes);
    if (!a.optimizer)
        throw ValidationError(
            "artifact has no optimizer state (stripped); cannot resume training");
    return a;
}

std::vector<uint8_t> strip_artifact(const std::vector<uint8_t>& bytes) {
    ParsedHeader h = parse_header(bytes);
    uint32_t actual =
        payload_crc(bytes, h.payload_start, size_t(h.params_len + h.opt_len));
    if (actual != h.crc)
        throw ChecksumError("artifact checksum mismatch");
    if (!(h.flags & 1)) return bytes;  // already stripped

    std::vector<uint8_t> out(bytes.begin(),
                             bytes.begin() + h.payload_start + h.params_len);
    out[7] = h.flags & ~uint8_t(1);
    std::vector<uint8_t> patch;
    Writer pw{patch};
    pw.u64(h.params_len);
    pw.u64(0);
    pw.u32(payload_crc(out, h.payload_start, size_t(h.params_len)));
    std::memcpy(out.data() + kCrcOffset - 16, patch.data(), patch.size());
    return out;
}

ArtifactInfo artifact_info(const std::vector<uint8_t>& bytes) {
    ParsedHeader h = parse_header(bytes);
    ArtifactInfo info;
    info.has_optimizer = (h.flags & 1) != 0;
    info.total_len = bytes.size();
    info.header_len = h.payload_start;
    info.params_len = h.params_len;
    info.optimizer_len = h.opt_len;
    return info;
}

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open file: " + path);
    return std::vector<uint8_t>(std::istreambuf_iterator<char>(in),
                                std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open file for writing: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              std::streamsize(bytes.size()));
    if (!out) throw FormatError("write failed: " + path);
}

}  // namespace zfm
