#include "zfm/record_io.hpp"

#include <charconv>
#include <cstring>
#include <fstream>

namespace zfm {

namespace {

template <typename T>
void put_le(std::vector<uint8_t>& out, T v) {
    for (size_t i = 0; i < sizeof(T); ++i)
        out.push_back(uint8_t(uint64_t(v) >> (8 * i)));
}

template <typename T>
T get_le(const uint8_t* p) {
    uint64_t v = 0;
    for (size_t i = 0; i < sizeof(T); ++i) v |= uint64_t(p[i]) << (8 * i);
    return T(v);
}

}  // namespace

void append_stream_header(std::vector<uint8_t>& out) {
    out.insert(out.end(), kStreamMagic, kStreamMagic + 4);
    put_le<uint16_t>(out, kStreamVersion);
    put_le<uint16_t>(out, 0);
}

void check_stream_header(const uint8_t* data, size_t size) {
    if (size < kStreamHeaderSize)
        throw FormatError("stream shorter than header");
    if (std::memcmp(data, kStreamMagic, 4) != 0)
        throw FormatError("bad stream magic");
    uint16_t version = get_le<uint16_t>(data + 4);
    if (version != kStreamVersion)
        throw FormatError("unsupported stream version " + std::to_string(version));
}

void append_record(std::vector<uint8_t>& out, const SparseExample& ex) {
    ex.validate();
    if (!ex.label)
        throw ValidationError("record requires a label");
    if (ex.feature_ids.size() > 65535)
        throw CapacityError("record exceeds 65535 features");
    out.push_back(*ex.label);
    put_le<uint16_t>(out, uint16_t(ex.feature_ids.size()));
    for (uint32_t id : ex.feature_ids) put_le<uint32_t>(out, id);
    for (float v : ex.feature_values) {
        uint32_t bits;
        std::memcpy(&bits, &v, 4);
        put_le<uint32_t>(out, bits);
    }
}

std::vector<uint8_t> encode_record(const SparseExample& ex) {
    std::vector<uint8_t> out;
    append_record(out, ex);
    return out;
}

std::optional<SparseExample> decode_record(const uint8_t* data, size_t size, size_t& pos,
                                           bool at_eof) {
    if (pos == size) return std::nullopt;
    auto incomplete = [&]() -> std::optional<SparseExample> {
        if (at_eof) throw CorruptionError("truncated record", pos);
        return std::nullopt;
    };
    if (size - pos < 3) return incomplete();
    uint8_t label = data[pos];
    uint16_t n = get_le<uint16_t>(data + pos + 1);
    if (label > 1) throw CorruptionError("invalid label byte", pos);
    if (n == 0) throw CorruptionError("record with zero features", pos);
    size_t need = 3 + size_t(8) * n;
    if (size - pos < need) return incomplete();
    SparseExample ex;
    ex.label = label;
    ex.feature_ids.resize(n);
    ex.feature_values.resize(n);
    const uint8_t* p = data + pos + 3;
    for (uint16_t i = 0; i < n; ++i) ex.feature_ids[i] = get_le<uint32_t>(p + 4 * i);
    p += size_t(4) * n;
    for (uint16_t i = 0; i < n; ++i) {
        uint32_t bits = get_le<uint32_t>(p + 4 * i);
        std::memcpy(&ex.feature_values[i], &bits, 4);
    }
    pos += need;
    return ex;
}

// ---------------------------------------------------------------- RecordStream

RecordStream::RecordStream(std::istream& in, ReaderConfig cfg) : cfg_(cfg) {
    start(in);
}

RecordStream::RecordStream(const std::string& path, ReaderConfig cfg) : cfg_(cfg) {
    owned_file_ = std::make_unique<std::ifstream>(path, std::ios::binary);
    if (!*owned_file_)
        throw FormatError("cannot open stream file: " + path);
    start(*owned_file_);
}

void RecordStream::start(std::istream& in) {
    in_ = &in;
    reader_ = std::thread([this] { reader_loop(); });
}

RecordStream::~RecordStream() {
    {
        std::lock_guard lk(mu_);
        stop_ = true;
    }
    cv_producer_.notify_all();
    if (reader_.joinable()) reader_.join();
}

void RecordStream::reader_loop() {
    try {
        std::vector<uint8_t> buf;
        size_t pos = 0;
        uint64_t consumed = 0;  // absolute offset of buf[0] in the stream
        char chunk[65536];

        // header
        while (buf.size() < kStreamHeaderSize && *in_) {
            in_->read(chunk, sizeof(chunk));
            buf.insert(buf.end(), chunk, chunk + in_->gcount());
        }
        check_stream_header(buf.data(), buf.size());
        pos = kStreamHeaderSize;

        std::vector<SparseExample> block;
        block.reserve(cfg_.block_examples);
        bool source_eof = false;
        while (true) {
            if (!source_eof && in_->good()) {
                in_->read(chunk, sizeof(chunk));
                buf.insert(buf.end(), chunk, chunk + in_->gcount());
                if (in_->eof()) source_eof = true;
            } else {
                source_eof = true;
            }

            while (true) {
                std::optional<SparseExample> ex;
                try {
                    ex = decode_record(buf.data(), buf.size(), pos, source_eof);
                } catch (CorruptionError& e) {
                    throw CorruptionError("truncated record", consumed + e.byte_offset);
                }
                if (!ex) break;
                block.push_back(std::move(*ex));
                if (block.size() == cfg_.block_examples) {
                    std::unique_lock lk(mu_);
                    cv_producer_.wait(lk, [&] {
                        return stop_ || queue_.size() < cfg_.queue_blocks;
                    });
                    if (stop_) return;
                    queue_.push(std::move(block));
                    lk.unlock();
                    cv_consumer_.notify_one();
                    block = {};
                    block.reserve(cfg_.block_examples);
                }
            }
            // compact consumed bytes
            if (pos > 0) {
                consumed += pos;
                buf.erase(buf.begin(), buf.begin() + pos);
                pos = 0;
            }
            if (source_eof && buf.empty()) break;
            if (source_eof && !buf.empty()) {
                // decode_record would have thrown already; belt and braces
                throw CorruptionError("truncated record", consumed);
            }
        }
        std::unique_lock lk(mu_);
        if (!block.empty()) {
            cv_producer_.wait(lk, [&] { return stop_ || queue_.size() < cfg_.queue_blocks; });
            if (stop_) return;
            queue_.push(std::move(block));
        }
        eof_ = true;
        lk.unlock();
        cv_consumer_.notify_all();
    } catch (...) {
        std::lock_guard lk(mu_);
        error_ = std::current_exception();
        eof_ = true;
        cv_consumer_.notify_all();
    }
}

std::vector<SparseExample> RecordStream::next_block() {
    std::unique_lock lk(mu_);
    cv_consumer_.wait(lk, [&] { return !queue_.empty() || eof_; });
    if (!queue_.empty()) {
        auto block = std::move(queue_.front());
        queue_.pop();
        lk.unlock();
        cv_producer_.notify_one();
        return block;
    }
    if (error_) std::rethrow_exception(error_);
    return {};
}

std::vector<SparseExample> RecordStream::next_examples(size_t n) {
    std::vector<SparseExample> out;
    out.reserve(n);
    while (out.size() < n) {
        if (leftover_pos_ == leftover_.size()) {
            leftover_ = next_block();
            leftover_pos_ = 0;
            if (leftover_.empty()) break;
        }
        size_t take = std::min(n - out.size(), leftover_.size() - leftover_pos_);
        for (size_t i = 0; i < take; ++i)
            out.push_back(std::move(leftover_[leftover_pos_ + i]));
        leftover_pos_ += take;
    }
    return out;
}

// ------------------------------------------------------------------ CSV codec

std::string csv_encode(const SparseExample& ex) {
    ex.validate();
    if (!ex.label) throw ValidationError("record requires a label");
    std::string line = std::to_string(int(*ex.label));
    char buf[32];
    for (size_t i = 0; i < ex.feature_ids.size(); ++i) {
        line += ',';
        line += std::to_string(ex.feature_ids[i]);
        line += ':';
        auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), ex.feature_values[i]);
        line.append(buf, end);
    }
    line += '\n';
    return line;
}

SparseExample csv_decode_line(const std::string& line, size_t line_number) {
    auto fail = [&](const std::string& what) -> FormatError {
        return FormatError(what + " at line " + std::to_string(line_number));
    };
    SparseExample ex;
    const char* p = line.data();
    const char* end = p + line.size();
    while (end > p && (end[-1] == '\n' || end[-1] == '\r')) --end;
    if (p == end) throw fail("empty line");
    if (*p != '0' && *p != '1') throw fail("label must be 0 or 1");
    ex.label = uint8_t(*p - '0');
    ++p;
    while (p < end) {
        if (*p != ',') throw fail("expected ','");
        ++p;
        uint32_t id;
        auto r1 = std::from_chars(p, end, id);
        if (r1.ec != std::errc{} || r1.ptr == end || *r1.ptr != ':')
            throw fail("malformed id:value field");
        p = r1.ptr + 1;
        float val;
        auto r2 = std::from_chars(p, end, val);
        if (r2.ec != std::errc{}) throw fail("malformed float value");
        p = r2.ptr;
        ex.feature_ids.push_back(id);
        ex.feature_values.push_back(val);
    }
    try {
        ex.validate();
    } catch (const ValidationError& e) {
        throw fail(e.what());
    }
    return ex;
}

std::vector<SparseExample> csv_decode(std::istream& in) {
    std::vector<SparseExample> out;
    std::string line;
    size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) continue;
        out.push_back(csv_decode_line(line, line_number));
    }
    return out;
}

}  // namespace zfm
