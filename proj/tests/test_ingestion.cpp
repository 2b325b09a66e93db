#include <doctest.h>

#include <chrono>
#include <random>
#include <sstream>
#include <thread>

#include "zfm/record_io.hpp"
#include "zfm/synth.hpp"

using namespace zfm;

namespace {

SparseExample random_record(std::mt19937_64& rng) {
    size_t n = std::uniform_int_distribution<size_t>(1, 30)(rng);
    SparseExample ex;
    uint32_t id = 0;
    for (size_t i = 0; i < n; ++i) {
        id += std::uniform_int_distribution<uint32_t>(1, 1000)(rng);
        ex.feature_ids.push_back(id);
        ex.feature_values.push_back(
            std::uniform_real_distribution<float>(-10.0f, 10.0f)(rng));
    }
    ex.label = uint8_t(rng() % 2);
    return ex;
}

}  // namespace

TEST_CASE("encode_record produces the documented byte layout") {
    SparseExample ex{{2}, {1.0f}, uint8_t(1)};
    std::vector<uint8_t> expected{0x01, 0x01, 0x00, 0x02, 0x00, 0x00,
                                  0x00, 0x00, 0x00, 0x80, 0x3F};
    CHECK(encode_record(ex) == expected);
    CHECK(encode_record(ex).size() == 3 + 8 * 1);
}

TEST_CASE("encode rejects empty and unlabeled records") {
    CHECK_THROWS_AS(encode_record({{}, {}, uint8_t(0)}), ValidationError);
    CHECK_THROWS_AS(encode_record({{1}, {1.0f}, std::nullopt}), ValidationError);
}

TEST_CASE("binary round-trip identity on random records") {
    std::mt19937_64 rng(42);
    for (int t = 0; t < 2000; ++t) {
        SparseExample ex = random_record(rng);
        std::vector<uint8_t> bytes = encode_record(ex);
        size_t pos = 0;
        auto back = decode_record(bytes.data(), bytes.size(), pos);
        REQUIRE(back.has_value());
        CHECK(pos == bytes.size());
        CHECK(*back == ex);
    }
}

TEST_CASE("truncated record raises corruption, not silent EOF") {
    std::vector<uint8_t> bytes = encode_record({{1, 5}, {0.5f, 2.0f}, uint8_t(0)});
    bytes.pop_back();
    size_t pos = 0;
    CHECK_THROWS_AS(decode_record(bytes.data(), bytes.size(), pos), CorruptionError);
}

TEST_CASE("stream header checks") {
    std::vector<uint8_t> good;
    append_stream_header(good);
    CHECK_NOTHROW(check_stream_header(good.data(), good.size()));

    std::vector<uint8_t> bad = good;
    bad[0] = 'X';
    CHECK_THROWS_AS(check_stream_header(bad.data(), bad.size()), FormatError);

    std::vector<uint8_t> v2 = good;
    v2[4] = 2;
    CHECK_THROWS_WITH_AS(check_stream_header(v2.data(), v2.size()),
                         doctest::Contains("version"), FormatError);
}

TEST_CASE("RecordStream yields records in order then clean EOF") {
    std::mt19937_64 rng(7);
    std::vector<SparseExample> originals;
    std::vector<uint8_t> bytes;
    append_stream_header(bytes);
    for (int i = 0; i < 3000; ++i) {
        originals.push_back(random_record(rng));
        append_record(bytes, originals.back());
    }
    std::istringstream in(
        std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
    RecordStream stream(in, {.block_examples = 256, .queue_blocks = 2});
    std::vector<SparseExample> got;
    while (true) {
        auto block = stream.next_block();
        if (block.empty()) break;
        for (auto& ex : block) got.push_back(std::move(ex));
    }
    CHECK(got == originals);
    CHECK(stream.next_block().empty());  // EOF is sticky
}

TEST_CASE("RecordStream surfaces mid-record truncation with offset") {
    std::vector<uint8_t> bytes;
    append_stream_header(bytes);
    append_record(bytes, {{1}, {1.0f}, uint8_t(1)});
    size_t good_end = bytes.size();
    append_record(bytes, {{2, 9}, {1.0f, 3.0f}, uint8_t(0)});
    bytes.resize(bytes.size() - 5);  // cut into the second record

    std::istringstream in(
        std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
    RecordStream stream(in);
    try {
        while (!stream.next_block().empty()) {
        }
        FAIL("expected CorruptionError");
    } catch (const CorruptionError& e) {
        CHECK(e.byte_offset == good_end);
    }
}

TEST_CASE("RecordStream rejects bad magic") {
    std::string junk = "not a zfmt stream at all";
    std::istringstream in(junk);
    RecordStream stream(in);
    CHECK_THROWS_AS(stream.next_block(), FormatError);
}

TEST_CASE("slow consumer and slow producer do not deadlock") {
    SynthSchema schema{{50, 50}};
    std::vector<uint8_t> bytes = generate_stream_bytes(schema, 3, 5000);
    std::istringstream in(
        std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
    // tiny queue forces producer backpressure; consumer sleeps occasionally
    RecordStream stream(in, {.block_examples = 64, .queue_blocks = 1});
    size_t seen = 0;
    int blocks = 0;
    while (true) {
        auto block = stream.next_block();
        if (block.empty()) break;
        seen += block.size();
        if (++blocks % 16 == 0)
            std::this_thread::sleep_for(std::chrono::milliseconds(1));
    }
    CHECK(seen == 5000);
}

TEST_CASE("next_examples spans blocks and respects order") {
    SynthSchema schema{{10, 10}};
    std::vector<uint8_t> bytes = generate_stream_bytes(schema, 9, 100);
    std::istringstream in1(
        std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
    std::istringstream in2(
        std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
    RecordStream a(in1, {.block_examples = 7, .queue_blocks = 2});
    RecordStream b(in2);
    std::vector<SparseExample> via_chunks, via_blocks;
    while (true) {
        auto part = a.next_examples(13);
        if (part.empty()) break;
        for (auto& ex : part) via_chunks.push_back(std::move(ex));
    }
    while (true) {
        auto block = b.next_block();
        if (block.empty()) break;
        for (auto& ex : block) via_blocks.push_back(std::move(ex));
    }
    CHECK(via_chunks == via_blocks);
    CHECK(via_chunks.size() == 100);
}

TEST_CASE("csv round-trip and parse errors") {
    CHECK(csv_encode({{2}, {1.0f}, uint8_t(1)}) == "1,2:1\n");
    SparseExample back = csv_decode_line("1,2:1", 1);
    CHECK(back == SparseExample{{2}, {1.0f}, uint8_t(1)});

    std::mt19937_64 rng(11);
    for (int t = 0; t < 500; ++t) {
        SparseExample ex = random_record(rng);
        SparseExample rt = csv_decode_line(csv_encode(ex), 1);
        CHECK(rt.feature_ids == ex.feature_ids);
        CHECK(rt.label == ex.label);
        // shortest round-trip formatting is exact for f32
        CHECK(rt.feature_values == ex.feature_values);
    }

    CHECK_THROWS_WITH_AS(csv_decode_line("2,1:1", 7), doctest::Contains("line 7"),
                         FormatError);
    CHECK_THROWS_AS(csv_decode_line("1,abc", 1), FormatError);
    CHECK_THROWS_AS(csv_decode_line("1,5", 1), FormatError);
    CHECK_THROWS_AS(csv_decode_line("", 1), FormatError);
}
