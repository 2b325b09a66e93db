#ifndef ZFM_RECORD_IO_HPP
#define ZFM_RECORD_IO_HPP

#include <condition_variable>
#include <cstdint>
#include <fstream>
#include <istream>
#include <memory>
#include <mutex>
#include <optional>
#include <queue>
#include <string>
#include <thread>
#include <vector>

#include "zfm/types.hpp"

namespace zfm {

// Stream header: "ZFMT" | u16 version=1 | u16 reserved=0, little-endian.
// Record: u8 label | u16 n | n x u32 id | n x f32 value.
inline constexpr char kStreamMagic[4] = {'Z', 'F', 'M', 'T'};
inline constexpr uint16_t kStreamVersion = 1;
inline constexpr size_t kStreamHeaderSize = 8;

void append_record(std::vector<uint8_t>& out, const SparseExample& ex);
std::vector<uint8_t> encode_record(const SparseExample& ex);
void append_stream_header(std::vector<uint8_t>& out);

// Decodes one record starting at `pos`; advances pos on success. Returns
// nullopt when the remaining bytes do not hold a full record: that is clean
// EOF if pos == size, otherwise it throws CorruptionError when at_eof is
// set and simply asks for more bytes when it is not.
std::optional<SparseExample> decode_record(const uint8_t* data, size_t size, size_t& pos,
                                           bool at_eof = true);

void check_stream_header(const uint8_t* data, size_t size);

struct ReaderConfig {
    size_t block_examples = 1024;
    size_t queue_blocks = 4;
};

// Background-thread record reader: decodes blocks of examples off the owning
// thread and hands them over through a bounded queue.
class RecordStream {
  public:
    // The istream must outlive the RecordStream. Also usable on pipes/stdin.
    explicit RecordStream(std::istream& in, ReaderConfig cfg = {});
    explicit RecordStream(const std::string& path, ReaderConfig cfg = {});
    ~RecordStream();

    RecordStream(const RecordStream&) = delete;
    RecordStream& operator=(const RecordStream&) = delete;

    // Blocks until the next block is ready. Empty vector means clean EOF.
    // Rethrows any reader-thread error (FormatError / CorruptionError).
    std::vector<SparseExample> next_block();

    // Pulls up to `n` examples, spanning blocks. Empty result means EOF.
    std::vector<SparseExample> next_examples(size_t n);

  private:
    void reader_loop();
    void start(std::istream& in);

    std::unique_ptr<std::ifstream> owned_file_;
    std::istream* in_ = nullptr;
    ReaderConfig cfg_;

    std::mutex mu_;
    std::condition_variable cv_producer_, cv_consumer_;
    std::queue<std::vector<SparseExample>> queue_;
    bool eof_ = false;
    bool stop_ = false;
    std::exception_ptr error_;
    std::vector<SparseExample> leftover_;
    size_t leftover_pos_ = 0;
    std::thread reader_;
};

// CSV baseline: "label,id:value,id:value,...\n". Floats use shortest
// round-trip formatting.
std::string csv_encode(const SparseExample& ex);
SparseExample csv_decode_line(const std::string& line, size_t line_number);
std::vector<SparseExample> csv_decode(std::istream& in);

}  // namespace zfm

#endif
