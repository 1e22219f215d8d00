#pragma once

// Persistent vector cache.
//
// Byte layout (all integers little-endian, floats IEEE-754 binary32 LE):
//
//   header   : "OCMVCACH" | u32 version (=1) | u32 reserved (=0)
//   record*  : u32 "REC1" marker (0x31434552)
//              u64 key (FNV-1a 64 of the exact text sent to the provider)
//              u16 tag_len | tag bytes (provider tag, UTF-8)
//              u32 dimension | float32[dimension]
//              u32 crc32 (zlib) over marker..last value
//   footer?  : u32 "IDX1" marker (0x31584449) | u64 count
//              count x (u64 key | u16 tag_len | tag | u64 record offset)
//              u32 crc32 over "IDX1"..last entry
//              u64 footer offset | "OCMVIDX!"
//
// Records are only ever appended. The footer is written on flush/close and
// removed again before the next append. A file without a valid footer is
// rebuilt by scanning records; a torn or corrupt tail is cut off.

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>
#include <zlib.h>

#include <atomic>
#include <bit>
#include <cerrno>
#include <cstdint>
#include <cstring>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "occmap/embedding_vector.hpp"
#include "occmap/text.hpp"

namespace occmap::embedding {

namespace cache_detail {

inline constexpr char kMagic[8] = {'O', 'C', 'M', 'V', 'C', 'A', 'C', 'H'};
inline constexpr char kTrailer[8] = {'O', 'C', 'M', 'V', 'I', 'D', 'X', '!'};
inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::uint32_t kRecordMarker = 0x31434552;  // "REC1"
inline constexpr std::uint32_t kFooterMarker = 0x31584449;  // "IDX1"
inline constexpr std::size_t kHeaderSize = 16;

inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}
inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}
  bool ok() const { return ok_; }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

  std::uint64_t uint(int bytes) {
    if (!ok_ || remaining() < static_cast<std::size_t>(bytes)) {
      ok_ = false;
      return 0;
    }
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= std::uint64_t{static_cast<unsigned char>(data_[pos_ + i])} << (8 * i);
    pos_ += bytes;
    return v;
  }
  std::string_view bytes(std::size_t n) {
    if (!ok_ || remaining() < n) {
      ok_ = false;
      return {};
    }
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
  bool ok_ = true;
};

inline std::uint32_t crc(std::string_view bytes) {
  uLong c = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; records are far below 4 GiB.
  c = crc32(c, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(c);
}

}  // namespace cache_detail

inline std::uint64_t cache_key(std::string_view input_text) { return text::fnv1a64(input_text); }

// Encodes one record as stored on disk.
inline std::string encode_cache_record(std::uint64_t key, const EmbeddingVector& v) {
  using namespace cache_detail;
  if (v.provider_tag().size() > 0xffff) throw EmbeddingError(EmbeddingErrc::CacheFormat, "provider tag too long");
  std::string out;
  out.reserve(22 + v.provider_tag().size() + 4 * v.dimension());
  put_u32(out, kRecordMarker);
  put_u64(out, key);
  put_u16(out, static_cast<std::uint16_t>(v.provider_tag().size()));
  out += v.provider_tag();
  put_u32(out, static_cast<std::uint32_t>(v.dimension()));
  for (const float f : v.values()) put_u32(out, std::bit_cast<std::uint32_t>(f));
  put_u32(out, crc(out));
  return out;
}

struct DecodedRecord {
  std::uint64_t key = 0;
  EmbeddingVector vector;
  std::size_t size = 0;
};

// Decodes a record at the start of `data`; nullopt if truncated or corrupt.
inline std::optional<DecodedRecord> decode_cache_record(std::string_view data) {
  using namespace cache_detail;
  Reader r(data);
  if (r.uint(4) != kRecordMarker || !r.ok()) return std::nullopt;
  DecodedRecord rec;
  rec.key = r.uint(8);
  const auto tag_len = static_cast<std::size_t>(r.uint(2));
  const std::string tag(r.bytes(tag_len));
  const auto dim = static_cast<std::size_t>(r.uint(4));
  if (!r.ok() || dim > r.remaining() / 4) return std::nullopt;
  std::vector<float> values(dim);
  for (auto& f : values) f = std::bit_cast<float>(static_cast<std::uint32_t>(r.uint(4)));
  const std::size_t body = r.pos();
  const auto stored_crc = static_cast<std::uint32_t>(r.uint(4));
  if (!r.ok() || stored_crc != crc(data.substr(0, body))) return std::nullopt;
  rec.vector = EmbeddingVector(std::move(values), tag);
  rec.size = r.pos();
  return rec;
}

struct CacheStats {
  std::size_t records = 0;
  std::size_t corrupt_reads = 0;
  std::uint64_t discarded_tail_bytes = 0;
  bool rebuilt_index = false;
};

class VectorCache {
 public:
  explicit VectorCache(std::string path) : path_(std::move(path)) { open(); }
  VectorCache(const VectorCache&) = delete;
  VectorCache& operator=(const VectorCache&) = delete;

  ~VectorCache() {
    try {
      close();
    } catch (...) {
    }
  }

  const std::string& path() const { return path_; }

  // Safe to call from several threads at once.
  std::optional<EmbeddingVector> get(std::uint64_t key, const std::string& provider_tag) const {
    std::uint64_t offset = 0;
    std::size_t length = 0;
    {
      std::shared_lock lock(mutex_);
      auto it = index_.find({key, provider_tag});
      if (it == index_.end()) return std::nullopt;
      offset = it->second.offset;
      length = it->second.length;
    }
    std::string buf(length, '\0');
    const ssize_t n = ::pread(fd_, buf.data(), length, static_cast<off_t>(offset));
    if (n != static_cast<ssize_t>(length)) {
      corrupt_reads_.fetch_add(1, std::memory_order_relaxed);
      return std::nullopt;
    }
    auto rec = decode_cache_record(buf);
    if (!rec || rec->key != key || rec->vector.provider_tag() != provider_tag) {
      corrupt_reads_.fetch_add(1, std::memory_order_relaxed);
      return std::nullopt;
    }
    return std::move(rec->vector);
  }

  // Appends a record unless an entry for (key, tag) is already present and
  // readable. Returns true when a record was written.
  bool put(std::uint64_t key, const EmbeddingVector& v) {
    const std::string record = encode_cache_record(key, v);
    std::unique_lock lock(mutex_);
    auto found = index_.find({key, v.provider_tag()});
    if (found != index_.end() && found->second.length == record.size()) {
      std::string buf(record.size(), '\0');
      if (::pread(fd_, buf.data(), buf.size(), static_cast<off_t>(found->second.offset)) ==
              static_cast<ssize_t>(buf.size()) &&
          decode_cache_record(buf)) {
        return false;
      }
    }
    drop_footer_locked();
    write_all(record, data_end_);
    index_[{key, v.provider_tag()}] = Entry{data_end_, record.size()};
    data_end_ += record.size();
    return true;
  }

  std::size_t size() const {
    std::shared_lock lock(mutex_);
    return index_.size();
  }

  CacheStats stats() const {
    std::shared_lock lock(mutex_);
    CacheStats s = stats_;
    s.records = index_.size();
    s.corrupt_reads = corrupt_reads_.load();
    return s;
  }

  // Writes the index footer so the next open does not need to scan.
  void flush() {
    std::unique_lock lock(mutex_);
    if (fd_ < 0 || footer_present_) return;
    using namespace cache_detail;
    std::string footer;
    put_u32(footer, kFooterMarker);
    put_u64(footer, index_.size());
    for (const auto& [k, e] : index_) {
      put_u64(footer, k.first);
      put_u16(footer, static_cast<std::uint16_t>(k.second.size()));
      footer += k.second;
      put_u64(footer, e.offset);
    }
    put_u32(footer, crc(footer));
    put_u64(footer, data_end_);
    footer.append(kTrailer, sizeof kTrailer);
    write_all(footer, data_end_);
    footer_present_ = true;
  }

  void close() {
    if (fd_ < 0) return;
    flush();
    ::close(fd_);
    fd_ = -1;
  }

 private:
  struct Entry {
    std::uint64_t offset = 0;
    std::size_t length = 0;
  };

  [[noreturn]] void fail_io(const char* what) const {
    throw EmbeddingError(EmbeddingErrc::CacheIo,
                         std::string("vector cache ") + what + " failed for " + path_ + ": " + std::strerror(errno));
  }

  void write_all(std::string_view bytes, std::uint64_t offset) {
    std::size_t done = 0;
    while (done < bytes.size()) {
      const ssize_t n = ::pwrite(fd_, bytes.data() + done, bytes.size() - done, static_cast<off_t>(offset + done));
      if (n < 0) {
        if (errno == EINTR) continue;
        fail_io("write");
      }
      done += static_cast<std::size_t>(n);
    }
  }

  void drop_footer_locked() {
    if (!footer_present_) return;
    if (::ftruncate(fd_, static_cast<off_t>(data_end_)) != 0) fail_io("truncate");
    footer_present_ = false;
  }

  std::string read_file() {
    struct stat st {};
    if (::fstat(fd_, &st) != 0) fail_io("stat");
    std::string data(static_cast<std::size_t>(st.st_size), '\0');
    std::size_t done = 0;
    while (done < data.size()) {
      const ssize_t n = ::pread(fd_, data.data() + done, data.size() - done, static_cast<off_t>(done));
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) fail_io("read");
      done += static_cast<std::size_t>(n);
    }
    return data;
  }

  bool load_footer(std::string_view data) {
    using namespace cache_detail;
    if (data.size() < kHeaderSize + 16 + 12) return false;
    if (std::memcmp(data.data() + data.size() - 8, kTrailer, 8) != 0) return false;
    Reader tail(data.substr(data.size() - 16, 8));
    const std::uint64_t footer_offset = tail.uint(8);
    if (footer_offset < kHeaderSize || footer_offset > data.size() - 16) return false;
    const std::string_view footer = data.substr(footer_offset, data.size() - 16 - footer_offset);
    if (footer.size() < 4) return false;
    Reader r(footer);
    if (r.uint(4) != kFooterMarker) return false;
    const std::uint64_t count = r.uint(8);
    std::map<std::pair<std::uint64_t, std::string>, Entry> index;
    for (std::uint64_t i = 0; i < count && r.ok(); ++i) {
      const std::uint64_t key = r.uint(8);
      const auto tag_len = static_cast<std::size_t>(r.uint(2));
      std::string tag(r.bytes(tag_len));
      const std::uint64_t offset = r.uint(8);
      if (!r.ok() || offset < kHeaderSize || offset >= footer_offset) return false;
      // Record length: marker, key, tag, dimension, values, crc.
      Reader rec(data.substr(offset, footer_offset - offset));
      rec.uint(4);
      rec.uint(8);
      const auto rec_tag_len = static_cast<std::size_t>(rec.uint(2));
      rec.bytes(rec_tag_len);
      const std::uint64_t dim = rec.uint(4);
      if (!rec.ok()) return false;
      const std::uint64_t length = 4 + 8 + 2 + rec_tag_len + 4 + 4 * dim + 4;
      if (offset + length > footer_offset) return false;
      index[{key, std::move(tag)}] = Entry{offset, static_cast<std::size_t>(length)};
    }
    const std::size_t body = r.pos();
    const auto stored_crc = static_cast<std::uint32_t>(r.uint(4));
    if (!r.ok() || r.remaining() != 0 || stored_crc != crc(footer.substr(0, body))) return false;
    index_ = std::move(index);
    data_end_ = footer_offset;
    return true;
  }

  void scan_records(std::string_view data) {
    using namespace cache_detail;
    std::size_t pos = kHeaderSize;
    while (pos < data.size()) {
      auto rec = decode_cache_record(data.substr(pos));
      if (!rec) break;
      index_[{rec->key, rec->vector.provider_tag()}] = Entry{pos, rec->size};
      pos += rec->size;
    }
    data_end_ = pos;
    stats_.discarded_tail_bytes = data.size() - pos;
    stats_.rebuilt_index = true;
  }

  void open() {
    using namespace cache_detail;
    fd_ = ::open(path_.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) fail_io("open");
    const std::string data = read_file();
    if (data.empty()) {
      std::string header(kMagic, sizeof kMagic);
      put_u32(header, kVersion);
      put_u32(header, 0);
      write_all(header, 0);
      data_end_ = kHeaderSize;
      return;
    }
    Reader r(data);
    const auto magic = r.bytes(8);
    const auto version = r.uint(4);
    r.uint(4);
    if (!r.ok() || magic != std::string_view(kMagic, 8) || version != kVersion) {
      ::close(fd_);
      fd_ = -1;
      throw EmbeddingError(EmbeddingErrc::CacheFormat, "not a vector cache file (or unsupported version): " + path_);
    }
    if (load_footer(data)) {
      footer_present_ = true;
      return;
    }
    scan_records(data);
    if (data_end_ != data.size() && ::ftruncate(fd_, static_cast<off_t>(data_end_)) != 0) fail_io("truncate");
  }

  std::string path_;
  int fd_ = -1;
  std::uint64_t data_end_ = 0;
  bool footer_present_ = false;
  std::map<std::pair<std::uint64_t, std::string>, Entry> index_;
  CacheStats stats_;
  mutable std::atomic<std::size_t> corrupt_reads_{0};
  mutable std::shared_mutex mutex_;
};

}  // namespace occmap::embedding
