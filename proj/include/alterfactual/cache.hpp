#pragma once

#include <chrono>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <utility>
#include <vector>

#include <zlib.h>

#include "alterfactual/errors.hpp"
#include "alterfactual/textcore.hpp"

namespace alterfactual {

struct OppositeCandidate {
  std::string word;
  OppositeRelation relation;
  std::string source_word;

  friend bool operator==(const OppositeCandidate&, const OppositeCandidate&) = default;
};

struct CacheKey {
  std::string provider;
  std::string word;  // normalized

  friend auto operator<=>(const CacheKey&, const CacheKey&) = default;
};

// An empty candidate list is the negative-result marker.
struct CacheEntry {
  CacheKey key;
  std::vector<OppositeCandidate> candidates;
  std::int64_t fetched_at = 0;  // unix seconds

  bool negative() const { return candidates.empty(); }
  friend bool operator==(const CacheEntry&, const CacheEntry&) = default;
};

namespace cache_format {

// Record layout, little-endian:
//   u32 magic "AFC1" | u32 payload length | payload | u32 crc32(payload)
// payload:
//   str provider | str word | i64 fetched_at | u32 count |
//   count x (str word | u8 kind | f64 weight | str source_word)
// str = u32 byte length + bytes.
inline constexpr std::uint32_t kMagic = 0x31434641;  // "AFC1"

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_str(std::string& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  bool u32(std::uint32_t& v) {
    if (pos_ + 4 > data_.size()) return false;
    v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return true;
  }
  bool u64(std::uint64_t& v) {
    if (pos_ + 8 > data_.size()) return false;
    v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return true;
  }
  bool u8(std::uint8_t& v) {
    if (pos_ + 1 > data_.size()) return false;
    v = static_cast<std::uint8_t>(data_[pos_++]);
    return true;
  }
  bool str(std::string& s) {
    std::uint32_t n;
    if (!u32(n) || pos_ + n > data_.size()) return false;
    s.assign(data_.substr(pos_, n));
    pos_ += n;
    return true;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
};

inline std::uint32_t crc(std::string_view bytes) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

inline std::string encode_payload(const CacheEntry& e) {
  std::string p;
  put_str(p, e.key.provider);
  put_str(p, e.key.word);
  put_u64(p, static_cast<std::uint64_t>(e.fetched_at));
  put_u32(p, static_cast<std::uint32_t>(e.candidates.size()));
  for (const auto& c : e.candidates) {
    put_str(p, c.word);
    p.push_back(static_cast<char>(c.relation.kind));
    std::uint64_t bits;
    std::memcpy(&bits, &c.relation.weight, sizeof bits);
    put_u64(p, bits);
    put_str(p, c.source_word);
  }
  return p;
}

inline std::optional<CacheEntry> decode_payload(std::string_view payload) {
  Reader r(payload);
  CacheEntry e;
  std::uint64_t fetched;
  std::uint32_t count;
  if (!r.str(e.key.provider) || !r.str(e.key.word) || !r.u64(fetched) || !r.u32(count)) return std::nullopt;
  e.fetched_at = static_cast<std::int64_t>(fetched);
  for (std::uint32_t i = 0; i < count; ++i) {
    OppositeCandidate c;
    std::uint8_t kind;
    std::uint64_t bits;
    if (!r.str(c.word) || !r.u8(kind) || !r.u64(bits) || !r.str(c.source_word)) return std::nullopt;
    if (kind > static_cast<std::uint8_t>(RelationKind::Deletion)) return std::nullopt;
    c.relation.kind = static_cast<RelationKind>(kind);
    std::memcpy(&c.relation.weight, &bits, sizeof bits);
    e.candidates.push_back(std::move(c));
  }
  if (!r.done()) return std::nullopt;
  return e;
}

inline std::string encode_record(const CacheEntry& e) {
  auto payload = encode_payload(e);
  std::string rec;
  put_u32(rec, kMagic);
  put_u32(rec, static_cast<std::uint32_t>(payload.size()));
  rec += payload;
  put_u32(rec, crc(payload));
  return rec;
}

}  // namespace cache_format

// Single-file append-only key/value store for opposite-word lookups. The last
// intact record for a key wins. A record that fails its checksum is skipped;
// a broken frame ends the readable region and the file is truncated there so
// new records stay reachable. With an empty path the store is memory-only.
class CacheStore {
 public:
  using Clock = std::function<std::int64_t()>;

  static std::int64_t system_now() {
    return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
  }

  explicit CacheStore(std::string path = {}, std::chrono::seconds ttl = std::chrono::hours(24 * 30),
                      Clock clock = &CacheStore::system_now)
      : path_(std::move(path)), ttl_(ttl), clock_(std::move(clock)) {
    if (!path_.empty()) load();
  }

  CacheStore(const CacheStore&) = delete;
  CacheStore& operator=(const CacheStore&) = delete;

  std::optional<CacheEntry> get(const CacheKey& key) const {
    std::shared_lock lock(mu_);
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    if (clock_() - it->second.fetched_at > ttl_.count()) return std::nullopt;
    return it->second;
  }

  void put(CacheEntry entry) {
    std::unique_lock lock(mu_);
    if (!path_.empty()) {
      std::ofstream out(path_, std::ios::binary | std::ios::app);
      if (!out) throw ConfigError("cannot write cache file: " + path_);
      out << cache_format::encode_record(entry);
      out.flush();
    }
    entries_[entry.key] = std::move(entry);
  }

  std::int64_t now() const { return clock_(); }
  std::size_t size() const {
    std::shared_lock lock(mu_);
    return entries_.size();
  }
  std::size_t skipped_records() const { return skipped_; }

 private:
  void load() {
    std::ifstream in(path_, std::ios::binary);
    if (!in) return;
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::size_t pos = 0;
    while (pos < data.size()) {
      cache_format::Reader header(std::string_view(data).substr(pos));
      std::uint32_t magic = 0, len = 0, stored_crc = 0;
      if (!header.u32(magic) || magic != cache_format::kMagic || !header.u32(len) || pos + 12 + len > data.size()) {
        break;
      }
      std::string_view payload(data.data() + pos + 8, len);
      cache_format::Reader tail(std::string_view(data).substr(pos + 8 + len));
      tail.u32(stored_crc);
      pos += 12 + len;
      auto entry = stored_crc == cache_format::crc(payload) ? cache_format::decode_payload(payload) : std::nullopt;
      if (!entry) {
        ++skipped_;
        continue;
      }
      entries_[entry->key] = std::move(*entry);
    }
    if (pos < data.size()) {
      ++skipped_;
      std::filesystem::resize_file(path_, pos);
    }
  }

  std::string path_;
  std::chrono::seconds ttl_;
  Clock clock_;
  mutable std::shared_mutex mu_;
  std::map<CacheKey, CacheEntry> entries_;
  std::size_t skipped_ = 0;
};

}  // namespace alterfactual
