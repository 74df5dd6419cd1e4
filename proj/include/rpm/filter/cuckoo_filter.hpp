#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string_view>
#include <utility>
#include <vector>

#include "rpm/bytes.hpp"
#include "rpm/rng.hpp"

namespace rpm::filter {

// Thrown by CuckooFilter::deserialize on bad magic, version, field ranges,
// or length mismatches.
struct MalformedSnapshot : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FilterParams {
  std::uint32_t bucket_count = 1u << 10;   // m, must be a power of two
  std::uint32_t entries_per_bucket = 4;    // n
  std::uint32_t fingerprint_bits = 16;     // f, in [4, 32]
  std::uint32_t max_evictions = 500;
  std::uint64_t hash_seed = 0;

  void validate() const;                   // throws std::invalid_argument
  std::uint8_t log2_buckets() const;
  std::size_t slot_count() const { return std::size_t{bucket_count} * entries_per_bucket; }
  std::size_t slot_bytes() const { return (fingerprint_bits + 7) / 8; }
};

// Hash backend seam. The production backend derives everything from one
// keyed 64-bit hash; tests substitute a pinned backend to force specific
// bucket/fingerprint assignments.
class Hasher {
 public:
  virtual ~Hasher() = default;
  // Source bits for the primary bucket index of an item.
  virtual std::uint64_t bucket_hash(std::span<const std::uint8_t> item) const = 0;
  // Source bits for the item's fingerprint.
  virtual std::uint64_t fingerprint_hash(std::span<const std::uint8_t> item) const = 0;
  // Hash of a fingerprint, used for the partial-key displacement term.
  virtual std::uint64_t displacement_hash(std::uint32_t fingerprint) const = 0;
};

class SeededHasher final : public Hasher {
 public:
  explicit SeededHasher(std::uint64_t seed) : seed_(seed) {}
  std::uint64_t bucket_hash(std::span<const std::uint8_t> item) const override {
    return hash64(item, seed_);
  }
  std::uint64_t fingerprint_hash(std::span<const std::uint8_t> item) const override {
    return hash64(item, seed_ ^ 0x9ae16a3b2f90404full);
  }
  std::uint64_t displacement_hash(std::uint32_t fingerprint) const override {
    return splitmix64(seed_ ^ (std::uint64_t{fingerprint} * 0x5bd1e995u));
  }

 private:
  std::uint64_t seed_;
};

enum class InsertResult { Ok, FilterFull };
enum class DeleteResult { Ok, NotFound };

// Cuckoo filter with partial-key displacement: an item's fingerprint can
// live in bucket i = bucket_hash(x) mod m or j = i xor (displacement_hash(fp)
// mod m). Because m is a power of two, the xor maps j back to i, so any
// stored fingerprint's other candidate bucket is computable without the item.
// Slot value 0 means empty; fingerprints that truncate to 0 are stored as 1.
class CuckooFilter {
 public:
  explicit CuckooFilter(FilterParams params);
  CuckooFilter(FilterParams params, std::shared_ptr<const Hasher> hasher);

  std::uint32_t fingerprint_of(std::span<const std::uint8_t> item) const;
  std::pair<std::uint32_t, std::uint32_t> candidate_buckets(std::span<const std::uint8_t> item) const;
  std::uint32_t alt_bucket(std::uint32_t bucket, std::uint32_t fingerprint) const;

  // rng drives the two tie-break choices the algorithm needs: which candidate
  // bucket starts an eviction chain and which slot gets displaced. On
  // FilterFull the chain of swaps is rolled back, leaving the filter exactly
  // as it was before the call.
  InsertResult insert(std::span<const std::uint8_t> item, Rng& rng);
  bool lookup(std::span<const std::uint8_t> item) const;
  // Removes exactly one matching fingerprint from either candidate bucket.
  DeleteResult erase(std::span<const std::uint8_t> item);

  InsertResult insert(std::string_view item, Rng& rng) { return insert(to_bytes(item), rng); }
  bool lookup(std::string_view item) const { return lookup(to_bytes(item)); }
  DeleteResult erase(std::string_view item) { return erase(to_bytes(item)); }
  InsertResult insert(const Bytes& item, Rng& rng) { return insert(std::span<const std::uint8_t>(item), rng); }
  bool lookup(const Bytes& item) const { return lookup(std::span<const std::uint8_t>(item)); }
  DeleteResult erase(const Bytes& item) { return erase(std::span<const std::uint8_t>(item)); }

  std::size_t item_count() const { return item_count_; }
  std::size_t capacity() const { return params_.slot_count(); }
  double load_factor() const {
    return static_cast<double>(item_count_) / static_cast<double>(capacity());
  }
  const FilterParams& params() const { return params_; }

  // Snapshot layout (all integers little-endian):
  //   magic "CKF1" | version u8 | f u8 | n u8 | log2(m) u8 |
  //   hash_seed u64 | item_count u32 | m*n slots of ceil(f/8) bytes,
  //   bucket-major.
  Bytes serialize() const;
  static CuckooFilter deserialize(std::span<const std::uint8_t> snapshot);

  // Raw slot access for tests and integrity scans; 0 = empty.
  std::uint32_t slot(std::uint32_t bucket, std::uint32_t entry) const {
    return slots_[std::size_t{bucket} * params_.entries_per_bucket + entry];
  }

  bool operator==(const CuckooFilter& other) const;

 private:
  bool try_place(std::uint32_t bucket, std::uint32_t fingerprint);
  std::uint32_t& slot_ref(std::uint32_t bucket, std::uint32_t entry) {
    return slots_[std::size_t{bucket} * params_.entries_per_bucket + entry];
  }

  FilterParams params_;
  std::shared_ptr<const Hasher> hasher_;
  std::vector<std::uint32_t> slots_;
  std::uint32_t item_count_ = 0;
};

}  // namespace rpm::filter
