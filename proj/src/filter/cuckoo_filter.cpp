#include "rpm/filter/cuckoo_filter.hpp"

#include <algorithm>
#include <bit>

namespace rpm::filter {

void FilterParams::validate() const {
  if (bucket_count == 0 || !std::has_single_bit(bucket_count))
    throw std::invalid_argument("bucket_count must be a power of two");
  if (entries_per_bucket == 0)
    throw std::invalid_argument("entries_per_bucket must be positive");
  if (fingerprint_bits < 4 || fingerprint_bits > 32)
    throw std::invalid_argument("fingerprint_bits must be in [4, 32]");
  if (max_evictions == 0)
    throw std::invalid_argument("max_evictions must be positive");
}

std::uint8_t FilterParams::log2_buckets() const {
  return static_cast<std::uint8_t>(std::countr_zero(bucket_count));
}

CuckooFilter::CuckooFilter(FilterParams params)
    : CuckooFilter(params, std::make_shared<SeededHasher>(params.hash_seed)) {}

CuckooFilter::CuckooFilter(FilterParams params, std::shared_ptr<const Hasher> hasher)
    : params_(params), hasher_(std::move(hasher)) {
  params_.validate();
  slots_.assign(params_.slot_count(), 0);
}

std::uint32_t CuckooFilter::fingerprint_of(std::span<const std::uint8_t> item) const {
  std::uint64_t mask = params_.fingerprint_bits == 32
                           ? 0xffffffffull
                           : (1ull << params_.fingerprint_bits) - 1;
  std::uint32_t fp = static_cast<std::uint32_t>(hasher_->fingerprint_hash(item) & mask);
  return fp == 0 ? 1 : fp;  // 0 is the empty-slot sentinel
}

std::uint32_t CuckooFilter::alt_bucket(std::uint32_t bucket, std::uint32_t fingerprint) const {
  std::uint32_t m_mask = params_.bucket_count - 1;
  return (bucket ^ static_cast<std::uint32_t>(hasher_->displacement_hash(fingerprint))) & m_mask;
}

std::pair<std::uint32_t, std::uint32_t> CuckooFilter::candidate_buckets(
    std::span<const std::uint8_t> item) const {
  std::uint32_t m_mask = params_.bucket_count - 1;
  std::uint32_t i = static_cast<std::uint32_t>(hasher_->bucket_hash(item)) & m_mask;
  return {i, alt_bucket(i, fingerprint_of(item))};
}

bool CuckooFilter::try_place(std::uint32_t bucket, std::uint32_t fingerprint) {
  for (std::uint32_t e = 0; e < params_.entries_per_bucket; ++e) {
    std::uint32_t& s = slot_ref(bucket, e);
    if (s == 0) {
      s = fingerprint;
      return true;
    }
  }
  return false;
}

InsertResult CuckooFilter::insert(std::span<const std::uint8_t> item, Rng& rng) {
  std::uint32_t fp = fingerprint_of(item);
  auto [i, j] = candidate_buckets(item);

  if (try_place(i, fp) || try_place(j, fp)) {
    ++item_count_;
    return InsertResult::Ok;
  }

  // Both candidates full: displace along a bounded eviction chain. Each step
  // swaps the carried fingerprint with a random occupant and moves to that
  // occupant's alternate bucket.
  std::uint32_t bucket = rng.coin() ? j : i;
  std::uint32_t carried = fp;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> chain;
  chain.reserve(params_.max_evictions);

  for (std::uint32_t step = 0; step < params_.max_evictions; ++step) {
    std::uint32_t entry = static_cast<std::uint32_t>(rng.below(params_.entries_per_bucket));
    std::swap(carried, slot_ref(bucket, entry));
    chain.emplace_back(bucket, entry);

    bucket = alt_bucket(bucket, carried);
    if (try_place(bucket, carried)) {
      ++item_count_;
      return InsertResult::Ok;
    }
  }

  // Every swap is a transposition, so undoing them in reverse order restores
  // the exact pre-call state even if the chain revisited a slot.
  for (auto it = chain.rbegin(); it != chain.rend(); ++it)
    std::swap(carried, slot_ref(it->first, it->second));
  return InsertResult::FilterFull;
}

bool CuckooFilter::lookup(std::span<const std::uint8_t> item) const {
  std::uint32_t fp = fingerprint_of(item);
  auto [i, j] = candidate_buckets(item);
  for (std::uint32_t e = 0; e < params_.entries_per_bucket; ++e)
    if (slot(i, e) == fp || slot(j, e) == fp) return true;
  return false;
}

DeleteResult CuckooFilter::erase(std::span<const std::uint8_t> item) {
  std::uint32_t fp = fingerprint_of(item);
  auto [i, j] = candidate_buckets(item);
  for (std::uint32_t bucket : {i, j}) {
    for (std::uint32_t e = 0; e < params_.entries_per_bucket; ++e) {
      std::uint32_t& s = slot_ref(bucket, e);
      if (s == fp) {
        s = 0;
        --item_count_;
        return DeleteResult::Ok;
      }
    }
  }
  return DeleteResult::NotFound;
}

namespace {
constexpr char kMagic[4] = {'C', 'K', 'F', '1'};
constexpr std::uint8_t kVersion = 1;
}  // namespace

Bytes CuckooFilter::serialize() const {
  ByteWriter w;
  w.raw(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(kMagic), 4));
  w.u8(kVersion);
  w.u8(static_cast<std::uint8_t>(params_.fingerprint_bits));
  w.u8(static_cast<std::uint8_t>(params_.entries_per_bucket));
  w.u8(params_.log2_buckets());
  w.u64(params_.hash_seed);
  w.u32(item_count_);
  std::size_t width = params_.slot_bytes();
  for (std::uint32_t s : slots_)
    for (std::size_t b = 0; b < width; ++b) w.u8(static_cast<std::uint8_t>(s >> (8 * b)));
  return w.take();
}

CuckooFilter CuckooFilter::deserialize(std::span<const std::uint8_t> snapshot) {
  try {
    ByteReader r(snapshot);
    auto magic = r.raw(4);
    if (!std::equal(magic.begin(), magic.end(), kMagic))
      throw MalformedSnapshot("bad magic");
    if (r.u8() != kVersion) throw MalformedSnapshot("unsupported version");

    FilterParams params;
    params.fingerprint_bits = r.u8();
    params.entries_per_bucket = r.u8();
    std::uint8_t log2m = r.u8();
    if (log2m > 28) throw MalformedSnapshot("bucket count out of range");
    params.bucket_count = 1u << log2m;
    params.hash_seed = r.u64();
    std::uint32_t count = r.u32();

    try {
      params.validate();
    } catch (const std::invalid_argument& e) {
      throw MalformedSnapshot(e.what());
    }

    if (count > params.slot_count()) throw MalformedSnapshot("item_count exceeds capacity");
    if (r.remaining() != params.slot_count() * params.slot_bytes())
      throw MalformedSnapshot("slot data length mismatch");

    CuckooFilter filter(params);
    std::uint64_t fp_mask = params.fingerprint_bits == 32
                                ? 0xffffffffull
                                : (1ull << params.fingerprint_bits) - 1;
    std::uint32_t occupied = 0;
    std::size_t width = params.slot_bytes();
    for (std::uint32_t& s : filter.slots_) {
      std::uint32_t v = 0;
      auto bytes = r.raw(width);
      for (std::size_t b = 0; b < width; ++b) v |= std::uint32_t{bytes[b]} << (8 * b);
      if (v != (v & fp_mask)) throw MalformedSnapshot("fingerprint exceeds f bits");
      if (v != 0) ++occupied;
      s = v;
    }
    if (occupied != count) throw MalformedSnapshot("item_count does not match slots");
    filter.item_count_ = count;
    return filter;
  } catch (const WireError& e) {
    throw MalformedSnapshot(e.what());
  }
}

bool CuckooFilter::operator==(const CuckooFilter& other) const {
  return params_.bucket_count == other.params_.bucket_count &&
         params_.entries_per_bucket == other.params_.entries_per_bucket &&
         params_.fingerprint_bits == other.params_.fingerprint_bits &&
         params_.hash_seed == other.params_.hash_seed &&
         item_count_ == other.item_count_ && slots_ == other.slots_;
}

}  // namespace rpm::filter
