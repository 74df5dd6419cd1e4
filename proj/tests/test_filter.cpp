#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>
#include <string>

#include "rpm/filter/cuckoo_filter.hpp"

using namespace rpm;
using filter::CuckooFilter;
using filter::DeleteResult;
using filter::FilterParams;
using filter::InsertResult;

namespace {

Bytes random_item(Rng& rng) {
  Bytes b(16);
  rng.fill(b);
  return b;
}

// Hash backend with explicit per-item assignments, for tests that need an
// exact bucket/fingerprint layout.
class PinnedHasher final : public filter::Hasher {
 public:
  std::map<std::string, std::uint64_t> buckets;
  std::map<std::string, std::uint64_t> fingerprints;
  std::map<std::uint32_t, std::uint64_t> displacements;

  std::uint64_t bucket_hash(std::span<const std::uint8_t> item) const override {
    return buckets.at(to_string(item));
  }
  std::uint64_t fingerprint_hash(std::span<const std::uint8_t> item) const override {
    return fingerprints.at(to_string(item));
  }
  std::uint64_t displacement_hash(std::uint32_t fingerprint) const override {
    auto it = displacements.find(fingerprint);
    return it == displacements.end() ? 0 : it->second;
  }
};

}  // namespace

TEST_CASE("parameter validation") {
  auto params = [](std::uint32_t m, std::uint32_t n, std::uint32_t f, std::uint32_t ev) {
    return FilterParams{m, n, f, ev, 0};
  };
  CHECK_NOTHROW(params(8, 4, 16, 500).validate());
  CHECK_THROWS_AS(params(0, 4, 16, 500).validate(), std::invalid_argument);
  CHECK_THROWS_AS(params(100, 4, 16, 500).validate(), std::invalid_argument);
  CHECK_THROWS_AS(params(8, 0, 16, 500).validate(), std::invalid_argument);
  CHECK_THROWS_AS(params(8, 4, 3, 500).validate(), std::invalid_argument);
  CHECK_THROWS_AS(params(8, 4, 33, 500).validate(), std::invalid_argument);
  CHECK_THROWS_AS(params(8, 4, 16, 0).validate(), std::invalid_argument);
  CHECK(params(8, 4, 16, 500).log2_buckets() == 3);
  CHECK(params(8, 4, 12, 500).slot_bytes() == 2);
  CHECK(params(8, 4, 17, 500).slot_bytes() == 3);
}

TEST_CASE("displacement is an involution over every bucket and fingerprint") {
  FilterParams p{64, 4, 12, 500, 0x1111};
  CuckooFilter f(p);
  for (std::uint32_t b = 0; b < 64; b += 7)
    for (std::uint32_t fp = 1; fp < (1u << 12); fp += 131)
      CHECK(f.alt_bucket(f.alt_bucket(b, fp), fp) == b);
}

TEST_CASE("candidate buckets are recomputable from a stored fingerprint") {
  // Partial-key property: given only (bucket, fingerprint) the other
  // candidate is alt_bucket(bucket, fingerprint); the item is not needed.
  FilterParams p{256, 4, 16, 500, 0x2222};
  CuckooFilter f(p);
  Rng items(42);
  for (int k = 0; k < 200; ++k) {
    Bytes item = random_item(items);
    auto [i, j] = f.candidate_buckets(item);
    std::uint32_t fp = f.fingerprint_of(item);
    CHECK(f.alt_bucket(i, fp) == j);
    CHECK(f.alt_bucket(j, fp) == i);
  }
}

TEST_CASE("fingerprints that truncate to zero are remapped to one") {
  auto hasher = std::make_shared<PinnedHasher>();
  hasher->buckets["z"] = 5;
  hasher->fingerprints["z"] = 0;  // truncates to the empty sentinel
  CuckooFilter f(FilterParams{8, 4, 16, 500, 0}, hasher);
  Rng rng(1);
  REQUIRE(f.insert(std::string_view("z"), rng) == InsertResult::Ok);
  CHECK(f.fingerprint_of(to_bytes("z")) == 1);
  CHECK(f.slot(5, 0) == 1);
  CHECK(f.lookup(std::string_view("z")));
  CHECK(f.erase(std::string_view("z")) == DeleteResult::Ok);
  CHECK_FALSE(f.lookup(std::string_view("z")));
}

TEST_CASE("eviction chain: x displaces a into bucket 4, a displaces c into bucket 1") {
  // m=8, n=4. x's candidates are buckets 2 and 6, both full. The insert
  // takes bucket 6, evicting "a" to its alternate bucket 4; 4 is also full,
  // so "a" displaces "c", which lands in bucket 1.
  auto hasher = std::make_shared<PinnedHasher>();
  constexpr std::uint32_t fp_x = 0xA, fp_a = 0xB, fp_c = 0xC;

  hasher->buckets["x"] = 2;
  hasher->fingerprints["x"] = fp_x;
  hasher->displacements[fp_x] = 4;  // 2 xor 4 = 6

  hasher->buckets["a"] = 6;
  hasher->fingerprints["a"] = fp_a;
  hasher->displacements[fp_a] = 2;  // 6 xor 2 = 4

  hasher->buckets["c"] = 4;
  hasher->fingerprints["c"] = fp_c;
  hasher->displacements[fp_c] = 5;  // 4 xor 5 = 1

  // Filler items pin buckets 2, 6 and 4 full; displacement 0 keeps both of
  // each filler's candidates in its own bucket.
  std::uint64_t next_fp = 0x100;
  auto fill = [&](const std::string& name, std::uint64_t bucket) {
    hasher->buckets[name] = bucket;
    hasher->fingerprints[name] = next_fp++;
  };
  for (int k = 0; k < 4; ++k) fill("d" + std::to_string(k), 2);
  for (int k = 0; k < 3; ++k) fill("e" + std::to_string(k), 6);
  for (int k = 0; k < 3; ++k) fill("f" + std::to_string(k), 4);

  CuckooFilter f(FilterParams{8, 4, 16, 500, 0}, hasher);
  Rng setup(77);
  REQUIRE(f.insert(std::string_view("a"), setup) == InsertResult::Ok);  // bucket 6, slot 0
  for (int k = 0; k < 3; ++k)
    REQUIRE(f.insert(std::string_view("e" + std::to_string(k)), setup) == InsertResult::Ok);
  REQUIRE(f.insert(std::string_view("c"), setup) == InsertResult::Ok);  // bucket 4, slot 0
  for (int k = 0; k < 3; ++k)
    REQUIRE(f.insert(std::string_view("f" + std::to_string(k)), setup) == InsertResult::Ok);
  for (int k = 0; k < 4; ++k)
    REQUIRE(f.insert(std::string_view("d" + std::to_string(k)), setup) == InsertResult::Ok);
  REQUIRE(f.slot(6, 0) == fp_a);
  REQUIRE(f.slot(4, 0) == fp_c);

  // Rng(3) draws: coin()=1 (start at bucket 6), below(4)=0, below(4)=0.
  Rng chain(3);
  REQUIRE(f.insert(std::string_view("x"), chain) == InsertResult::Ok);

  CHECK(f.slot(6, 0) == fp_x);  // x took a's slot in bucket 6
  CHECK(f.slot(4, 0) == fp_a);  // a took c's slot in bucket 4
  CHECK(f.slot(1, 0) == fp_c);  // c landed in the free bucket 1
  CHECK(f.lookup(std::string_view("x")));
  CHECK(f.lookup(std::string_view("a")));
  CHECK(f.lookup(std::string_view("c")));
  CHECK(f.item_count() == 13);
}

TEST_CASE("failed insert rolls the filter back to its exact prior state") {
  // One bucket, displacement 0: capacity is n slots and the n+1st insert
  // must walk its full eviction budget and then undo every swap.
  auto hasher = std::make_shared<PinnedHasher>();
  for (int k = 0; k < 5; ++k) {
    hasher->buckets["i" + std::to_string(k)] = 3;
    hasher->fingerprints["i" + std::to_string(k)] = 0x10 + k;
  }
  CuckooFilter f(FilterParams{8, 4, 16, 7, 0}, hasher);
  Rng rng(9);
  for (int k = 0; k < 4; ++k)
    REQUIRE(f.insert(std::string_view("i" + std::to_string(k)), rng) == InsertResult::Ok);

  CuckooFilter before = f;
  CHECK(f.insert(std::string_view("i4"), rng) == InsertResult::FilterFull);
  CHECK(f == before);
  CHECK(f.item_count() == 4);
  for (int k = 0; k < 4; ++k) CHECK(f.lookup(std::string_view("i" + std::to_string(k))));
}

TEST_CASE("no false negatives below capacity") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    FilterParams p{256, 4, 16, 500, seed};
    CuckooFilter f(p);
    Rng rng(seed);
    Rng items(seed ^ 0xf00d);
    std::vector<Bytes> kept;
    for (std::size_t k = 0; k < p.slot_count() / 2; ++k) {
      Bytes item = random_item(items);
      REQUIRE(f.insert(item, rng) == InsertResult::Ok);
      kept.push_back(std::move(item));
    }
    for (const auto& item : kept) REQUIRE(f.lookup(item));
  }
}

TEST_CASE("duplicate insertions occupy one slot each and delete one at a time") {
  FilterParams p{64, 4, 16, 500, 0x3333};
  CuckooFilter f(p);
  Rng rng(5);
  Bytes item = to_bytes("dup");
  for (int k = 0; k < 3; ++k) REQUIRE(f.insert(item, rng) == InsertResult::Ok);
  CHECK(f.item_count() == 3);
  CHECK(f.erase(item) == DeleteResult::Ok);
  CHECK(f.lookup(item));
  CHECK(f.erase(item) == DeleteResult::Ok);
  CHECK(f.lookup(item));
  CHECK(f.erase(item) == DeleteResult::Ok);
  CHECK_FALSE(f.lookup(item));
  CHECK(f.erase(item) == DeleteResult::NotFound);
  CHECK(f.item_count() == 0);
}

TEST_CASE("erase of an absent item is NotFound and leaves the filter unchanged") {
  FilterParams p{64, 4, 16, 500, 0x4444};
  CuckooFilter f(p);
  Rng rng(6);
  REQUIRE(f.insert(std::string_view("present"), rng) == InsertResult::Ok);
  CuckooFilter before = f;
  CHECK(f.erase(std::string_view("absent")) == DeleteResult::NotFound);
  CHECK(f == before);
}

TEST_CASE("achieved load before first failure stays high across 100 seeds") {
  // Frozen sweep over seeds 1..100 at m=16 n=4 f=16: min 0.9062, mean 0.9828.
  double min_load = 1.0, sum = 0.0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    FilterParams p{16, 4, 16, 500, seed * 77};
    CuckooFilter f(p);
    Rng rng(seed);
    Rng items(seed ^ 0xabcdef);
    for (;;) {
      Bytes item = random_item(items);
      if (f.insert(item, rng) == InsertResult::FilterFull) break;
    }
    min_load = std::min(min_load, f.load_factor());
    sum += f.load_factor();
  }
  CHECK(min_load >= 0.90);
  CHECK(sum / 100.0 >= 0.95);
}

TEST_CASE("pairwise fingerprint collisions match the birthday expectation") {
  // 10^4 random items at f=16: C(10^4,2)/2^16 = 762.86 expected colliding
  // pairs, sigma = 27.6. The frozen draw (item seed 99) gives 809, inside
  // the 4-sigma band [652, 873].
  FilterParams p{1024, 4, 16, 500, 0x5eed};
  CuckooFilter f(p);
  std::map<std::uint32_t, int> counts;
  Rng items(99);
  for (int i = 0; i < 10000; ++i) ++counts[f.fingerprint_of(random_item(items))];
  long long collisions = 0;
  for (const auto& [fp, k] : counts) collisions += 1ll * k * (k - 1) / 2;
  CHECK(collisions == 809);
  CHECK(collisions >= 652);
  CHECK(collisions <= 873);
}

TEST_CASE("false positive rate at load 0.7 stays under three times the analytic bound") {
  FilterParams p{1024, 4, 16, 500, 0x6a6a};
  CuckooFilter f(p);
  Rng rng(11);
  Rng items(12);
  auto target = static_cast<std::size_t>(0.7 * static_cast<double>(p.slot_count()));
  for (std::size_t k = 0; k < target; ++k)
    REQUIRE(f.insert(random_item(items), rng) == InsertResult::Ok);

  std::size_t positives = 0;
  const std::size_t queries = 20000;
  for (std::size_t q = 0; q < queries; ++q)
    if (f.lookup(random_item(items))) ++positives;
  double rate = static_cast<double>(positives) / static_cast<double>(queries);
  CHECK(rate <= 3.0 * (2.0 * 4.0 / 65536.0));
}

TEST_CASE("snapshot bytes match the frozen golden values") {
  FilterParams p{8, 4, 16, 500, 0};
  CuckooFilter empty(p);
  CHECK(to_hex(empty.serialize()) ==
        "434b4631011004030000000000000000000000000000000000000000000000000000000000000000"
        "0000000000000000000000000000000000000000000000000000000000000000000000000000000000"
        "000000");

  FilterParams p2{8, 4, 16, 500, 0x1234};
  CuckooFilter f(p2);
  Rng rng(1);
  for (auto s : {"alpha", "beta", "gamma"}) REQUIRE(f.insert(std::string_view(s), rng) == InsertResult::Ok);
  CHECK(to_hex(f.serialize()) ==
        "434b463101100403341200000000000003000000970d0000000000000000000000000000"
        "7df70000000000000000000000000000000000000000000000000000000000000000000000000000"
        "731d000000000000");
}

TEST_CASE("serialize round-trips through deserialize") {
  FilterParams p{32, 4, 12, 500, 0x7777};
  CuckooFilter f(p);
  Rng rng(21);
  Rng items(22);
  std::vector<Bytes> kept;
  for (int k = 0; k < 60; ++k) {
    Bytes item = random_item(items);
    REQUIRE(f.insert(item, rng) == InsertResult::Ok);
    kept.push_back(std::move(item));
  }
  CuckooFilter g = CuckooFilter::deserialize(f.serialize());
  CHECK(g == f);
  CHECK(g.item_count() == f.item_count());
  for (const auto& item : kept) CHECK(g.lookup(item));
  CHECK(to_hex(g.serialize()) == to_hex(f.serialize()));
}

TEST_CASE("deserialize rejects malformed snapshots") {
  FilterParams p{8, 4, 16, 500, 0xbeef};
  CuckooFilter f(p);
  Rng rng(31);
  REQUIRE(f.insert(std::string_view("one"), rng) == InsertResult::Ok);
  Bytes good = f.serialize();
  REQUIRE_NOTHROW(CuckooFilter::deserialize(good));

  auto mutate = [&](std::size_t index, std::uint8_t value) {
    Bytes bad = good;
    bad[index] = value;
    return bad;
  };
  CHECK_THROWS(CuckooFilter::deserialize(mutate(0, 'X')));      // magic
  CHECK_THROWS(CuckooFilter::deserialize(mutate(4, 9)));        // version
  CHECK_THROWS(CuckooFilter::deserialize(mutate(5, 3)));        // f below minimum
  CHECK_THROWS(CuckooFilter::deserialize(mutate(6, 0)));        // n = 0
  CHECK_THROWS(CuckooFilter::deserialize(mutate(7, 29)));       // log2(m) too large
  CHECK_THROWS(CuckooFilter::deserialize(mutate(16, 200)));     // count > capacity

  Bytes truncated(good.begin(), good.end() - 1);
  CHECK_THROWS(CuckooFilter::deserialize(truncated));
  Bytes extended = good;
  extended.push_back(0);
  CHECK_THROWS(CuckooFilter::deserialize(extended));

  // Count that disagrees with the occupied slots.
  Bytes wrong_count = good;
  wrong_count[16] = 2;
  CHECK_THROWS(CuckooFilter::deserialize(wrong_count));

  // A slot value above the fingerprint mask (f=12 leaves the top nibble 0).
  FilterParams p12{8, 4, 12, 500, 0xbeef};
  CuckooFilter f12(p12);
  Rng rng12(32);
  REQUIRE(f12.insert(std::string_view("one"), rng12) == InsertResult::Ok);
  Bytes overflow = f12.serialize();
  for (std::size_t k = 20; k + 1 < overflow.size(); k += 2) {
    if (overflow[k] != 0 || overflow[k + 1] != 0) {
      overflow[k + 1] |= 0xf0;
      break;
    }
  }
  CHECK_THROWS(CuckooFilter::deserialize(overflow));
}
