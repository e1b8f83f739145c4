#include <catch_amalgamated.hpp>
#include <openssl/sha.h>

#include <bit>
#include <random>
#include <set>

#include "pufchain/ledger.hpp"

using namespace pufchain;

namespace {

Response random_response(std::mt19937_64& g) {
  std::vector<bool> b(128);
  for (auto&& x : b) x = g() & 1;
  return Response(b);
}

BlockData random_block(std::mt19937_64& g, std::size_t max_payload = 64) {
  BlockData d;
  d.device_id = DeviceId(g() & DeviceId::kMax);
  d.seq = g();
  d.t_init = g();
  d.payload.resize(g() % (max_payload + 1));
  for (auto& b : d.payload) b = static_cast<std::uint8_t>(g());
  return d;
}

Chain random_chain(std::uint64_t seed, std::size_t n) {
  std::mt19937_64 g(seed);
  Chain c;
  for (std::size_t k = 0; k < n; ++k) {
    const auto d = random_block(g, 24);
    c = std::move(c).append(d, make_auth_tag(d, random_response(g)), DeviceId(0x020000000001), 1000 + k);
  }
  return c;
}

// Entry hash rebuilt from the documented byte layout and hashed by OpenSSL.
Digest oracle_entry_hash(const ChainEntry& e) {
  std::vector<std::uint8_t> buf;
  auto be = [&](std::uint64_t v, int w) {
    for (int i = w - 1; i >= 0; --i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  be(e.height, 8);
  buf.insert(buf.end(), e.prev_hash.begin(), e.prev_hash.end());
  be(e.data.device_id.value(), 6);
  be(e.data.seq, 8);
  be(e.data.t_init, 8);
  be(e.data.payload.size(), 4);
  buf.insert(buf.end(), e.data.payload.begin(), e.data.payload.end());
  buf.insert(buf.end(), e.auth_tag.h.begin(), e.auth_tag.h.end());
  be(e.trusted_node_id.value(), 6);
  be(e.t_validated, 8);
  Digest d{};
  SHA256(buf.data(), buf.size(), d.data());
  return d;
}

}  // namespace

TEST_CASE("canonical encoding of the minimal block") {
  const BlockData d{DeviceId(1), 0, 0, {}};
  const auto bytes = canonical_bytes(d);
  Bytes expected(26, 0);
  expected[5] = 0x01;
  CHECK(bytes == expected);
}

TEST_CASE("canonical encoding field layout") {
  const BlockData d{DeviceId(0x010203040506), 0x1112131415161718ULL, 0x2122232425262728ULL, {0xAA, 0xBB}};
  CHECK(hex::encode(canonical_bytes(d)) == "010203040506" "1112131415161718" "2122232425262728" "00000002" "aabb");
}

TEST_CASE("canonical encoding round-trips") {
  std::mt19937_64 g(1);
  for (int i = 0; i < 2000; ++i) {
    const auto d = random_block(g, 300);
    REQUIRE(parse_canonical(canonical_bytes(d)) == d);
  }
  CHECK_THROWS_AS(parse_canonical(Bytes(25, 0)), ParseError);
  Bytes bad(27, 0);
  CHECK_THROWS_AS(parse_canonical(bad), ParseError);
}

TEST_CASE("encodings stay distinct around the length boundary") {
  // All payloads of length 0 and 1 plus every 2-byte payload that starts
  // with a byte equal to a length-field byte.
  std::set<Bytes> seen;
  std::size_t n = 0;
  const DeviceId id(7);
  seen.insert(canonical_bytes({id, 1, 2, {}}));
  ++n;
  for (int a = 0; a < 256; ++a) {
    seen.insert(canonical_bytes({id, 1, 2, {static_cast<std::uint8_t>(a)}}));
    ++n;
    for (int b : {0, 1, 2, 255}) {
      seen.insert(canonical_bytes({id, 1, 2, {static_cast<std::uint8_t>(a), static_cast<std::uint8_t>(b)}}));
      ++n;
    }
  }
  CHECK(seen.size() == n);
}

TEST_CASE("payload size limit") {
  BlockData d{DeviceId(1), 0, 0, Bytes(kMaxPayload, 1)};
  CHECK(canonical_bytes(d).size() == 26 + kMaxPayload);
  d.payload.push_back(0);
  CHECK_THROWS_AS(canonical_bytes(d), SizeError);
}

TEST_CASE("auth tag matches an independent SHA-256 of data and packed response") {
  std::mt19937_64 g(2);
  for (int i = 0; i < 200; ++i) {
    const auto d = random_block(g);
    const auto r = random_response(g);
    auto buf = canonical_bytes(d);
    const auto rb = r.to_bytes();
    REQUIRE(rb.size() == 16);
    buf.insert(buf.end(), rb.begin(), rb.end());
    Digest ref{};
    SHA256(buf.data(), buf.size(), ref.data());
    REQUIRE(make_auth_tag(d, r).h == ref);
    REQUIRE(make_auth_tag(d, r) == make_auth_tag(d, r));
  }
  CHECK_THROWS_AS(make_auth_tag(BlockData{}, Response(std::vector<bool>(64))), ArgumentError);
}

TEST_CASE("auth tag avalanche on single response bit flips") {
  std::mt19937_64 g(3);
  double total = 0;
  const int trials = 1000;
  for (int i = 0; i < trials; ++i) {
    const auto d = random_block(g);
    auto r = random_response(g);
    const auto a = make_auth_tag(d, r);
    const auto k = g() % 128;
    r.bits[k] = !r.bits[k];
    const auto b = make_auth_tag(d, r);
    int diff = 0;
    for (int j = 0; j < 32; ++j) diff += std::popcount(static_cast<unsigned>(a.h[j] ^ b.h[j]));
    total += diff;
  }
  // Binomial(256, 1/2) mean 128, sd 8; the mean of 1000 has sd 0.25.
  CHECK(std::abs(total / trials - 128.0) < 1.5);
}

TEST_CASE("auth tag binds the response across a million trials") {
  std::mt19937_64 g(4);
  const auto d = random_block(g);
  std::size_t collisions = 0;
  for (int i = 0; i < 1'000'000; ++i) {
    const auto r1 = random_response(g);
    auto r2 = random_response(g);
    if (r2 == r1) r2.bits[0] = !r2.bits[0];
    collisions += make_auth_tag(d, r1) == make_auth_tag(d, r2);
  }
  CHECK(collisions == 0);
}

TEST_CASE("genesis and linkage") {
  const auto c = random_chain(5, 3);
  CHECK(Chain().size() == 0);
  CHECK(verify(Chain()).ok());
  CHECK(c[0].height == 0);
  CHECK(c[0].prev_hash == Digest{});
  CHECK(c[1].prev_hash == c[0].entry_hash);
  CHECK(c[2].prev_hash == c[1].entry_hash);
  for (const auto& e : c.entries()) CHECK(e.entry_hash == oracle_entry_hash(e));
}

TEST_CASE("append keeps the original value and verified chains stay verified") {
  std::mt19937_64 g(6);
  Chain c;
  for (int i = 0; i < 50; ++i) {
    const auto before = c;
    const auto text_before = chain_to_text(c);
    const auto d = random_block(g);
    const auto next = c.append(d, make_auth_tag(d, random_response(g)), DeviceId(9), i);
    REQUIRE(c == before);
    REQUIRE(verify(next).ok());
    REQUIRE(chain_to_text(next).starts_with(text_before));
    c = next;
  }
}

TEST_CASE("verify reports the height of an in-memory mutation") {
  const auto c = random_chain(7, 10);
  for (std::size_t k = 0; k < 10; ++k) {
    auto entries = c.entries();
    if (entries[k].data.payload.empty()) entries[k].data.payload.push_back(1);
    else entries[k].data.payload[0] ^= 0x01;
    CHECK(verify(Chain::from_entries(entries)).first_bad_height == k);
    entries = c.entries();
    entries[k].height += 1;
    CHECK(verify(Chain::from_entries(entries)).first_bad_height == k);
    entries = c.entries();
    entries[k].prev_hash[31] ^= 0x80;
    CHECK(verify(Chain::from_entries(entries)).first_bad_height == k);
  }
}

TEST_CASE("splicing two valid chains fails at the splice point") {
  const auto a = random_chain(8, 10), b = random_chain(9, 10);
  for (std::size_t cut = 1; cut < 10; ++cut) {
    std::vector<ChainEntry> mixed(a.entries().begin(), a.entries().begin() + cut);
    mixed.insert(mixed.end(), b.entries().begin() + cut, b.entries().end());
    CHECK(verify(Chain::from_entries(mixed)).first_bad_height == cut);
  }
}

TEST_CASE("chain text round-trips byte for byte") {
  const auto c = random_chain(10, 10);
  const auto text = chain_to_text(c);
  const auto file = chain_from_text(text);
  CHECK_FALSE(file.parse_error);
  CHECK(file.chain == c);
  CHECK(chain_to_text(file.chain) == text);
  CHECK(verify_chain_text(text).ok());
  CHECK(text.find("\"height\":0,\"prev_hash\":\"" + std::string(64, '0') + "\"") == 1);
}

TEST_CASE("non-canonical chain lines are rejected") {
  const auto c = random_chain(11, 2);
  const auto line = entry_to_line(c[0]);
  CHECK_NOTHROW(entry_from_line(line));
  CHECK_THROWS_AS(entry_from_line(" " + line), ParseError);
  auto upper = line;
  const auto pos = upper.find("\"auth_tag\":\"") + 12;
  for (std::size_t k = pos; k < pos + 64; ++k)
    if (upper[k] >= 'a' && upper[k] <= 'f') {
      upper[k] = static_cast<char>(upper[k] - 32);
      break;
    }
  CHECK_THROWS_AS(entry_from_line(upper), Error);
  auto spaced = line;
  spaced.replace(spaced.find(','), 1, ", ");
  CHECK_THROWS_AS(entry_from_line(spaced), ParseError);
  CHECK(verify_chain_text(chain_to_text(c).substr(0, chain_to_text(c).size() - 1)).first_bad_height == 1);
}

TEST_CASE("every single-byte change of a persisted chain is caught at its line") {
  const auto c = random_chain(12, 10);
  const auto text = chain_to_text(c);
  std::vector<std::size_t> line_of(text.size());
  std::size_t line = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    line_of[i] = line;
    if (text[i] == '\n') ++line;
  }
  std::size_t failures = 0;
  for (std::size_t i = 0; i < text.size(); ++i)
    for (int bit = 0; bit < 8; ++bit) {
      auto t = text;
      t[i] = static_cast<char>(t[i] ^ (1 << bit));
      const auto res = verify_chain_text(t);
      // A corrupted newline merges or splits lines; the damaged line is the
      // one that ended there.
      if (res.first_bad_height != line_of[i]) ++failures;
    }
  CHECK(failures == 0);
}
