#pragma once

// Block data model, canonical serialization, PUF-keyed hashing and the
// append-only hash-linked chain.
//
// Canonical BlockData layout (all integers big-endian):
//   device_id   6 bytes
//   seq         8 bytes
//   t_init      8 bytes (ms)
//   payload_len 4 bytes
//   payload     payload_len bytes
//
// Entry hash input:
//   height 8 | prev_hash 32 | canonical(data) | auth_tag 32 | trusted_node_id 6 | t_validated 8

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "pufchain/common.hpp"
#include "pufchain/puf.hpp"
#include "pufchain/sha256.hpp"

namespace pufchain {

inline constexpr std::size_t kMaxPayload = 64 * 1024;
inline constexpr std::size_t kAuthResponseBits = 128;
inline constexpr std::size_t kCanonicalHeader = 26;

struct BlockData {
  DeviceId device_id;
  std::uint64_t seq = 0;
  std::uint64_t t_init = 0;
  Bytes payload;

  friend bool operator==(const BlockData&, const BlockData&) = default;
};

inline Bytes canonical_bytes(const BlockData& data) {
  if (data.payload.size() > kMaxPayload) throw SizeError("payload exceeds 64 KiB");
  Bytes out(kCanonicalHeader + data.payload.size());
  auto be = [&](std::size_t at, std::uint64_t v, int width) {
    for (int i = 0; i < width; ++i) out[at + i] = static_cast<std::uint8_t>(v >> (8 * (width - 1 - i)));
  };
  be(0, data.device_id.value(), 6);
  be(6, data.seq, 8);
  be(14, data.t_init, 8);
  be(22, data.payload.size(), 4);
  std::copy(data.payload.begin(), data.payload.end(), out.begin() + kCanonicalHeader);
  return out;
}

inline BlockData parse_canonical(ByteView bytes) {
  if (bytes.size() < kCanonicalHeader) throw ParseError("canonical block data truncated");
  BlockData d;
  d.device_id = DeviceId(get_be(bytes, 0, 6));
  d.seq = get_be(bytes, 6, 8);
  d.t_init = get_be(bytes, 14, 8);
  const auto len = get_be(bytes, 22, 4);
  if (len > kMaxPayload) throw SizeError("payload exceeds 64 KiB");
  if (bytes.size() != kCanonicalHeader + len) throw ParseError("payload length field does not match encoding");
  d.payload.assign(bytes.begin() + kCanonicalHeader, bytes.end());
  return d;
}

struct AuthTag {
  Digest h{};
  friend bool operator==(const AuthTag&, const AuthTag&) = default;
};

// H_n = SHA-256(canonical(D_n) || R_x packed MSB-first)
// A scan over many candidate responses hashes canonical(D_n) once and
// finishes a copy of that state per response.
inline Sha256 auth_tag_prefix(const BlockData& data) {
  Sha256 h;
  h.update(canonical_bytes(data));
  return h;
}

inline AuthTag finish_auth_tag(Sha256 prefix, const Response& response) {
  if (response.size() != kAuthResponseBits) throw ArgumentError("auth tag requires a 128-bit response");
  prefix.update(response.to_bytes());
  return AuthTag{prefix.finalize()};
}

inline AuthTag make_auth_tag(const BlockData& data, const Response& response) {
  return finish_auth_tag(auth_tag_prefix(data), response);
}

struct ChainEntry {
  std::uint64_t height = 0;
  Digest prev_hash{};
  BlockData data;
  AuthTag auth_tag;
  NodeId trusted_node_id;
  std::uint64_t t_validated = 0;
  Digest entry_hash{};

  friend bool operator==(const ChainEntry&, const ChainEntry&) = default;
};

inline Digest compute_entry_hash(const ChainEntry& e) {
  Bytes buf;
  buf.reserve(8 + 32 + kCanonicalHeader + e.data.payload.size() + 32 + 6 + 8);
  put_be(buf, e.height, 8);
  put_bytes(buf, e.prev_hash);
  put_bytes(buf, canonical_bytes(e.data));
  put_bytes(buf, e.auth_tag.h);
  put_bytes(buf, e.trusted_node_id.bytes());
  put_be(buf, e.t_validated, 8);
  return Sha256::hash(buf);
}

struct VerifyResult {
  std::optional<std::uint64_t> first_bad_height;

  bool ok() const { return !first_bad_height.has_value(); }
  explicit operator bool() const { return ok(); }
};

// Immutable value. append() on an lvalue copies; on an rvalue it reuses the
// storage, so `chain = std::move(chain).append(...)` is amortized O(1).
class Chain {
 public:
  Chain() = default;

  // No validation: a chain read from disk may be corrupt, which verify()
  // reports instead of construction failing.
  static Chain from_entries(std::vector<ChainEntry> entries) {
    Chain c;
    c.entries_ = std::move(entries);
    return c;
  }

  const std::vector<ChainEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const ChainEntry& back() const { return entries_.back(); }
  const ChainEntry& operator[](std::size_t k) const { return entries_[k]; }

  Chain append(const BlockData& data, const AuthTag& tag, NodeId trusted, std::uint64_t t_validated) const& {
    Chain next = *this;
    next.push(data, tag, trusted, t_validated);
    return next;
  }

  Chain append(const BlockData& data, const AuthTag& tag, NodeId trusted, std::uint64_t t_validated) && {
    push(data, tag, trusted, t_validated);
    return std::move(*this);
  }

  friend bool operator==(const Chain&, const Chain&) = default;

 private:
  void push(const BlockData& data, const AuthTag& tag, NodeId trusted, std::uint64_t t_validated) {
    ChainEntry e;
    e.height = entries_.size();
    if (!entries_.empty()) e.prev_hash = entries_.back().entry_hash;
    e.data = data;
    e.auth_tag = tag;
    e.trusted_node_id = trusted;
    e.t_validated = t_validated;
    e.entry_hash = compute_entry_hash(e);
    entries_.push_back(std::move(e));
  }

  std::vector<ChainEntry> entries_;
};

inline VerifyResult verify(const Chain& chain) {
  Digest expected_prev{};
  for (std::size_t k = 0; k < chain.size(); ++k) {
    const auto& e = chain[k];
    bool good = e.height == k && e.prev_hash == expected_prev && e.data.payload.size() <= kMaxPayload;
    if (good) good = compute_entry_hash(e) == e.entry_hash;
    if (!good) return {k};
    expected_prev = e.entry_hash;
  }
  return {};
}

// ---- persistence: one JSON object per line, fields in canonical order ------

inline nlohmann::ordered_json entry_to_json(const ChainEntry& e) {
  nlohmann::ordered_json j;
  j["height"] = e.height;
  j["prev_hash"] = to_hex(e.prev_hash);
  j["device_id"] = e.data.device_id.to_hex();
  j["seq"] = e.data.seq;
  j["t_init"] = e.data.t_init;
  j["payload"] = hex::encode(e.data.payload);
  j["auth_tag"] = to_hex(e.auth_tag.h);
  j["trusted_node_id"] = e.trusted_node_id.to_hex();
  j["t_validated"] = e.t_validated;
  j["entry_hash"] = to_hex(e.entry_hash);
  return j;
}

inline std::string entry_to_line(const ChainEntry& e) { return entry_to_json(e).dump(); }

// Strict: the line must be byte-identical to the canonical rendering of the
// entry it decodes to. Whitespace, key order, number spelling and hex case
// variations are all rejected.
inline ChainEntry entry_from_line(std::string_view line) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(line);
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("chain entry: ") + ex.what());
  }
  auto uint_field = [&](const char* key) -> std::uint64_t {
    const auto& v = j.at(key);
    if (!v.is_number_unsigned()) throw ParseError(std::string("chain entry: ") + key + " must be an unsigned integer");
    return v.get<std::uint64_t>();
  };
  auto str_field = [&](const char* key) -> std::string {
    const auto& v = j.at(key);
    if (!v.is_string()) throw ParseError(std::string("chain entry: ") + key + " must be a string");
    return v.get<std::string>();
  };
  ChainEntry e;
  try {
    if (!j.is_object() || j.size() != 10) throw ParseError("chain entry: wrong field set");
    e.height = uint_field("height");
    e.prev_hash = hex::decode_digest(str_field("prev_hash"));
    e.data.device_id = DeviceId::from_hex(str_field("device_id"));
    e.data.seq = uint_field("seq");
    e.data.t_init = uint_field("t_init");
    e.data.payload = hex::decode(str_field("payload"));
    if (e.data.payload.size() > kMaxPayload) throw SizeError("payload exceeds 64 KiB");
    e.auth_tag.h = hex::decode_digest(str_field("auth_tag"));
    e.trusted_node_id = DeviceId::from_hex(str_field("trusted_node_id"));
    e.t_validated = uint_field("t_validated");
    e.entry_hash = hex::decode_digest(str_field("entry_hash"));
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("chain entry: ") + ex.what());
  }
  if (entry_to_line(e) != line) throw ParseError("chain entry is not in canonical form");
  return e;
}

inline std::string chain_to_text(const Chain& chain) {
  std::string out;
  for (const auto& e : chain.entries()) {
    out += entry_to_line(e);
    out += '\n';
  }
  return out;
}

struct ChainFile {
  Chain chain;                               // entries decoded before any parse failure
  std::optional<std::uint64_t> parse_error;  // line (= height) that failed to decode
  std::string message;
};

inline ChainFile chain_from_text(std::string_view text) {
  std::vector<ChainEntry> entries;
  ChainFile out;
  std::size_t pos = 0;
  std::uint64_t line_no = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    const auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    try {
      if (nl == std::string_view::npos) throw ParseError("chain file must end with a newline");
      entries.push_back(entry_from_line(line));
    } catch (const Error& ex) {
      out.parse_error = line_no;
      out.message = ex.what();
      break;
    }
    pos = nl + 1;
    ++line_no;
  }
  out.chain = Chain::from_entries(std::move(entries));
  return out;
}

// Lowest failing height across decoding and hash verification.
inline VerifyResult verify_chain_text(std::string_view text) {
  const auto file = chain_from_text(text);
  auto res = verify(file.chain);
  if (res.ok() && file.parse_error) return {file.parse_error};
  return res;
}

inline void write_chain(const std::string& path, const Chain& chain) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open chain file for writing: " + path);
  out << chain_to_text(chain);
  if (!out) throw IoError("failed writing chain file: " + path);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline ChainFile read_chain(const std::string& path) { return chain_from_text(read_file(path)); }

}  // namespace pufchain
