#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pufchain {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;
using Digest = std::array<std::uint8_t, 32>;

// Error hierarchy. Protocol outcomes (accept / reject / drop) are values, not
// exceptions; these are reserved for contract violations and I/O.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : Error { using Error::Error; };
struct ChallengeError : Error { using Error::Error; };
struct DimensionError : Error { using Error::Error; };
struct ArgumentError : Error { using Error::Error; };
struct SizeError : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct ConflictError : Error { using Error::Error; };
struct EnrollmentFailed : Error { using Error::Error; };
struct NotFound : Error { using Error::Error; };
struct AccessDenied : Error { using Error::Error; };
struct ValidationError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

namespace hex {

inline std::string encode(ByteView bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0x0f]);
  }
  return out;
}

// Lowercase only. Uppercase digits are rejected so that every byte string has
// exactly one textual form in the persisted files.
inline int nibble(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  return -1;
}

inline Bytes decode(std::string_view text) {
  if (text.size() % 2 != 0) throw ParseError("hex string has odd length");
  Bytes out(text.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const int hi = nibble(text[2 * i]);
    const int lo = nibble(text[2 * i + 1]);
    if (hi < 0 || lo < 0) throw ParseError("invalid lowercase hex digit");
    out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return out;
}

inline Digest decode_digest(std::string_view text) {
  if (text.size() != 64) throw ParseError("digest must be 64 hex characters");
  const auto bytes = decode(text);
  Digest d{};
  std::copy(bytes.begin(), bytes.end(), d.begin());
  return d;
}

}  // namespace hex

// 48-bit MAC-like identifier. Nodes are identified by the MAC address of
// their device, so the same type names both.
class DeviceId {
 public:
  static constexpr std::uint64_t kMax = 0xFFFF'FFFF'FFFFULL;

  constexpr DeviceId() = default;
  constexpr explicit DeviceId(std::uint64_t value) : value_(value) {
    if (value > kMax) throw ArgumentError("device id exceeds 48 bits");
  }

  constexpr std::uint64_t value() const { return value_; }

  std::array<std::uint8_t, 6> bytes() const {
    std::array<std::uint8_t, 6> out{};
    for (int i = 0; i < 6; ++i) out[i] = static_cast<std::uint8_t>(value_ >> (8 * (5 - i)));
    return out;
  }

  std::string to_hex() const {
    const auto b = bytes();
    return hex::encode(b);
  }

  static DeviceId from_hex(std::string_view text) {
    if (text.size() != 12) throw ParseError("device id must be 12 hex characters");
    std::uint64_t v = 0;
    for (auto b : hex::decode(text)) v = (v << 8) | b;
    return DeviceId(v);
  }

  friend constexpr auto operator<=>(const DeviceId&, const DeviceId&) = default;

 private:
  std::uint64_t value_ = 0;
};

using NodeId = DeviceId;

// Big-endian appenders shared by every canonical encoding.
inline void put_be(Bytes& out, std::uint64_t v, int width) {
  for (int i = width - 1; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint64_t get_be(ByteView in, std::size_t offset, int width) {
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) v = (v << 8) | in[offset + i];
  return v;
}

inline void put_bytes(Bytes& out, ByteView bytes) { out.insert(out.end(), bytes.begin(), bytes.end()); }

}  // namespace pufchain

template <>
struct std::hash<pufchain::DeviceId> {
  std::size_t operator()(const pufchain::DeviceId& id) const noexcept {
    return std::hash<std::uint64_t>{}(id.value());
  }
};
