#pragma once

// Software model of a Hybrid Oscillator Arbiter PUF.
//
// The oscillators are split into two equal sets. A challenge selects, for each
// response bit, one oscillator from each set; the arbiter emits 1 when the
// SET1 oscillator is faster. Manufacturing variation is a one-shot Gaussian
// draw per oscillator, evaluation noise is a fresh Gaussian jitter per
// oscillator per evaluation.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "json.hpp"
#include "pufchain/common.hpp"
#include "pufchain/random.hpp"

namespace pufchain {

struct PufConfig {
  std::size_t n_oscillators = 512;
  std::size_t response_bits = 128;
  double freq_mean = 250.0;   // MHz
  // Process variation. Calibrated so that about a quarter of random
  // challenges survive screening at the default noise and policy.
  double freq_sigma = 2.0;    // MHz
  double noise_sigma = 0.1;   // MHz, per-evaluation jitter
  std::uint64_t rng_seed = 0x5EED'0F'0F'C41BULL;

  std::size_t set_size() const { return n_oscillators / 2; }

  void validate() const {
    if (n_oscillators < 2 || n_oscillators % 2 != 0)
      throw ConfigError("n_oscillators must be even and at least 2");
    if (response_bits < 1) throw ConfigError("response_bits must be at least 1");
    if (!(freq_mean > 0.0) || !std::isfinite(freq_mean)) throw ConfigError("freq_mean must be positive");
    if (!(freq_sigma > 0.0) || !std::isfinite(freq_sigma)) throw ConfigError("freq_sigma must be positive");
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw ConfigError("noise_sigma must be non-negative");
    if (set_size() * set_size() < response_bits)
      throw ConfigError("too few oscillator pairs for a challenge of response_bits distinct selectors");
  }
};

// (SET1 index, SET2 index)
using Selector = std::pair<std::uint32_t, std::uint32_t>;

struct Challenge {
  std::vector<Selector> selectors;

  std::size_t size() const { return selectors.size(); }
  friend bool operator==(const Challenge&, const Challenge&) = default;
};

struct Response {
  std::vector<bool> bits;

  Response() = default;
  explicit Response(std::vector<bool> b) : bits(std::move(b)) {}

  std::size_t size() const { return bits.size(); }

  std::size_t ones() const {
    std::size_t n = 0;
    for (bool b : bits) n += b ? 1 : 0;
    return n;
  }

  // MSB-first packing; a trailing partial byte is zero-padded on the right.
  Bytes to_bytes() const {
    Bytes out((bits.size() + 7) / 8, 0);
    for (std::size_t k = 0; k < bits.size(); ++k)
      if (bits[k]) out[k / 8] |= static_cast<std::uint8_t>(0x80u >> (k % 8));
    return out;
  }

  std::string to_hex() const { return hex::encode(to_bytes()); }

  static Response from_bytes(ByteView bytes, std::size_t n_bits) {
    if (bytes.size() != (n_bits + 7) / 8) throw ParseError("response byte length does not match bit count");
    std::vector<bool> b(n_bits);
    for (std::size_t k = 0; k < n_bits; ++k) b[k] = (bytes[k / 8] >> (7 - k % 8)) & 1u;
    Response r(std::move(b));
    if (r.to_bytes() != Bytes(bytes.begin(), bytes.end())) throw ParseError("response padding bits must be zero");
    return r;
  }

  static Response from_hex(std::string_view text, std::size_t n_bits) {
    return from_bytes(hex::decode(text), n_bits);
  }

  Response complement() const {
    Response r = *this;
    r.bits.flip();
    return r;
  }

  friend bool operator==(const Response&, const Response&) = default;
};

inline std::size_t hamming_distance(const Response& a, const Response& b) {
  if (a.size() != b.size()) throw DimensionError("responses differ in length");
  std::size_t d = 0;
  for (std::size_t k = 0; k < a.size(); ++k) d += (a.bits[k] != b.bits[k]) ? 1 : 0;
  return d;
}

class PufDevice {
 public:
  PufDevice(DeviceId id, std::vector<double> set1, std::vector<double> set2, double noise_sigma)
      : id_(id), set1_(std::move(set1)), set2_(std::move(set2)), noise_sigma_(noise_sigma) {
    if (set1_.empty() || set1_.size() != set2_.size()) throw ConfigError("oscillator sets must be non-empty and equal in size");
    for (const auto* set : {&set1_, &set2_})
      for (double f : *set)
        if (!(f > 0.0) || !std::isfinite(f)) throw ConfigError("oscillator frequencies must be positive");
    if (!(noise_sigma_ >= 0.0) || !std::isfinite(noise_sigma_)) throw ConfigError("noise_sigma must be non-negative");
  }

  DeviceId id() const { return id_; }
  const std::vector<double>& set1() const { return set1_; }
  const std::vector<double>& set2() const { return set2_; }
  double noise_sigma() const { return noise_sigma_; }
  std::size_t set_size() const { return set1_.size(); }

  // Same silicon, different operating conditions.
  PufDevice with_noise(double noise_sigma) const { return PufDevice(id_, set1_, set2_, noise_sigma); }

  friend bool operator==(const PufDevice&, const PufDevice&) = default;

 private:
  DeviceId id_;
  std::vector<double> set1_;
  std::vector<double> set2_;
  double noise_sigma_;
};

// Frequencies are quantized to 1 Hz (six fractional MHz digits) so that the
// device export format round-trips exactly.
inline double quantize_mhz(double f) { return std::round(f * 1e6) / 1e6; }

inline PufDevice manufacture(const PufConfig& config, DeviceId id, std::uint64_t device_seed) {
  config.validate();
  auto engine = rng::engine(rng::derive(config.rng_seed, device_seed));
  rng::NormalStream normal(engine);
  auto draw_set = [&] {
    std::vector<double> set(config.set_size());
    for (auto& f : set) {
      do {
        f = quantize_mhz(config.freq_mean + config.freq_sigma * normal.next());
      } while (!(f > 0.0));
    }
    return set;
  };
  auto set1 = draw_set();
  auto set2 = draw_set();
  return PufDevice(id, std::move(set1), std::move(set2), config.noise_sigma);
}

inline void validate_challenge(const Challenge& challenge, std::size_t set_size) {
  if (challenge.selectors.empty()) throw ChallengeError("challenge has no selectors");
  for (const auto& [i, j] : challenge.selectors)
    if (i >= set_size || j >= set_size) throw ChallengeError("selector index out of range for device");
  const std::uint64_t space = std::uint64_t{set_size} * set_size;
  if (space <= (std::uint64_t{1} << 20)) {
    std::vector<std::uint64_t> seen((space + 63) / 64, 0);
    for (const auto& [i, j] : challenge.selectors) {
      const std::uint64_t key = std::uint64_t{i} * set_size + j;
      auto& word = seen[key / 64];
      const std::uint64_t bit = std::uint64_t{1} << (key % 64);
      if (word & bit) throw ChallengeError("selector pair repeats within challenge");
      word |= bit;
    }
    return;
  }
  std::vector<std::uint64_t> keys;
  keys.reserve(challenge.size());
  for (const auto& [i, j] : challenge.selectors) keys.push_back((std::uint64_t{i} << 32) | j);
  std::sort(keys.begin(), keys.end());
  if (std::adjacent_find(keys.begin(), keys.end()) != keys.end())
    throw ChallengeError("selector pair repeats within challenge");
}

// Uniformly random challenge of n_bits distinct selector pairs.
inline Challenge random_challenge(std::size_t set_size, std::size_t n_bits, std::uint64_t seed) {
  if (set_size * set_size < n_bits) throw ConfigError("challenge space smaller than response width");
  auto engine = rng::engine(seed);
  Challenge c;
  c.selectors.reserve(n_bits);
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(n_bits * 2);
  while (c.selectors.size() < n_bits) {
    const auto i = static_cast<std::uint32_t>(rng::below(engine, set_size));
    const auto j = static_cast<std::uint32_t>(rng::below(engine, set_size));
    if (seen.insert((std::uint64_t{i} << 32) | j).second) c.selectors.emplace_back(i, j);
  }
  return c;
}

// Noise for selector k of an evaluation comes from its own counter-derived
// stream keyed on (eval_seed, k), so bits are independent of evaluation order.
namespace detail {
inline Response evaluate_at(const PufDevice& device, const Challenge& challenge, double sigma, std::uint64_t eval_seed) {
  validate_challenge(challenge, device.set_size());
  std::vector<bool> bits(challenge.size());
  for (std::size_t k = 0; k < challenge.size(); ++k) {
    const auto [i, j] = challenge.selectors[k];
    double f1 = device.set1()[i];
    double f2 = device.set2()[j];
    if (sigma > 0.0) {
      const std::uint64_t key = rng::derive(eval_seed, k);
      const auto [e1, e2] = rng::normal_pair(rng::mix64(key), rng::mix64(key ^ 0xA5A5'A5A5'A5A5'A5A5ULL));
      f1 += sigma * e1;
      f2 += sigma * e2;
    }
    bits[k] = f1 > f2;  // ties emit 0
  }
  return Response(std::move(bits));
}
}  // namespace detail

inline Response evaluate(const PufDevice& device, const Challenge& challenge, std::uint64_t eval_seed) {
  return detail::evaluate_at(device, challenge, device.noise_sigma(), eval_seed);
}

// Noise-free evaluation: the value enrolled in the registry.
inline Response evaluate_reference(const PufDevice& device, const Challenge& challenge) {
  return detail::evaluate_at(device, challenge, 0.0, 0);
}

// ---- device export / import (line-delimited JSON) ------------------------

namespace detail {
inline void append_fixed6(std::string& out, double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, 6);
  out.append(buf, res.ptr);
}
}  // namespace detail

inline std::string device_to_json_line(const PufDevice& device) {
  std::string out = "{\"device_id\":\"" + device.id().to_hex() + "\"";
  auto emit_set = [&](const char* key, const std::vector<double>& set) {
    out += ",\"";
    out += key;
    out += "\":[";
    for (std::size_t k = 0; k < set.size(); ++k) {
      if (k) out += ',';
      detail::append_fixed6(out, set[k]);
    }
    out += ']';
  };
  emit_set("set1_freqs", device.set1());
  emit_set("set2_freqs", device.set2());
  out += ",\"noise_sigma\":";
  detail::append_fixed6(out, device.noise_sigma());
  out += '}';
  return out;
}

inline PufDevice device_from_json_line(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("device record: ") + e.what());
  }
  try {
    return PufDevice(DeviceId::from_hex(j.at("device_id").get<std::string>()),
                     j.at("set1_freqs").get<std::vector<double>>(), j.at("set2_freqs").get<std::vector<double>>(),
                     j.at("noise_sigma").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("device record: ") + e.what());
  }
}

inline void write_devices(std::ostream& out, const std::vector<PufDevice>& devices) {
  for (const auto& d : devices) out << device_to_json_line(d) << '\n';
}

inline std::vector<PufDevice> read_devices(std::istream& in) {
  std::vector<PufDevice> devices;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    devices.push_back(device_from_json_line(line));
  }
  return devices;
}

}  // namespace pufchain
