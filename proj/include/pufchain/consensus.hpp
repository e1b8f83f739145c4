#pragma once

// Proof of PUF-enabled authentication.
//
//  initiate          client side: D_n plus H_n = H(D_n, R_x), broadcast without R_x
//  authenticate      trusted side: linear scan of the device's enrolled R_x
//  accept_validated  client side: accept only blocks a trusted node vouched for
//
// A trusted node vouches for a block by attaching a validation tag keyed with
// one of its own enrolled responses. Clients hold read access to the trusted
// nodes' CRP records and check that tag by the same linear scan.

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"
#include "pufchain/ledger.hpp"
#include "pufchain/puf.hpp"
#include "pufchain/registry.hpp"
#include "pufchain/sha256.hpp"

namespace pufchain {

enum class Role { trusted, client };

inline std::string_view to_string(Role r) { return r == Role::trusted ? "trusted" : "client"; }

enum class Reason { no_match, unknown_device, replay, not_from_trusted };

inline std::string_view to_string(Reason r) {
  switch (r) {
    case Reason::no_match: return "no-match";
    case Reason::unknown_device: return "unknown-device";
    case Reason::replay: return "replay";
    case Reason::not_from_trusted: return "not-from-trusted";
  }
  return "?";
}

inline constexpr std::uint32_t kDefaultDemotionThreshold = 3;

struct NodeState {
  NodeId node_id;
  Role role = Role::client;
  PufDevice device;
  std::vector<Challenge> challenges;  // this device's enrolled challenges
  Chain local_chain;
  std::uint64_t next_seq = 0;
  std::int64_t trust_value = 0;
  std::uint32_t false_validations = 0;
  std::uint64_t validations_issued = 0;
  std::map<DeviceId, std::uint64_t> last_seq;  // highest accepted seq per device

  NodeState(NodeId id, Role r, PufDevice dev, std::vector<Challenge> chals = {})
      : node_id(id), role(r), device(std::move(dev)), challenges(std::move(chals)) {}
};

struct Validation {
  std::uint64_t t_validated = 0;
  Digest tag{};
  friend bool operator==(const Validation&, const Validation&) = default;
};

struct WireBlock {
  BlockData data;
  AuthTag auth_tag;
  NodeId origin;
  std::optional<NodeId> validated_by;
  std::optional<Validation> validation;

  friend bool operator==(const WireBlock&, const WireBlock&) = default;
};

// Digest identifying a block on the wire before it has a chain entry.
inline Digest wire_digest(const WireBlock& b) {
  Sha256 h;
  h.update(canonical_bytes(b.data));
  h.update(b.auth_tag.h);
  return h.finalize();
}

// SHA-256(canonical(D_n) || H_n || validator id || t_validated || R_trusted)
inline Sha256 validation_tag_prefix(const BlockData& data, const AuthTag& tag, NodeId validator,
                                    std::uint64_t t_validated) {
  Bytes buf = canonical_bytes(data);
  put_bytes(buf, tag.h);
  put_bytes(buf, validator.bytes());
  put_be(buf, t_validated, 8);
  Sha256 h;
  h.update(buf);
  return h;
}

inline Digest finish_validation_tag(Sha256 prefix, const Response& trusted_response) {
  if (trusted_response.size() != kAuthResponseBits) throw ArgumentError("validation tag requires a 128-bit response");
  prefix.update(trusted_response.to_bytes());
  return prefix.finalize();
}

inline Digest validation_tag(const BlockData& data, const AuthTag& tag, NodeId validator, std::uint64_t t_validated,
                             const Response& trusted_response) {
  return finish_validation_tag(validation_tag_prefix(data, tag, validator, t_validated), trusted_response);
}

struct Accepted {
  ChainEntry entry;
  std::optional<WireBlock> rebroadcast;  // set by authenticate only
};

struct Rejected {
  Reason reason;
};

struct Outcome {
  std::variant<Accepted, Rejected> result;
  std::size_t tags_computed = 0;  // hash evaluations spent scanning responses

  bool accepted() const { return std::holds_alternative<Accepted>(result); }
  const Accepted& accept() const { return std::get<Accepted>(result); }
  Reason reason() const { return std::get<Rejected>(result).reason; }
};

inline WireBlock initiate(NodeState& node, Bytes payload, std::size_t challenge_index, std::uint64_t now) {
  if (challenge_index >= node.challenges.size()) throw ArgumentError("challenge index out of range for enrolled set");
  BlockData data{node.device.id(), node.next_seq, now, std::move(payload)};
  if (data.payload.size() > kMaxPayload) throw SizeError("payload exceeds 64 KiB");
  const auto response = evaluate_reference(node.device, node.challenges[challenge_index]);
  WireBlock block{data, make_auth_tag(data, response), node.node_id, std::nullopt, std::nullopt};
  ++node.next_seq;
  return block;
}

namespace detail {
inline bool is_fresh(const NodeState& node, const BlockData& data) {
  const auto it = node.last_seq.find(data.device_id);
  return it == node.last_seq.end() || data.seq > it->second;
}
}  // namespace detail

inline Outcome authenticate(NodeState& trusted, const WireBlock& block, const Registry& registry, std::uint64_t now) {
  if (trusted.role != Role::trusted) throw ArgumentError("authenticate requires a trusted node");
  Outcome out{Rejected{Reason::unknown_device}};
  const CrpRecord* record = nullptr;
  try {
    record = &registry.record_for(trusted.node_id, block.data.device_id);
  } catch (const Error&) {
    return out;
  }
  const auto prefix = auth_tag_prefix(block.data);
  for (const auto& [c, r] : record->pairs) {
    ++out.tags_computed;
    if (finish_auth_tag(prefix, r) != block.auth_tag) continue;
    if (!detail::is_fresh(trusted, block.data)) {
      out.result = Rejected{Reason::replay};
      return out;
    }
    trusted.last_seq[block.data.device_id] = block.data.seq;
    trusted.local_chain = std::move(trusted.local_chain).append(block.data, block.auth_tag, trusted.node_id, now);
    ++trusted.trust_value;

    WireBlock rb = block;
    rb.validated_by = trusted.node_id;
    const auto& own = trusted.challenges;
    if (own.empty()) throw ArgumentError("trusted node has no enrolled challenges");
    const auto own_response = evaluate_reference(trusted.device, own[trusted.validations_issued++ % own.size()]);
    rb.validation = Validation{now, validation_tag(block.data, block.auth_tag, trusted.node_id, now, own_response)};
    out.result = Accepted{trusted.local_chain.back(), std::move(rb)};
    return out;
  }
  out.result = Rejected{Reason::no_match};
  return out;
}

inline Outcome accept_validated(NodeState& client, const WireBlock& block, const Registry& registry, std::uint64_t now) {
  (void)now;  // the entry carries the trusted node's t_validated
  Outcome out{Rejected{Reason::not_from_trusted}};
  if (!block.validated_by || !registry.is_trusted(*block.validated_by)) return out;
  if (!block.validation) {
    out.result = Rejected{Reason::no_match};
    return out;
  }
  const CrpRecord* record = nullptr;
  try {
    record = &registry.record_for(client.node_id, *block.validated_by);
  } catch (const Error&) {
    out.result = Rejected{Reason::no_match};
    return out;
  }
  const auto& v = *block.validation;
  const auto prefix = validation_tag_prefix(block.data, block.auth_tag, *block.validated_by, v.t_validated);
  for (const auto& [c, r] : record->pairs) {
    ++out.tags_computed;
    if (finish_validation_tag(prefix, r) != v.tag) continue;
    if (!detail::is_fresh(client, block.data)) {
      out.result = Rejected{Reason::replay};
      return out;
    }
    client.last_seq[block.data.device_id] = block.data.seq;
    client.local_chain =
        std::move(client.local_chain).append(block.data, block.auth_tag, *block.validated_by, v.t_validated);
    out.result = Accepted{client.local_chain.back(), std::nullopt};
    return out;
  }
  out.result = Rejected{Reason::no_match};
  return out;
}

// Trust penalty for a validation later shown to be false. A trusted node
// that reaches the threshold is demoted to an ordinary client.
inline void penalize_false_validation(NodeState& node, std::uint32_t threshold = kDefaultDemotionThreshold) {
  --node.trust_value;
  ++node.false_validations;
  if (node.role == Role::trusted && node.false_validations >= threshold) node.role = Role::client;
}

// ---- toy proof-of-work baseline ---------------------------------------------

struct PowResult {
  std::uint64_t nonce = 0;
  Digest digest{};
  std::uint64_t attempts = 0;
};

inline unsigned leading_zero_bits(const Digest& d) {
  unsigned n = 0;
  for (auto b : d) {
    if (b == 0) {
      n += 8;
      continue;
    }
    for (int bit = 7; bit >= 0 && !((b >> bit) & 1); --bit) ++n;
    break;
  }
  return n;
}

// Smallest nonce with SHA-256(canonical(data) || nonce_be64) having at least
// difficulty_bits leading zero bits.
inline PowResult pow_mine_baseline(const BlockData& data, unsigned difficulty_bits) {
  if (difficulty_bits > 32) throw ArgumentError("difficulty above 32 bits is out of desk scale");
  Sha256 prefix;
  prefix.update(canonical_bytes(data));
  PowResult res;
  for (std::uint64_t nonce = 0;; ++nonce) {
    std::array<std::uint8_t, 8> n{};
    for (int i = 0; i < 8; ++i) n[i] = static_cast<std::uint8_t>(nonce >> (56 - 8 * i));
    Sha256 h = prefix;
    h.update(n);
    const auto d = h.finalize();
    if (leading_zero_bits(d) >= difficulty_bits) {
      res.nonce = nonce;
      res.digest = d;
      res.attempts = nonce + 1;
      return res;
    }
  }
}

// ---- wire format ---------------------------------------------------------

inline nlohmann::ordered_json wire_to_json(const WireBlock& b) {
  nlohmann::ordered_json j;
  j["device_id"] = b.data.device_id.to_hex();
  j["seq"] = b.data.seq;
  j["t_init"] = b.data.t_init;
  j["payload"] = hex::encode(b.data.payload);
  j["auth_tag"] = to_hex(b.auth_tag.h);
  j["origin"] = b.origin.to_hex();
  j["validated_by"] = b.validated_by ? nlohmann::ordered_json(b.validated_by->to_hex()) : nullptr;
  if (b.validation) {
    j["t_validated"] = b.validation->t_validated;
    j["validation_tag"] = to_hex(b.validation->tag);
  } else {
    j["t_validated"] = nullptr;
    j["validation_tag"] = nullptr;
  }
  return j;
}

inline WireBlock wire_from_json(const nlohmann::json& j) {
  try {
    WireBlock b;
    b.data.device_id = DeviceId::from_hex(j.at("device_id").get<std::string>());
    b.data.seq = j.at("seq").get<std::uint64_t>();
    b.data.t_init = j.at("t_init").get<std::uint64_t>();
    b.data.payload = hex::decode(j.at("payload").get<std::string>());
    if (b.data.payload.size() > kMaxPayload) throw SizeError("payload exceeds 64 KiB");
    b.auth_tag.h = hex::decode_digest(j.at("auth_tag").get<std::string>());
    b.origin = DeviceId::from_hex(j.at("origin").get<std::string>());
    if (!j.at("validated_by").is_null()) b.validated_by = DeviceId::from_hex(j.at("validated_by").get<std::string>());
    if (!j.at("validation_tag").is_null())
      b.validation = Validation{j.at("t_validated").get<std::uint64_t>(),
                                hex::decode_digest(j.at("validation_tag").get<std::string>())};
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("wire block: ") + e.what());
  }
}

}  // namespace pufchain
