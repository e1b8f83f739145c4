#pragma once

// The secure database of enrolled challenge-response pairs.
//
// Trusted nodes may read any record. Other requesters may read only the
// records of trusted nodes, which is what clients need to check that a block
// really was rebroadcast by a trusted node.

#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "pufchain/fom.hpp"
#include "pufchain/puf.hpp"
#include "pufchain/random.hpp"

namespace pufchain {

struct CrpRecord {
  DeviceId device_id;
  std::vector<std::pair<Challenge, Response>> pairs;
  std::uint64_t enrolled_at = 0;

  void validate() const {
    if (pairs.empty()) throw ValidationError("CRP record has no pairs");
    const auto width = pairs.front().second.size();
    for (std::size_t a = 0; a < pairs.size(); ++a) {
      if (pairs[a].second.size() != width) throw ValidationError("CRP record responses differ in width");
      if (pairs[a].first.size() != width) throw ValidationError("challenge length does not match response width");
    }
    std::set<std::vector<Selector>> seen;
    for (const auto& [c, r] : pairs)
      if (!seen.insert(c.selectors).second) throw ValidationError("duplicate challenge in CRP record");
  }

  friend bool operator==(const CrpRecord&, const CrpRecord&) = default;
};

// Seeds for one enrollment. Candidate k is random_challenge(.., derive(candidate_seed, k));
// its screening re-evaluations use seed_list(derive(eval_seed, k), n).
struct EnrollSeeds {
  std::uint64_t candidate_seed = 0;
  std::uint64_t eval_seed = 0;

  std::uint64_t candidate(std::size_t k) const { return rng::derive(candidate_seed, k); }
  std::uint64_t screening(std::size_t k) const { return rng::derive(eval_seed, k); }
};

class Registry {
 public:
  void grant_trusted(NodeId node) { trusted_.insert(node); }
  bool is_trusted(NodeId node) const { return trusted_.contains(node); }
  const std::set<NodeId>& trusted_nodes() const { return trusted_; }

  bool contains(DeviceId id) const { return records_.contains(id); }
  std::size_t size() const { return records_.size(); }
  const std::map<DeviceId, CrpRecord>& records() const { return records_; }

  // Screens n_candidates random challenges and stores the accepted ones with
  // their noiseless reference responses.
  const CrpRecord& enroll(const PufDevice& device, std::size_t n_candidates, const fom::ScreeningPolicy& policy,
                          const EnrollSeeds& seeds, std::uint64_t enrolled_at = 0) {
    if (contains(device.id())) throw ConflictError("device already enrolled: " + device.id().to_hex());
    if (n_candidates == 0) throw ArgumentError("n_candidates must be positive");
    const std::size_t width = kResponseWidth;
    policy.validate(width);
    CrpRecord rec;
    rec.device_id = device.id();
    rec.enrolled_at = enrolled_at;
    std::set<std::vector<Selector>> seen;
    for (std::size_t k = 0; k < n_candidates; ++k) {
      auto challenge = random_challenge(device.set_size(), width, seeds.candidate(k));
      auto res = fom::screen_challenge(device, challenge, policy, seeds.screening(k));
      if (!res.accepted) continue;
      if (!seen.insert(challenge.selectors).second) continue;
      rec.pairs.emplace_back(std::move(challenge), std::move(res.reference));
    }
    if (rec.pairs.empty()) throw EnrollmentFailed("no challenge passed screening for " + device.id().to_hex());
    return records_.emplace(rec.device_id, std::move(rec)).first->second;
  }

  // Adds a pre-built record (registry import).
  const CrpRecord& insert(CrpRecord rec) {
    rec.validate();
    if (contains(rec.device_id)) throw ConflictError("device already enrolled: " + rec.device_id.to_hex());
    return records_.emplace(rec.device_id, std::move(rec)).first->second;
  }

  // Same access rule as lookup(), without copying the record.
  const CrpRecord& record_for(NodeId requester, DeviceId device) const {
    if (!is_trusted(requester) && !is_trusted(device))
      throw AccessDenied("node " + requester.to_hex() + " may not read CRPs of " + device.to_hex());
    const auto it = records_.find(device);
    if (it == records_.end()) throw NotFound("device not enrolled: " + device.to_hex());
    return it->second;
  }

  std::vector<Response> lookup(NodeId requester, DeviceId device) const {
    const auto& rec = record_for(requester, device);
    std::vector<Response> out;
    out.reserve(rec.pairs.size());
    for (const auto& [c, r] : rec.pairs) out.push_back(r);
    return out;
  }

  // Factory provisioning: a device learns its own enrolled challenges (never
  // responses) so it can answer them later.
  std::vector<Challenge> provision_challenges(DeviceId device) const {
    const auto it = records_.find(device);
    if (it == records_.end()) throw NotFound("device not enrolled: " + device.to_hex());
    std::vector<Challenge> out;
    for (const auto& [c, r] : it->second.pairs) out.push_back(c);
    return out;
  }

  std::size_t pair_count(DeviceId device) const {
    const auto it = records_.find(device);
    return it == records_.end() ? 0 : it->second.pairs.size();
  }

  static constexpr std::size_t kResponseWidth = 128;

 private:
  std::map<DeviceId, CrpRecord> records_;
  std::set<NodeId> trusted_;
};

// ---- persistence -------------------------------------------------------------

inline nlohmann::ordered_json record_to_json(const CrpRecord& rec) {
  nlohmann::ordered_json pairs = nlohmann::ordered_json::array();
  for (const auto& [c, r] : rec.pairs) {
    nlohmann::ordered_json sel = nlohmann::ordered_json::array();
    for (const auto& [i, j] : c.selectors) sel.push_back({i, j});
    pairs.push_back({{"challenge", std::move(sel)}, {"response", r.to_hex()}});
  }
  nlohmann::ordered_json j;
  j["device_id"] = rec.device_id.to_hex();
  j["enrolled_at"] = rec.enrolled_at;
  j["pairs"] = std::move(pairs);
  return j;
}

inline CrpRecord record_from_json_line(std::string_view line) {
  try {
    const auto j = nlohmann::json::parse(line);
    CrpRecord rec;
    rec.device_id = DeviceId::from_hex(j.at("device_id").get<std::string>());
    rec.enrolled_at = j.at("enrolled_at").get<std::uint64_t>();
    for (const auto& p : j.at("pairs")) {
      Challenge c;
      for (const auto& s : p.at("challenge")) {
        if (!s.is_array() || s.size() != 2) throw ParseError("selector must be an [i, j] pair");
        c.selectors.emplace_back(s[0].get<std::uint32_t>(), s[1].get<std::uint32_t>());
      }
      const auto width = c.size();
      rec.pairs.emplace_back(std::move(c), Response::from_hex(p.at("response").get<std::string>(), width));
    }
    rec.validate();
    return rec;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("registry record: ") + e.what());
  }
}

inline void write_registry(std::ostream& out, const Registry& reg) {
  for (const auto& [id, rec] : reg.records()) out << record_to_json(rec).dump() << '\n';
}

// Records only; the trusted-node ACL comes from the deployment roster.
inline Registry read_registry(std::istream& in) {
  Registry reg;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    reg.insert(record_from_json_line(line));
  }
  return reg;
}

}  // namespace pufchain
