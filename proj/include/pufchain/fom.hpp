#pragma once

// Figures of merit (uniqueness, reliability, randomness, correlation) and
// the enrollment-time challenge screening filter.

#include <cmath>
#include <span>
#include <vector>

#include "json.hpp"
#include "pufchain/puf.hpp"
#include "pufchain/random.hpp"

namespace pufchain::fom {

struct FomReport {
  double uniqueness_pct = 0.0;
  double reliability_pct = 0.0;
  double randomness_pct = 0.0;
  double correlation = 0.0;  // mean |Pearson r| between devices' bit streams
  std::size_t n_devices = 0;
  std::size_t n_challenges = 0;
  std::size_t n_reevaluations = 0;

  nlohmann::ordered_json to_json() const {
    return {{"uniqueness_pct", uniqueness_pct}, {"reliability_pct", reliability_pct},
            {"randomness_pct", randomness_pct}, {"correlation", correlation},
            {"n_devices", n_devices},           {"n_challenges", n_challenges},
            {"n_reevaluations", n_reevaluations}};
  }
};

struct ScreeningPolicy {
  double randomness_low = 45.0;
  double randomness_high = 55.0;
  std::size_t max_unreliable_bits = 3;
  std::size_t n_screen_reevals = 11;

  void validate(std::size_t response_bits) const {
    if (!(randomness_low >= 0.0 && randomness_low <= randomness_high && randomness_high <= 100.0))
      throw ConfigError("randomness band must lie within [0, 100]");
    if (max_unreliable_bits >= response_bits) throw ConfigError("max_unreliable_bits must be below response_bits");
    if (n_screen_reevals < 1) throw ConfigError("n_screen_reevals must be at least 1");
  }
};

// Rows are devices, columns are challenges.
using ResponseMatrix = std::vector<std::vector<Response>>;

inline double randomness(const Response& r) {
  if (r.size() == 0) throw ArgumentError("randomness of an empty response");
  return 100.0 * static_cast<double>(r.ones()) / static_cast<double>(r.size());
}

namespace detail {
inline std::size_t check_matrix(const ResponseMatrix& m, std::size_t min_devices) {
  if (m.size() < min_devices) throw DimensionError("too few devices");
  const std::size_t n_chal = m.front().size();
  if (n_chal == 0) throw DimensionError("no challenges");
  const std::size_t width = m.front().front().size();
  if (width == 0) throw DimensionError("empty responses");
  for (const auto& row : m) {
    if (row.size() != n_chal) throw DimensionError("ragged response matrix");
    for (const auto& r : row)
      if (r.size() != width) throw DimensionError("response widths differ");
  }
  return width;
}
}  // namespace detail

inline double uniqueness(const ResponseMatrix& m) {
  const std::size_t width = detail::check_matrix(m, 2);
  double sum = 0.0;
  std::size_t terms = 0;
  for (std::size_t a = 0; a < m.size(); ++a)
    for (std::size_t b = a + 1; b < m.size(); ++b)
      for (std::size_t c = 0; c < m[a].size(); ++c) {
        sum += static_cast<double>(hamming_distance(m[a][c], m[b][c])) / static_cast<double>(width);
        ++terms;
      }
  return 100.0 * sum / static_cast<double>(terms);
}

// Mean distance of one device's row against every other row.
inline double device_uniqueness(const ResponseMatrix& m, std::size_t device) {
  const std::size_t width = detail::check_matrix(m, 2);
  if (device >= m.size()) throw ArgumentError("device index out of range");
  double sum = 0.0;
  std::size_t terms = 0;
  for (std::size_t other = 0; other < m.size(); ++other) {
    if (other == device) continue;
    for (std::size_t c = 0; c < m[device].size(); ++c) {
      sum += static_cast<double>(hamming_distance(m[device][c], m[other][c])) / static_cast<double>(width);
      ++terms;
    }
  }
  return 100.0 * sum / static_cast<double>(terms);
}

inline double reliability(const PufDevice& device, const Challenge& challenge, std::span<const std::uint64_t> seeds) {
  if (seeds.size() < 2) throw ArgumentError("reliability needs at least two re-evaluations");
  std::vector<Response> rs;
  rs.reserve(seeds.size());
  for (auto s : seeds) rs.push_back(evaluate(device, challenge, s));
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < rs.size(); ++a)
    for (std::size_t b = a + 1; b < rs.size(); ++b) {
      sum += static_cast<double>(hamming_distance(rs[a], rs[b]));
      ++pairs;
    }
  return 100.0 * sum / (static_cast<double>(pairs) * static_cast<double>(challenge.size()));
}

inline std::vector<std::uint64_t> seed_list(std::uint64_t base, std::size_t n) {
  std::vector<std::uint64_t> seeds(n);
  for (std::size_t k = 0; k < n; ++k) seeds[k] = rng::derive(base, k);
  return seeds;
}

// Mean absolute Pearson correlation between every pair of devices, each
// device's responses concatenated into one bit stream.
inline double correlation(const ResponseMatrix& m) {
  detail::check_matrix(m, 2);
  std::vector<std::vector<double>> streams;
  for (const auto& row : m) {
    std::vector<double> s;
    for (const auto& r : row)
      for (bool b : r.bits) s.push_back(b ? 1.0 : 0.0);
    streams.push_back(std::move(s));
  }
  auto pearson = [](const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      mx += x[k];
      my += y[k];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      sxy += (x[k] - mx) * (y[k] - my);
      sxx += (x[k] - mx) * (x[k] - mx);
      syy += (y[k] - my) * (y[k] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
  };
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < streams.size(); ++a)
    for (std::size_t b = a + 1; b < streams.size(); ++b) {
      sum += std::abs(pearson(streams[a], streams[b]));
      ++pairs;
    }
  return sum / static_cast<double>(pairs);
}

struct ScreeningResult {
  bool accepted = false;
  Response reference;          // noiseless response, the value to enroll
  double randomness_pct = 0.0;
  std::size_t worst_flips = 0; // max distance of any noisy evaluation from the reference
  std::size_t evaluations = 0; // noisy evaluations actually run
};

// Accept iff the reference response is balanced within the policy band and no
// noisy re-evaluation strays more than max_unreliable_bits from it. Screening
// stops at the first failing condition.
inline ScreeningResult screen_challenge(const PufDevice& device, const Challenge& challenge,
                                        const ScreeningPolicy& policy, std::span<const std::uint64_t> seeds) {
  policy.validate(challenge.size());
  if (seeds.size() < policy.n_screen_reevals) throw ArgumentError("fewer seeds than n_screen_reevals");
  ScreeningResult res;
  res.reference = evaluate_reference(device, challenge);
  res.randomness_pct = randomness(res.reference);
  if (res.randomness_pct < policy.randomness_low || res.randomness_pct > policy.randomness_high) return res;
  for (std::size_t k = 0; k < policy.n_screen_reevals; ++k) {
    const auto d = hamming_distance(evaluate(device, challenge, seeds[k]), res.reference);
    ++res.evaluations;
    res.worst_flips = std::max(res.worst_flips, d);
    if (d > policy.max_unreliable_bits) return res;
  }
  res.accepted = true;
  return res;
}

inline ScreeningResult screen_challenge(const PufDevice& device, const Challenge& challenge,
                                        const ScreeningPolicy& policy, std::uint64_t seed_base) {
  const auto seeds = seed_list(seed_base, policy.n_screen_reevals);
  return screen_challenge(device, challenge, policy, seeds);
}

}  // namespace pufchain::fom
