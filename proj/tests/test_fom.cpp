#include <catch_amalgamated.hpp>

#include <algorithm>
#include <bit>
#include <random>

#include "pufchain/fom.hpp"
#include "pufchain/puf.hpp"

using namespace pufchain;

namespace {

PufDevice make(std::uint64_t seed, double noise = 0.1) {
  PufConfig c;
  c.noise_sigma = noise;
  return manufacture(c, DeviceId(0x0C0000000000ULL + seed), seed);
}

Response random_response(std::mt19937_64& g, std::size_t n = 128) {
  std::vector<bool> b(n);
  for (std::size_t k = 0; k < n; ++k) b[k] = g() & 1;
  return Response(b);
}

// Popcount over packed bytes, independent of hamming_distance().
double oracle_uniqueness(const fom::ResponseMatrix& m) {
  double sum = 0;
  std::size_t terms = 0;
  for (std::size_t a = 0; a < m.size(); ++a)
    for (std::size_t b = a + 1; b < m.size(); ++b)
      for (std::size_t c = 0; c < m[a].size(); ++c) {
        const auto x = m[a][c].to_bytes(), y = m[b][c].to_bytes();
        int d = 0;
        for (std::size_t i = 0; i < x.size(); ++i) d += std::popcount(static_cast<unsigned>(x[i] ^ y[i]));
        sum += static_cast<double>(d) / m[a][c].size();
        ++terms;
      }
  return 100.0 * sum / terms;
}

}  // namespace

TEST_CASE("uniqueness of identical and complementary responses") {
  std::mt19937_64 g(1);
  const auto r = random_response(g);
  CHECK(fom::uniqueness({{r}, {r}}) == 0.0);
  CHECK(fom::uniqueness({{r}, {r.complement()}}) == 100.0);
}

TEST_CASE("uniqueness matches the popcount oracle") {
  std::mt19937_64 g(2);
  for (int trial = 0; trial < 20; ++trial) {
    fom::ResponseMatrix m(2 + g() % 5);
    const std::size_t n_chal = 1 + g() % 6;
    for (auto& row : m)
      for (std::size_t c = 0; c < n_chal; ++c) row.push_back(random_response(g));
    CHECK(fom::uniqueness(m) == Catch::Approx(oracle_uniqueness(m)).epsilon(1e-12));
  }
}

TEST_CASE("uniqueness is permutation and complement invariant") {
  std::mt19937_64 g(3);
  fom::ResponseMatrix m(5);
  for (auto& row : m)
    for (int c = 0; c < 4; ++c) row.push_back(random_response(g));
  const double u = fom::uniqueness(m);
  auto perm = m;
  std::shuffle(perm.begin(), perm.end(), g);
  CHECK(fom::uniqueness(perm) == Catch::Approx(u));
  auto comp = m;
  for (auto& row : comp)
    for (auto& r : row) r = r.complement();
  CHECK(fom::uniqueness(comp) == Catch::Approx(u));
}

TEST_CASE("uniqueness rejects malformed matrices") {
  std::mt19937_64 g(4);
  const auto r = random_response(g);
  CHECK_THROWS_AS(fom::uniqueness({{r}}), DimensionError);
  CHECK_THROWS_AS(fom::uniqueness({{r, r}, {r}}), DimensionError);
  CHECK_THROWS_AS(fom::uniqueness({{r}, {random_response(g, 64)}}), DimensionError);
  CHECK_THROWS_AS(fom::uniqueness({{}, {}}), DimensionError);
  CHECK_THROWS_AS(fom::device_uniqueness({{r}, {r}}, 2), ArgumentError);
}

TEST_CASE("device uniqueness averages to population uniqueness") {
  std::mt19937_64 g(5);
  fom::ResponseMatrix m(4);
  for (auto& row : m)
    for (int c = 0; c < 3; ++c) row.push_back(random_response(g));
  double s = 0;
  for (std::size_t d = 0; d < m.size(); ++d) s += fom::device_uniqueness(m, d);
  CHECK(s / m.size() == Catch::Approx(fom::uniqueness(m)));
}

TEST_CASE("randomness examples") {
  CHECK(fom::randomness(Response(std::vector<bool>(128, false))) == 0.0);
  std::vector<bool> alt(128);
  for (std::size_t k = 0; k < alt.size(); ++k) alt[k] = k % 2;
  CHECK(fom::randomness(Response(alt)) == 50.0);
  std::mt19937_64 g(6);
  for (int i = 0; i < 50; ++i) {
    const auto r = random_response(g);
    CHECK(fom::randomness(r.complement()) == Catch::Approx(100.0 - fom::randomness(r)));
  }
  CHECK_THROWS_AS(fom::randomness(Response()), ArgumentError);
}

TEST_CASE("reliability at zero noise is exactly zero") {
  const auto d = make(1, 0.0);
  for (std::uint64_t s = 0; s < 20; ++s)
    CHECK(fom::reliability(d, random_challenge(256, 128, s), fom::seed_list(s, 11)) == 0.0);
}

TEST_CASE("reliability needs two evaluations") {
  const auto d = make(1);
  const auto c = random_challenge(256, 128, 1);
  CHECK_THROWS_AS(fom::reliability(d, c, fom::seed_list(1, 1)), ArgumentError);
}

TEST_CASE("reliability at default noise stays within 5 percent") {
  const auto d = make(2);
  double sum = 0;
  for (std::uint64_t s = 0; s < 100; ++s) sum += fom::reliability(d, random_challenge(256, 128, s), fom::seed_list(s, 11));
  CHECK(sum / 100 <= 5.0);
  CHECK(sum / 100 > 0.0);
}

TEST_CASE("reliability with noise far above process variation approaches coin flips") {
  PufConfig cfg;
  const auto d = make(3).with_noise(10 * cfg.freq_sigma);
  double sum = 0;
  for (std::uint64_t s = 0; s < 20; ++s) sum += fom::reliability(d, random_challenge(256, 128, s), fom::seed_list(s, 11));
  // Jitter dominates every comparison; pairwise disagreement is near 1/2.
  CHECK(sum / 20 > 20.0);
}

TEST_CASE("screening accepts a constructed stable balanced challenge") {
  const auto d = make(4);
  const double gap = 10 * d.noise_sigma();
  Challenge c;
  std::size_t pos = 0, neg = 0;
  for (std::uint32_t i = 0; i < 256 && c.size() < 128; ++i)
    for (std::uint32_t j = 0; j < 256 && c.size() < 128; ++j) {
      const double diff = d.set1()[i] - d.set2()[j];
      if (diff > gap && pos < 64) {
        c.selectors.emplace_back(i, j);
        ++pos;
      } else if (diff < -gap && neg < 64) {
        c.selectors.emplace_back(i, j);
        ++neg;
      }
    }
  REQUIRE(c.size() == 128);
  const auto res = fom::screen_challenge(d, c, fom::ScreeningPolicy{}, 99);
  CHECK(res.accepted);
  CHECK(res.randomness_pct == 50.0);
  CHECK(res.worst_flips == 0);
  CHECK(res.evaluations == 11);
}

TEST_CASE("screening rejects an all-ones challenge before any noisy evaluation") {
  const auto d = make(5);
  Challenge c;
  for (std::uint32_t i = 0; i < 256 && c.size() < 128; ++i)
    for (std::uint32_t j = 0; j < 256 && c.size() < 128; ++j)
      if (d.set1()[i] > d.set2()[j] + 1.0) c.selectors.emplace_back(i, j);
  REQUIRE(c.size() == 128);
  const auto res = fom::screen_challenge(d, c, fom::ScreeningPolicy{}, 1);
  CHECK_FALSE(res.accepted);
  CHECK(res.randomness_pct == 100.0);
  CHECK(res.evaluations == 0);
}

TEST_CASE("screening policy validation") {
  fom::ScreeningPolicy p;
  p.randomness_low = 60;
  CHECK_THROWS_AS(p.validate(128), ConfigError);
  p = {};
  p.max_unreliable_bits = 128;
  CHECK_THROWS_AS(p.validate(128), ConfigError);
  p = {};
  p.n_screen_reevals = 0;
  CHECK_THROWS_AS(p.validate(128), ConfigError);
  const auto d = make(1);
  CHECK_THROWS_AS(fom::screen_challenge(d, random_challenge(256, 128, 1), fom::ScreeningPolicy{}, fom::seed_list(1, 3)),
                  ArgumentError);
}

TEST_CASE("screened challenges stay stable under fresh evaluations") {
  const fom::ScreeningPolicy policy;
  std::size_t evals = 0, bad = 0, accepted = 0;
  for (std::uint64_t dev = 0; dev < 3; ++dev) {
    const auto d = make(100 + dev);
    for (std::uint64_t k = 0; k < 400; ++k) {
      const auto c = random_challenge(256, 128, rng::derive(dev, k));
      const auto res = fom::screen_challenge(d, c, policy, rng::derive(dev, k, 1));
      if (!res.accepted) continue;
      ++accepted;
      for (auto s : fom::seed_list(rng::derive(dev, k, 2), 50)) {
        ++evals;
        bad += hamming_distance(evaluate(d, c, s), res.reference) > policy.max_unreliable_bits;
      }
    }
  }
  REQUIRE(accepted > 100);
  INFO("mismatch rate " << static_cast<double>(bad) / evals);
  CHECK(static_cast<double>(bad) / evals < 0.01);
}

TEST_CASE("correlation of independent devices is small, identical devices is one") {
  std::vector<PufDevice> devs;
  for (std::uint64_t s = 0; s < 4; ++s) devs.push_back(make(200 + s, 0.0));
  fom::ResponseMatrix m(devs.size());
  for (std::uint64_t c = 0; c < 50; ++c) {
    const auto ch = random_challenge(256, 128, c);
    for (std::size_t d = 0; d < devs.size(); ++d) m[d].push_back(evaluate_reference(devs[d], ch));
  }
  CHECK(fom::correlation(m) < 0.05);
  fom::ResponseMatrix same{m[0], m[0]};
  CHECK(fom::correlation(same) == Catch::Approx(1.0));
}
