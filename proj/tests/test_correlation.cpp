#include <doctest.h>

#include <cmath>
#include <sstream>

#include "actpred/bits.hpp"
#include "actpred/correlation.hpp"
#include "actpred/errors.hpp"
#include "actpred/predictors.hpp"
#include "actpred/rng.hpp"
#include "actpred/syngen.hpp"
#include "oracles.hpp"

using namespace actpred;

namespace {

BitVector random_bits(Rng& rng, std::size_t n, double p) {
  BitVector b(n);
  for (std::size_t t = 0; t < n; ++t)
    if (rng.bernoulli(p)) b.set(t);
  return b;
}

std::vector<ActivitySeries> random_population(std::uint64_t seed, int users, std::size_t length, double gap) {
  Rng rng(seed);
  std::vector<ActivitySeries> out;
  for (int u = 0; u < users; ++u) {
    auto s = ActivitySeries::blank("u" + std::to_string(u), static_cast<std::int64_t>(rng.below(1000)), length,
                                   default_channel_labels());
    for (std::size_t t = 0; t < length; ++t) {
      if (rng.bernoulli(gap)) {
        s.coverage.set(t, false);
        continue;
      }
      for (int c = 0; c < 4; ++c)
        if (rng.bernoulli(0.1 + 0.05 * c)) s.bits[static_cast<std::size_t>(c)].set(t);
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

TEST_CASE("count_shifted_and matches a direct scan") {
  Rng rng(1);
  for (std::size_t n : {1, 63, 64, 65, 200, 1000}) {
    const auto a = random_bits(rng, n, 0.5), b = random_bits(rng, n, 0.5);
    const auto c = random_bits(rng, n, 0.8), d = random_bits(rng, n, 0.8);
    for (std::ptrdiff_t shift : {-300, -130, -64, -63, -1, 0, 1, 5, 64, 65, 129, 999, 2000}) {
      std::size_t want = 0;
      for (std::ptrdiff_t t = 0; t < static_cast<std::ptrdiff_t>(n); ++t) {
        const std::ptrdiff_t u = t + shift;
        if (u < 0 || u >= static_cast<std::ptrdiff_t>(n)) continue;
        const auto tt = static_cast<std::size_t>(t), uu = static_cast<std::size_t>(u);
        want += a.test(tt) && b.test(uu) && c.test(tt) && d.test(uu);
      }
      CHECK(count_shifted_and(a, b, c, d, shift) == want);
    }
  }
}

TEST_CASE("conditional rate counts match a direct scan") {
  const auto series = random_population(2, 3, 900, 0.05);
  for (int i : {0, 2})
    for (int j : {1, 3}) {
      const auto p = conditional_rate(series, i, j, 70);
      REQUIRE(p.lags.size() == 141);
      for (std::size_t k = 0; k < p.lags.size(); ++k) {
        const auto [anchors, hits] = oracle::conditional_counts(series, i, j, p.lags[k]);
        CHECK(p.anchors[k] == anchors);
        CHECK(p.hits[k] == hits);
      }
    }
}

TEST_CASE("joint counts are symmetric under swapping channels and negating lag") {
  const auto series = random_population(3, 2, 2000, 0.02);
  const auto ij = conditional_rate(series, 0, 3, 20);
  const auto ji = conditional_rate(series, 3, 0, 20);
  const std::size_t n = ij.lags.size();
  for (std::size_t k = 0; k < n; ++k) CHECK(ij.hits[k] == ji.hits[n - 1 - k]);
  const auto self = conditional_rate(series, 1, 1, 3);
  CHECK(*self.value(3) == 1.0);  // lag 0
}

TEST_CASE("independent channels give alpha near one") {
  GeneratorConfig g = make_generator_config(std::vector{0.2, 0.3, 0.25, 0.1}, 1);
  g.horizon = 672 * 100;
  g.users = 3;
  g.seed = 17;
  const auto series = generate(g);
  CorrelationOptions opts;
  opts.max_lag_bins = 4;
  const auto profile = correlate(series, BinConfig{}, opts);
  for (const auto& pair : profile.pairs) {
    for (std::size_t k = 0; k < pair.alpha.size(); ++k) {
      if (pair.source == pair.target && pair.p.lags[k] == 0) continue;
      REQUIRE(pair.alpha[k]);
      const double p = *pair.p.value(k);
      const double se = std::sqrt(p * (1 - p) / static_cast<double>(pair.p.anchors[k]));
      CHECK(std::abs(*pair.alpha[k] - 1.0) < 5 * se / *pair.q.value(k) + 0.02);
    }
  }
}

TEST_CASE("self-excitation matches the two-state closed form") {
  const double b = logit(0.05), k1 = 2.0;
  GeneratorConfig g = make_generator_config(std::vector{0.05}, 1);
  g.kernels[0](0, 0) = k1;
  g.horizon = 672 * 600;
  g.seed = 4;
  const auto series = generate(g);
  const auto p = conditional_rate(series, 0, 0, 1);
  const auto q = reference_rate(series, 0, 0, 1, BinConfig{});
  const auto a = alpha(p, q);
  const double pi = oracle::two_state_stationary(oracle::sigmoid(b), oracle::sigmoid(b + k1));
  CHECK(*p.value(2) == doctest::Approx(oracle::sigmoid(b + k1)).epsilon(0.03));
  CHECK(*a[2] == doctest::Approx(oracle::sigmoid(b + k1) / pi).epsilon(0.05));
}

TEST_CASE("alpha floors") {
  ConditionalRate p{{0, 1}, {99, 100}, {10, 10}};
  ReferenceRate q{{0, 1}, {10.0, 10.0}, {100, 100}, {0, 0}};
  auto a = alpha(p, q);
  CHECK_FALSE(a[0]);
  CHECK(*a[1] == doctest::Approx(1.0));
  ReferenceRate tiny{{0, 1}, {0.0, 0.005}, {100, 100}, {0, 0}};
  a = alpha(p, tiny);
  CHECK_FALSE(a[1]);
  ConditionalRate other{{0}, {1}, {1}};
  CHECK_THROWS_AS(alpha(other, q), UsageError);
}

TEST_CASE("correlate is thread-count independent and writes every pair") {
  const auto series = random_population(8, 4, 1500, 0.03);
  CorrelationOptions opts;
  opts.max_lag_bins = 8;
  const auto one = correlate(series, BinConfig{}, opts, 1);
  const auto many = correlate(series, BinConfig{}, opts, 5);
  std::stringstream a, b;
  write_correlation_csv(a, one);
  write_correlation_csv(b, many);
  CHECK(a.str() == b.str());
  std::string line;
  std::getline(a, line);
  CHECK(line == "i,j,lag_minutes,P,Q,alpha,anchors");
  std::size_t rows = 0;
  while (std::getline(a, line)) ++rows;
  CHECK(rows == 16 * 17);
  CHECK_THROWS_AS(conditional_rate(series, 0, 4, 3), UsageError);
}
