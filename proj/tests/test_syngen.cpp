#include <doctest.h>

#include <cmath>
#include <sstream>

#include "actpred/errors.hpp"
#include "actpred/predictors.hpp"
#include "actpred/syngen.hpp"
#include "oracles.hpp"

using namespace actpred;

namespace {

GeneratorConfig coupled(std::uint64_t seed) {
  GeneratorConfig g = make_generator_config(std::vector{0.08, 0.12, 0.3, 0.2}, 2);
  g.kernels[0] << 2.0, 0.5, 0.0, 0.0,
                  1.0, 1.5, 0.0, 0.0,
                  0.0, 0.0, 2.5, -0.5,
                  0.3, 0.0, 0.0, 1.8;
  g.kernels[1] << 0.5, 0.0, 0.0, 0.0,
                  0.0, 0.0, 0.0, 0.0,
                  0.0, 0.0, -0.7, 0.0,
                  0.0, 0.0, 0.0, 0.4;
  g.interactions.push_back({1, 0, 2, 1, 1.2});
  g.seed = seed;
  return g;
}

}  // namespace

TEST_CASE("generator output is deterministic and thread independent") {
  GeneratorConfig g = coupled(5);
  g.horizon = 5000;
  g.users = 5;
  g.heterogeneity = 0.4;
  const auto a = generate(g, 1);
  CHECK(generate(g, 1) == a);
  CHECK(generate(g, 3) == a);
  CHECK(generate_user(g, 3) == a[3]);
  CHECK(a[0].user_id == "user0000");
  CHECK(a[4].user_id == "user0004");
  g.seed = 6;
  CHECK(generate(g, 1)[0] != a[0]);
  for (const auto& s : a) {
    CHECK(s.length() == 5000);
    CHECK(s.coverage.count() == 5000);
    CHECK_NOTHROW(s.validate());
  }
}

TEST_CASE("heterogeneity offsets are per user and reproducible") {
  GeneratorConfig g = coupled(5);
  CHECK(user_base_logits(g, 0) == g.base_logits);
  g.heterogeneity = 0.5;
  const auto u0 = user_base_logits(g, 0);
  CHECK(u0 == user_base_logits(g, 0));
  CHECK(u0 != user_base_logits(g, 1));
  CHECK(u0 != g.base_logits);
}

TEST_CASE("no coupling: activity rate equals the base rate") {
  GeneratorConfig g = make_generator_config(std::vector{0.05, 0.2, 0.5, 0.9}, 1);
  g.horizon = 100000;
  g.users = 2;
  g.seed = 1;
  const auto rates = empirical_rates(generate(g));
  const double want[] = {0.05, 0.2, 0.5, 0.9};
  for (int c = 0; c < 4; ++c) {
    const double se = std::sqrt(want[c] * (1 - want[c]) / 200000.0);
    CHECK(std::abs(rates(c) - want[c]) < 4.5 * se);
  }
}

TEST_CASE("empirical next-bin frequencies match the oracle") {
  GeneratorConfig g = coupled(9);
  g.horizon = 300000;
  const auto series = generate(g);
  const WindowSpec spec{2, 1, 4};
  const auto table = build_table(extract_all(series, spec), spec);
  int tested = 0;
  for (PatternCode code : table.observed_codes()) {
    const auto n = table.pattern_total(code);
    if (n < 2000) continue;
    for (int c = 0; c < 4; ++c) {
      const double p = oracle_probability(g, code, spec, 0, c);
      const double observed = static_cast<double>(table.pattern_future_active(code, c)) / static_cast<double>(n);
      CHECK(std::abs(observed - p) < 4.5 * std::sqrt(p * (1 - p) / static_cast<double>(n)) + 1e-9);
      ++tested;
    }
  }
  CHECK(tested >= 40);
}

TEST_CASE("oracle evaluates the law directly") {
  GeneratorConfig g = coupled(1);
  BinaryWindow w = BinaryWindow::Zero(2, 4);
  w(1, 0) = 1;  // channel 0 active at t-1
  w(1, 2) = 1;  // channel 2 active at t-1
  w(0, 0) = 1;  // channel 0 active at t-2
  const double z1 = g.base_logits(1) + 1.0 + 1.2;
  CHECK(oracle_probability(g, w, 0, 1) == doctest::Approx(oracle::sigmoid(z1)));
  const double z0 = g.base_logits(0) + 2.0 + 0.5;
  CHECK(oracle_probability(g, w, 0, 0) == doctest::Approx(oracle::sigmoid(z0)));
  // Longer windows ignore bins beyond the kernel depth.
  BinaryWindow longer = BinaryWindow::Ones(5, 4);
  longer.bottomRows(2) = w;
  CHECK(oracle_probability(g, longer, 0, 1) == oracle_probability(g, w, 0, 1));
  CHECK_THROWS_AS(oracle_probability(g, BinaryWindow::Zero(1, 4), 0, 0), UsageError);
}

TEST_CASE("circadian term follows the week slot") {
  GeneratorConfig g = make_generator_config(std::vector{0.1, 0.1, 0.1, 0.1}, 1);
  const std::vector<double> amp{1, 1, 1, 1}, peak{12, 12, 12, 12};
  g.circadian = daily_sinusoid(amp, peak, 15);
  REQUIRE(g.circadian.cols() == 672);
  // 12:00 falls between slots 47 and 48; both midpoints are 7.5 minutes away.
  CHECK(g.circadian(0, 47) == doctest::Approx(g.circadian(0, 48)));
  CHECK(g.circadian(0, 47) > 0.99);
  CHECK(g.circadian(0, 0) < -0.99);
  CHECK(g.circadian(0, 96 + 47) == doctest::Approx(g.circadian(0, 47)));
  const BinaryWindow w = BinaryWindow::Zero(1, 4);
  CHECK(oracle_probability(g, w, 47, 0) == doctest::Approx(oracle::sigmoid(g.base_logits(0) + g.circadian(0, 47))));
}

TEST_CASE("calibration reaches target rates") {
  GeneratorConfig g = coupled(3);
  const std::vector<double> targets{0.02, 0.05, 0.1, 0.15};
  const auto calibrated = calibrate_base_logits(g, targets, 200000);
  calibrated.validate();
  GeneratorConfig check = calibrated;
  check.horizon = 200000;
  check.users = 2;
  check.seed = 99;
  const auto rates = empirical_rates(generate(check));
  for (int c = 0; c < 4; ++c) CHECK(rates(c) == doctest::Approx(targets[static_cast<std::size_t>(c)]).epsilon(0.1));
  CHECK_THROWS_AS(calibrate_base_logits(g, std::vector{0.1, 0.2}, 100), UsageError);
}

TEST_CASE("generator config JSON") {
  GeneratorConfig g = coupled(42);
  g.horizon = 100;
  g.users = 3;
  g.heterogeneity = 0.25;
  const std::vector<double> amp{0.5, 0.5, 0.5, 0.5}, peak{9, 10, 11, 12};
  g.circadian = daily_sinusoid(amp, peak, 15);
  std::stringstream buffer;
  write_generator_config(buffer, g);
  const auto back = read_generator_config(buffer);
  CHECK(back.labels == g.labels);
  CHECK(back.base_logits == g.base_logits);
  CHECK(back.circadian == g.circadian);
  REQUIRE(back.kernels.size() == g.kernels.size());
  for (std::size_t k = 0; k < g.kernels.size(); ++k) CHECK(back.kernels[k] == g.kernels[k]);
  CHECK(back.interactions.size() == 1);
  CHECK(generate(back) == generate(g));

  std::stringstream compact(R"({
    "base_rates": [0.1, 0.2, 0.3, 0.4],
    "circadian_daily": {"amplitude": [1, 0, 0, 0], "peak_hour": 14},
    "kernels": [[[1.0, 0.5], [0], [0], [0]], [[0], [0], [0], [0]], [[0], [0], [0], [0]], [[0], [0], [0], [0]]],
    "horizon": 10, "users": 2, "seed": 7
  })");
  const auto c = read_generator_config(compact);
  CHECK(c.max_lag() == 2);
  CHECK(c.kernels[1](0, 0) == 0.5);
  CHECK(c.base_logits(1) == doctest::Approx(logit(0.2)));
  CHECK(c.circadian.rows() == 4);

  std::stringstream bad_rate(R"({"base_rates": [0.1, 1.2, 0.3, 0.4], "kernels": [[[0],[0],[0],[0]],[[0],[0],[0],[0]],[[0],[0],[0],[0]],[[0],[0],[0],[0]]], "horizon": 1})");
  CHECK_THROWS_AS(read_generator_config(bad_rate), ValidationError);
  std::stringstream missing(R"({"base_rates": [0.1, 0.2, 0.3, 0.4], "horizon": 1})");
  CHECK_THROWS_AS(read_generator_config(missing), ValidationError);
  std::stringstream ragged(R"({"base_rates": [0.1, 0.2, 0.3, 0.4], "kernels": [[[0],[0]]], "horizon": 1})");
  CHECK_THROWS_AS(read_generator_config(ragged), ValidationError);
}
