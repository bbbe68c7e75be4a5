#include <doctest.h>

#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "actpred/errors.hpp"
#include "actpred/evaluation.hpp"
#include "actpred/rng.hpp"
#include "actpred/syngen.hpp"
#include "oracles.hpp"

using namespace actpred;

namespace {

std::vector<ActivitySeries> small_population(std::uint64_t seed, int users, std::int64_t horizon) {
  GeneratorConfig g = make_generator_config(std::vector{0.15, 0.1, 0.3, 0.2}, 2);
  g.kernels[0] = 1.5 * Eigen::MatrixXd::Identity(4, 4);
  g.kernels[0](1, 0) = 1.0;
  g.kernels[1](2, 3) = -0.8;
  g.horizon = horizon;
  g.users = users;
  g.seed = seed;
  g.heterogeneity = 0.3;
  return generate(g);
}

}  // namespace

TEST_CASE("informedness of explicit vectors") {
  const std::vector<ChannelMask> truth{1, 0, 1, 0};
  const std::vector<ChannelMask> pred{1, 0, 0, 0};
  const auto r = informedness(pred, truth, 1);
  CHECK(*r.channels[0].r11() == 0.5);
  CHECK(*r.channels[0].r00() == 1.0);
  CHECK(*r.channels[0].informedness() == 0.5);

  const std::vector<ChannelMask> all_ones{1, 1, 1, 1};
  CHECK(*informedness(all_ones, truth, 1).channels[0].informedness() == 0.0);
  CHECK(*informedness(truth, truth, 1).channels[0].informedness() == 1.0);
  const std::vector<ChannelMask> flipped{0, 1, 0, 1};
  CHECK(*informedness(flipped, truth, 1).channels[0].informedness() == -1.0);
  const std::vector<ChannelMask> zeros{0, 0, 0, 0};
  CHECK_FALSE(informedness(zeros, zeros, 1).channels[0].informedness());
  CHECK_THROWS_AS(informedness(pred, std::vector<ChannelMask>{1, 0}, 1), UsageError);
}

TEST_CASE("micro average pools counts") {
  InformednessReport r(2);
  r.add(0b01, 0b01);
  r.add(0b10, 0b00);
  r.add(0b00, 0b10);
  const auto m = r.micro();
  CHECK(m.tp == 1);
  CHECK(m.fp == 1);
  CHECK(m.fn == 1);
  CHECK(m.tn == 3);
  InformednessReport s(2);
  s += r;
  s += r;
  CHECK(s.micro().tp == 2);
  CHECK_THROWS_AS(s += InformednessReport(3), UsageError);
}

TEST_CASE("in-sample decision rule attains the best deterministic map") {
  Rng rng(123);
  for (int trial = 0; trial < 40; ++trial) {
    const WindowSpec spec{2, 1, 2};
    std::vector<Instance> inst;
    const int n = 30 + static_cast<int>(rng.below(150));
    const int alphabet = 2 + static_cast<int>(rng.below(9));
    for (int k = 0; k < n; ++k) {
      const PatternCode code = rng.below(static_cast<std::uint64_t>(alphabet));
      const double p0 = 0.1 + 0.08 * static_cast<double>(code);
      ChannelMask f = 0;
      if (rng.bernoulli(p0)) f |= 1;
      if (rng.bernoulli(1.0 - p0)) f |= 2;
      inst.push_back({code, k, 0, f});
    }
    const auto bound = in_sample_upper_bound(build_table(inst, spec));
    for (int c = 0; c < 2; ++c) {
      std::vector<std::uint64_t> patterns;
      std::vector<int> truth;
      for (const auto& i : inst) {
        patterns.push_back(i.pattern);
        truth.push_back(i.future_active(c));
      }
      const double best = oracle::best_map_informedness(patterns, truth);
      const auto got = bound.channels[static_cast<std::size_t>(c)].informedness();
      if (std::isnan(best)) {
        CHECK_FALSE(got);
      } else {
        REQUIRE(got);
        CHECK(*got == doctest::Approx(best).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("in-sample bound dominates inertia and an in-sample logit per channel") {
  const auto series = small_population(3, 3, 30000);
  const WindowSpec spec{3, 1, 4};
  const auto inst = extract_all(series, spec);
  const auto table = build_table(inst, spec);
  const auto bound = in_sample_upper_bound(table);
  const auto inertia = evaluate_inertia(inst, spec);
  const auto logit = evaluate_logit(fit_logit(table, 0.0, TrainOptions{}), inst);
  for (int c = 0; c < 4; ++c) {
    const double b = *bound.channels[static_cast<std::size_t>(c)].informedness();
    CHECK(b >= *inertia.channels[static_cast<std::size_t>(c)].informedness() - 1e-12);
    CHECK(b >= *logit.channels[static_cast<std::size_t>(c)].informedness() - 1e-12);
  }
  CHECK(evaluate_nonparametric(table, inst) == bound);
}

TEST_CASE("nonparametric predictor: unseen patterns predict inactive") {
  const WindowSpec spec{3, 1, 4};
  PatternTable t(spec);
  t.add(1, 0b1111, 3);
  t.add(2, 0, 7);
  NonparametricPredictor dense(t);
  CHECK(dense.predict(1) == 0b1111);
  CHECK(dense.predict(2) == 0);
  CHECK(dense.predict(3) == 0);

  const WindowSpec wide{6, 1, 4};
  PatternTable s(wide);
  s.add(1, 0b0101, 3);
  s.add(2, 0, 7);
  NonparametricPredictor sparse(s);
  CHECK_FALSE(s.dense());
  CHECK(sparse.predict(1) == 0b0101);
  CHECK(sparse.predict(99999) == 0);
}

TEST_CASE("inertia scores a two-state chain as b - a") {
  // P(1|0) = a and P(1|1) = b: inertia has R11 = b and R00 = 1 - a.
  GeneratorConfig g = make_generator_config(std::vector{0.1}, 1);
  g.kernels[0](0, 0) = logit(0.6) - logit(0.1);
  g.horizon = 400000;
  g.seed = 8;
  const auto series = generate(g);
  const WindowSpec spec{1, 1, 1};
  const auto report = evaluate_inertia(extract_all(series, spec), spec);
  CHECK(*report.channels[0].informedness() == doctest::Approx(0.5).epsilon(0.02));
  const double rate = static_cast<double>(series[0].active_bins(0)) / static_cast<double>(series[0].length());
  CHECK(rate == doctest::Approx(oracle::two_state_stationary(0.1, 0.6)).epsilon(0.02));
}

TEST_CASE("convergence curve is deterministic and ends at the full in-sample bound") {
  const auto series = small_population(4, 2, 20000);
  const WindowSpec spec{2, 1, 4};
  const auto inst = extract_all(series, spec);
  const std::vector<std::size_t> sizes{100, 1000, 10000, inst.size()};
  const auto a = convergence_curve(inst, spec, sizes, 6);
  const auto b = convergence_curve(inst, spec, sizes, 6);
  REQUIRE(a.size() == 4);
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k].report == b[k].report);
  CHECK(a.back().report == in_sample_upper_bound(build_table(inst, spec)));
  std::uint64_t n = 0;
  for (const auto& ch : a[1].report.channels) n = ch.tp + ch.fp + ch.tn + ch.fn;
  CHECK(n == 1000);
  const auto split = convergence_curve(inst, spec, sizes, 6, {EvaluationMode::split, 0.75});
  CHECK(split[2].report.channels[0].tp + split[2].report.channels[0].fn +
            split[2].report.channels[0].tn + split[2].report.channels[0].fp == 2500);
  const std::vector<std::size_t> descending{10, 5};
  CHECK_THROWS_AS(convergence_curve(inst, spec, descending, 6), UsageError);
  const std::vector<std::size_t> too_many{inst.size() + 1};
  CHECK_THROWS_AS(convergence_curve(inst, spec, too_many, 6), UsageError);
}

TEST_CASE("matched sampling draws c - 1 per pattern and respects exclusion") {
  const WindowSpec spec{2, 1, 4};
  const auto series = small_population(9, 4, 8000);
  const auto all = extract_all(series, spec);
  std::vector<Instance> own;
  for (const auto& i : all)
    if (i.user == 2) own.push_back(i);
  const auto table = build_table(own, spec);
  const CommonPool pool(all);
  Rng rng(1, 2);
  const auto sample = pool.sample(table, 2u, rng);

  std::map<PatternCode, std::uint64_t> drawn, available;
  for (const auto& i : sample.instances) {
    CHECK(i.user != 2);
    ++drawn[i.pattern];
  }
  for (const auto& i : all)
    if (i.user != 2) ++available[i.pattern];
  std::map<PatternCode, Shortfall> shortfalls;
  for (const auto& s : sample.shortfalls) shortfalls[s.code] = s;
  for (PatternCode code : table.observed_codes()) {
    const std::uint64_t want = table.pattern_total(code) - 1;
    const std::uint64_t expect = std::min(want, available[code]);
    CHECK(drawn[code] == expect);
    CHECK((shortfalls.count(code) == 1) == (expect < want));
  }
  // No duplicates: every drawn instance is a distinct (user, anchor) pair.
  std::set<std::pair<std::uint32_t, std::int64_t>> seen;
  for (const auto& i : sample.instances) seen.insert({i.user, i.anchor_bin});
  CHECK(seen.size() == sample.instances.size());

  // Without exclusion the target's own instances are eligible.
  const auto open = matched_common_sample(table, all, 1);
  std::uint64_t total = 0;
  for (PatternCode code : table.observed_codes()) total += table.pattern_total(code) - 1;
  CHECK(open.instances.size() == total);
}

TEST_CASE("individual vs common: eligibility and thread independence") {
  const auto series = small_population(10, 5, 6000);
  const WindowSpec spec{2, 1, 4};
  const auto one = individual_vs_common(series, spec, 100, 3, 1);
  const auto four = individual_vs_common(series, spec, 100, 3, 4);
  REQUIRE(one.size() == 5);
  for (std::size_t k = 0; k < one.size(); ++k) {
    CHECK(one[k].individual == four[k].individual);
    CHECK(one[k].common == four[k].common);
    CHECK(one[k].user_id == series[k].user_id);
    for (int c = 0; c < 4; ++c)
      CHECK(*one[k].individual.channels[static_cast<std::size_t>(c)].informedness() >=
            *one[k].common.channels[static_cast<std::size_t>(c)].informedness() - 1e-12);
  }
  CHECK(individual_vs_common(series, spec, 1000000, 3).empty());
}

TEST_CASE("pearson and persistence") {
  const std::vector<double> x{1, 2, 3, 4};
  const std::vector<double> y{2, 4, 6, 8.5};
  CHECK(*pearson(x, x) == doctest::Approx(1.0));
  CHECK(*pearson(x, y) > 0.99);
  const std::vector<double> flat{1, 1, 1, 1};
  CHECK_FALSE(pearson(x, flat));

  auto report_with = [](double r11) {
    InformednessReport r(1);
    const auto tp = static_cast<std::uint64_t>(std::lround(r11 * 100));
    r.channels[0] = {tp, 10, 90, 100 - tp};
    return r;
  };
  std::vector<std::vector<InformednessReport>> per_user;
  for (double v : {0.2, 0.4, 0.5, 0.8}) per_user.push_back({report_with(v), report_with(v * 0.7)});
  const std::vector<int> leads{1, 4};
  const auto p = persistence(per_user, leads);
  CHECK(*p.correlation[0][0] == doctest::Approx(1.0));
  CHECK(*p.correlation[0][1] == doctest::Approx(1.0).epsilon(1e-3));
  per_user.resize(2);
  CHECK_FALSE(persistence(per_user, leads).correlation[0][1]);
}

TEST_CASE("CSV writers") {
  InformednessReport r(2);
  r.add(0b01, 0b01);
  r.add(0b00, 0b00);
  r.add(0b10, 0b10);
  r.add(0b00, 0b00);
  const std::vector<SweepRow> rows{{15, "nonparametric", r}};
  const ChannelLabels labels{"call", "text"};
  std::stringstream sweep, report;
  write_sweep_csv(sweep, rows, labels);
  CHECK(sweep.str() == "t_f,model,channel,I\n15,nonparametric,call,1\n15,nonparametric,text,1\n15,nonparametric,all,1\n");
  write_report_csv(report, rows, labels);
  CHECK(report.str().find("15,nonparametric,call,1,1,1,1,0,3,0\n") != std::string::npos);

  InformednessReport empty(2);
  std::stringstream blank;
  write_sweep_csv(blank, std::vector<SweepRow>{{30, "inertia", empty}}, labels);
  CHECK(blank.str().find("30,inertia,call,\n") != std::string::npos);
}
