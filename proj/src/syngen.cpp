#include "actpred/syngen.hpp"

#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>

#include <json.hpp>

#include "actpred/errors.hpp"
#include "actpred/parallel.hpp"
#include "actpred/predictors.hpp"
#include "actpred/rng.hpp"

namespace actpred {

int GeneratorConfig::max_lag() const {
  int lag = static_cast<int>(kernels.size());
  for (const auto& term : interactions) lag = std::max(lag, term.lag);
  return lag;
}

void GeneratorConfig::validate() const {
  const int c = channel_count();
  if (c < 1 || c > kMaxChannels) throw ValidationError("generator needs 1..16 channels");
  BinConfig{bin_width_min, 0}.validate();
  if (base_logits.size() != c) throw ValidationError("base_logits length must equal channel count");
  if (!base_logits.allFinite()) throw ValidationError("base_logits must be finite");
  if (circadian.size() != 0 && (circadian.rows() != c || circadian.cols() != week_length()))
    throw ValidationError("circadian must be channels x " + std::to_string(week_length()));
  if (!circadian.allFinite()) throw ValidationError("circadian terms must be finite");
  if (kernels.empty()) throw ValidationError("kernel depth must be >= 1");
  for (std::size_t k = 0; k < kernels.size(); ++k) {
    if (kernels[k].rows() != c || kernels[k].cols() != c)
      throw ValidationError("kernel at lag " + std::to_string(k + 1) + " must be channels x channels");
    if (!kernels[k].allFinite()) throw ValidationError("kernel weights must be finite");
  }
  for (const auto& term : interactions) {
    const bool ok = term.target >= 0 && term.target < c && term.source_a >= 0 &&
                    term.source_a < c && term.source_b >= 0 && term.source_b < c &&
                    term.lag >= 1 && std::isfinite(term.weight);
    if (!ok) throw ValidationError("invalid interaction term");
  }
  if (horizon < 0 || users < 0) throw ValidationError("horizon and users must be >= 0");
  if (!(heterogeneity >= 0.0) || !std::isfinite(heterogeneity))
    throw ValidationError("heterogeneity must be finite and >= 0");
}

GeneratorConfig make_generator_config(std::span<const double> base_rates, int max_lag) {
  GeneratorConfig config;
  const auto c = static_cast<int>(base_rates.size());
  if (c != static_cast<int>(kChannelLabels.size())) {
    config.labels.clear();
    for (int i = 0; i < c; ++i) config.labels.push_back("ch" + std::to_string(i));
  }
  config.base_logits.resize(c);
  for (int i = 0; i < c; ++i) config.base_logits(i) = logit(base_rates[static_cast<std::size_t>(i)]);
  config.kernels.assign(static_cast<std::size_t>(std::max(max_lag, 1)), Eigen::MatrixXd::Zero(c, c));
  return config;
}

Eigen::MatrixXd daily_sinusoid(std::span<const double> amplitude, std::span<const double> peak_hour,
                               int bin_width_min) {
  if (amplitude.size() != peak_hour.size())
    throw ValidationError("daily sinusoid: amplitude and peak_hour lengths differ");
  const int week = kMinutesPerWeek / bin_width_min;
  Eigen::MatrixXd c(static_cast<Eigen::Index>(amplitude.size()), week);
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    for (int w = 0; w < week; ++w) {
      // Bin midpoint in hours of the day.
      const double hour = std::fmod((w + 0.5) * bin_width_min / 60.0, 24.0);
      c(i, w) = amplitude[static_cast<std::size_t>(i)] *
                std::cos(2.0 * std::numbers::pi * (hour - peak_hour[static_cast<std::size_t>(i)]) / 24.0);
    }
  }
  return c;
}

namespace {

Rng user_rng(const GeneratorConfig& config, int user) {
  return Rng(config.seed, static_cast<std::uint64_t>(user) + 1);
}

std::string user_name(int user) {
  std::string digits = std::to_string(user);
  if (digits.size() < 4) digits.insert(0, 4 - digits.size(), '0');
  return "user" + digits;
}

/// Logit of the law given a history accessor past(tau, channel) in {0,1}.
template <typename Past>
double law_logit(const GeneratorConfig& config, const Eigen::VectorXd& base, int week_bin, int channel,
                 Past&& past) {
  double z = base(channel);
  if (config.circadian.size() != 0) z += config.circadian(channel, week_bin);
  for (std::size_t k = 0; k < config.kernels.size(); ++k) {
    const auto& kernel = config.kernels[k];
    for (Eigen::Index j = 0; j < kernel.cols(); ++j)
      if (kernel(channel, j) != 0.0 && past(static_cast<int>(k) + 1, static_cast<int>(j)))
        z += kernel(channel, j);
  }
  for (const auto& term : config.interactions)
    if (term.target == channel && past(term.lag, term.source_a) && past(term.lag, term.source_b))
      z += term.weight;
  return z;
}

}  // namespace

Eigen::VectorXd user_base_logits(const GeneratorConfig& config, int user) {
  Eigen::VectorXd base = config.base_logits;
  if (config.heterogeneity > 0.0) {
    Rng rng(config.seed ^ 0x6865746572ULL, static_cast<std::uint64_t>(user) + 1);
    for (Eigen::Index i = 0; i < base.size(); ++i) base(i) += config.heterogeneity * rng.normal();
  }
  return base;
}

ActivitySeries generate_user(const GeneratorConfig& config, int user) {
  config.validate();
  const int channels = config.channel_count();
  const int depth = config.max_lag();
  const std::int64_t burn = config.burn_in < 0 ? depth : config.burn_in;
  const BinConfig bins{config.bin_width_min, 0};
  const Eigen::VectorXd base = user_base_logits(config, user);
  Rng rng = user_rng(config, user);

  auto series = ActivitySeries::blank(user_name(user), config.start_bin,
                                      static_cast<std::size_t>(config.horizon), config.labels, true,
                                      config.bin_width_min);
  // ring[(t % depth)] holds the state of bin t; zero before the first bin.
  std::vector<ChannelMask> ring(static_cast<std::size_t>(depth), 0);
  std::int64_t t = 0;
  auto past = [&](int tau, int channel) -> bool {
    if (tau > t) return false;
    const auto slot = static_cast<std::size_t>((t - tau) % depth);
    return (ring[slot] >> channel) & 1u;
  };
  for (; t < burn + config.horizon; ++t) {
    const std::int64_t absolute = config.start_bin - burn + t;
    const int week_bin = bins.week_bin(absolute);
    ChannelMask state = 0;
    for (int c = 0; c < channels; ++c) {
      const double p = sigmoid(law_logit(config, base, week_bin, c, past));
      if (rng.uniform() < p) state |= static_cast<ChannelMask>(1u << c);
    }
    ring[static_cast<std::size_t>(t % depth)] = state;
    if (t >= burn) {
      const auto offset = static_cast<std::size_t>(t - burn);
      for (int c = 0; c < channels; ++c)
        if ((state >> c) & 1u) series.bits[static_cast<std::size_t>(c)].set(offset);
    }
  }
  return series;
}

std::vector<ActivitySeries> generate(const GeneratorConfig& config, int threads) {
  config.validate();
  std::vector<ActivitySeries> out(static_cast<std::size_t>(config.users));
  parallel_for(out.size(), threads, [&](std::size_t u) { out[u] = generate_user(config, static_cast<int>(u)); });
  return out;
}

double oracle_probability(const GeneratorConfig& config, const BinaryWindow& window, int week_bin,
                          int channel) {
  config.validate();
  const auto h = static_cast<int>(window.rows());
  if (h < config.max_lag())
    throw UsageError("oracle needs a window of at least " + std::to_string(config.max_lag()) +
                     " bins, got " + std::to_string(h));
  if (window.cols() != config.channel_count()) throw UsageError("oracle window has wrong channel count");
  if (channel < 0 || channel >= config.channel_count()) throw UsageError("oracle channel out of range");
  if (week_bin < 0 || week_bin >= config.week_length()) throw UsageError("oracle week bin out of range");
  auto past = [&](int tau, int c) { return window(h - tau, c) != 0; };
  return sigmoid(law_logit(config, config.base_logits, week_bin, channel, past));
}

double oracle_probability(const GeneratorConfig& config, PatternCode code, const WindowSpec& spec,
                          int week_bin, int channel) {
  return oracle_probability(config, decode_pattern(code, spec), week_bin, channel);
}

Eigen::VectorXd empirical_rates(std::span<const ActivitySeries> series) {
  if (series.empty()) return {};
  Eigen::VectorXd active = Eigen::VectorXd::Zero(series.front().channel_count());
  double covered = 0.0;
  for (const auto& s : series) {
    covered += static_cast<double>(s.coverage.count());
    for (int c = 0; c < s.channel_count(); ++c) active(c) += static_cast<double>(s.active_bins(c));
  }
  return covered > 0.0 ? Eigen::VectorXd(active / covered) : active;
}

GeneratorConfig calibrate_base_logits(GeneratorConfig config, std::span<const double> targets,
                                      std::int64_t bins, int rounds) {
  if (static_cast<int>(targets.size()) != config.channel_count())
    throw UsageError("calibration needs one target rate per channel");
  for (double r : targets)
    if (!(r > 0.0 && r < 1.0)) throw UsageError("calibration targets must lie in (0, 1)");
  GeneratorConfig probe = config;
  probe.horizon = bins;
  probe.users = 1;
  probe.heterogeneity = 0.0;
  for (int round = 0; round < rounds; ++round) {
    const std::vector<ActivitySeries> one{generate_user(probe, 0)};
    const Eigen::VectorXd observed = empirical_rates(one);
    for (int c = 0; c < probe.channel_count(); ++c) {
      const double seen = std::clamp(observed(c), 1e-6, 1.0 - 1e-6);
      probe.base_logits(c) += logit(targets[static_cast<std::size_t>(c)]) - logit(seen);
    }
  }
  config.base_logits = probe.base_logits;
  return config;
}

// --- JSON ---------------------------------------------------------------------------

namespace {

Eigen::MatrixXd matrix_from_rows(const nlohmann::json& rows, const char* what) {
  if (!rows.is_array() || rows.empty()) throw ValidationError(std::string(what) + " must be a non-empty array of arrays");
  const auto r = static_cast<Eigen::Index>(rows.size());
  const auto c = static_cast<Eigen::Index>(rows[0].size());
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    const auto row = rows[static_cast<std::size_t>(i)].get<std::vector<double>>();
    if (static_cast<Eigen::Index>(row.size()) != c) throw ValidationError(std::string(what) + " rows differ in length");
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = row[static_cast<std::size_t>(j)];
  }
  return m;
}

}  // namespace

GeneratorConfig read_generator_config(std::istream& in) {
  try {
    const auto doc = nlohmann::json::parse(in);
    GeneratorConfig config;
    if (doc.contains("labels")) config.labels = doc["labels"].get<std::vector<std::string>>();
    const int c = config.channel_count();
    config.bin_width_min = doc.value("bin_width_min", 15);
    BinConfig{config.bin_width_min, 0}.validate();

    if (doc.contains("base_rates")) {
      const auto rates = doc["base_rates"].get<std::vector<double>>();
      config.base_logits.resize(static_cast<Eigen::Index>(rates.size()));
      for (std::size_t i = 0; i < rates.size(); ++i) {
        if (!(rates[i] > 0.0 && rates[i] < 1.0)) throw ValidationError("base_rates must lie in (0, 1)");
        config.base_logits(static_cast<Eigen::Index>(i)) = logit(rates[i]);
      }
    } else {
      const auto logits = doc.at("base_logits").get<std::vector<double>>();
      config.base_logits = Eigen::Map<const Eigen::VectorXd>(logits.data(), static_cast<Eigen::Index>(logits.size()));
    }

    if (doc.contains("circadian")) {
      config.circadian = matrix_from_rows(doc["circadian"], "circadian");
    } else if (doc.contains("circadian_daily")) {
      const auto& daily = doc["circadian_daily"];
      const auto amplitude = daily.at("amplitude").get<std::vector<double>>();
      std::vector<double> peak;
      if (daily.at("peak_hour").is_array())
        peak = daily["peak_hour"].get<std::vector<double>>();
      else
        peak.assign(amplitude.size(), daily["peak_hour"].get<double>());
      config.circadian = daily_sinusoid(amplitude, peak, config.bin_width_min);
    }

    // kernels[target][source] = [K(1), ..., K(tau_max)]
    const auto& kernels = doc.at("kernels");
    if (!kernels.is_array() || static_cast<int>(kernels.size()) != c)
      throw ValidationError("kernels must be channels x channels x depth");
    std::size_t depth = 0;
    for (const auto& row : kernels)
      for (const auto& cell : row) depth = std::max(depth, cell.size());
    config.kernels.assign(std::max<std::size_t>(depth, 1), Eigen::MatrixXd::Zero(c, c));
    for (int i = 0; i < c; ++i) {
      if (static_cast<int>(kernels[static_cast<std::size_t>(i)].size()) != c)
        throw ValidationError("kernels must be channels x channels x depth");
      for (int j = 0; j < c; ++j) {
        const auto taus = kernels[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].get<std::vector<double>>();
        for (std::size_t k = 0; k < taus.size(); ++k) config.kernels[k](i, j) = taus[k];
      }
    }
    if (doc.contains("interactions")) {
      for (const auto& term : doc["interactions"])
        config.interactions.push_back({term.at("target").get<int>(), term.at("source_a").get<int>(),
                                       term.at("source_b").get<int>(), term.value("lag", 1),
                                       term.at("weight").get<double>()});
    }
    config.horizon = doc.at("horizon").get<std::int64_t>();
    config.users = doc.value("users", 1);
    config.heterogeneity = doc.value("heterogeneity", 0.0);
    config.seed = doc.value("seed", std::uint64_t{0});
    config.start_bin = doc.value("start_bin", std::int64_t{0});
    config.burn_in = doc.value("burn_in", -1);
    config.validate();
    return config;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed generator config: ") + e.what());
  }
}

void write_generator_config(std::ostream& out, const GeneratorConfig& config) {
  nlohmann::ordered_json doc;
  const int c = config.channel_count();
  doc["labels"] = config.labels;
  doc["bin_width_min"] = config.bin_width_min;
  doc["base_logits"] = std::vector<double>(config.base_logits.data(), config.base_logits.data() + c);
  if (config.circadian.size() != 0) {
    auto rows = nlohmann::ordered_json::array();
    for (Eigen::Index i = 0; i < config.circadian.rows(); ++i) {
      std::vector<double> row;
      for (Eigen::Index w = 0; w < config.circadian.cols(); ++w) row.push_back(config.circadian(i, w));
      rows.push_back(row);
    }
    doc["circadian"] = rows;
  }
  auto kernels = nlohmann::ordered_json::array();
  for (int i = 0; i < c; ++i) {
    auto row = nlohmann::ordered_json::array();
    for (int j = 0; j < c; ++j) {
      std::vector<double> taus;
      for (const auto& k : config.kernels) taus.push_back(k(i, j));
      row.push_back(taus);
    }
    kernels.push_back(row);
  }
  doc["kernels"] = kernels;
  if (!config.interactions.empty()) {
    auto terms = nlohmann::ordered_json::array();
    for (const auto& t : config.interactions)
      terms.push_back({{"target", t.target}, {"source_a", t.source_a}, {"source_b", t.source_b},
                       {"lag", t.lag}, {"weight", t.weight}});
    doc["interactions"] = terms;
  }
  doc["horizon"] = config.horizon;
  doc["users"] = config.users;
  doc["heterogeneity"] = config.heterogeneity;
  doc["seed"] = config.seed;
  doc["start_bin"] = config.start_bin;
  doc["burn_in"] = config.burn_in;
  out << doc.dump(2) << '\n';
}

}  // namespace actpred
