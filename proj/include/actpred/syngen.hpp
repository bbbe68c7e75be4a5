#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "actpred/patterns.hpp"
#include "actpred/timeline.hpp"

namespace actpred {

/// Extra logit term weight * x_a(t - lag) * x_b(t - lag) on channel
/// `target`; takes the generator outside the logit model class.
struct Interaction {
  int target = 0;
  int source_a = 0;
  int source_b = 0;
  int lag = 1;
  double weight = 0.0;
};

/// Discrete-time binary process with
///   P(x_i(t) = 1 | past) = sigmoid(b_i + c_i(w(t)) + sum_j sum_tau K_ij(tau) x_j(t - tau)).
struct GeneratorConfig {
  std::vector<std::string> labels = default_channel_labels();
  Eigen::VectorXd base_logits;     // b_i
  Eigen::MatrixXd circadian;       // c_i(w): channels x week_length, or empty for none
  std::vector<Eigen::MatrixXd> kernels;  // kernels[tau - 1](target, source)
  std::vector<Interaction> interactions;
  std::int64_t horizon = 0;        // emitted bins per user
  int users = 1;
  double heterogeneity = 0.0;      // sd of per-user offsets to b_i
  std::uint64_t seed = 0;
  std::int64_t start_bin = 0;
  int bin_width_min = 15;
  int burn_in = -1;                // discarded warm-up bins; -1 means max_lag()

  int channel_count() const { return static_cast<int>(labels.size()); }
  int max_lag() const;
  int week_length() const { return kMinutesPerWeek / bin_width_min; }
  void validate() const;
};

/// Zero kernels of depth `max_lag`, flat circadian term, `channels` labels.
GeneratorConfig make_generator_config(std::span<const double> base_rates, int max_lag);

/// c_i(w) = amplitude_i * cos(2 pi (hour_of_day(w) - peak_hour_i) / 24).
Eigen::MatrixXd daily_sinusoid(std::span<const double> amplitude, std::span<const double> peak_hour,
                               int bin_width_min);

/// b_i plus the user's heterogeneity offsets.
Eigen::VectorXd user_base_logits(const GeneratorConfig& config, int user);

ActivitySeries generate_user(const GeneratorConfig& config, int user);
/// Users in index order; identical output for any thread count.
std::vector<ActivitySeries> generate(const GeneratorConfig& config, int threads = 1);

/// Exact next-bin probability of `channel` given the h x C history window
/// (last row = previous bin) and the target's time-of-week slot. Uses the
/// nominal b_i. Rejects windows shorter than the kernel depth.
double oracle_probability(const GeneratorConfig& config, const BinaryWindow& window, int week_bin,
                          int channel);
double oracle_probability(const GeneratorConfig& config, PatternCode code, const WindowSpec& spec,
                          int week_bin, int channel);

/// Adjusts b_i so that simulated activity rates hit `targets`. Each round
/// simulates `bins` bins (one user, fixed seed) and shifts b_i by
/// logit(target) - logit(observed).
GeneratorConfig calibrate_base_logits(GeneratorConfig config, std::span<const double> targets,
                                      std::int64_t bins, int rounds = 12);

/// Fraction of active bins per channel, pooled over series.
Eigen::VectorXd empirical_rates(std::span<const ActivitySeries> series);

GeneratorConfig read_generator_config(std::istream& in);
void write_generator_config(std::ostream& out, const GeneratorConfig& config);

}  // namespace actpred
