#pragma once

#include <Eigen/Core>
#include <array>
#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "actpred/patterns.hpp"

namespace actpred {

/// Unconditional future-activity counts n_i and N of a table.
struct BaseRates {
  std::uint64_t total = 0;
  std::vector<std::uint64_t> active;

  static BaseRates from_table(const PatternTable& table);
  /// n_i / N; 0 for an empty table.
  double ratio(int channel) const;
};

/// Empirical probability of future activity for one pattern.
struct Estimate {
  std::optional<double> probability;  // empty when the pattern is unseen
  std::uint64_t support = 0;
};

Estimate lookup_probability(const PatternTable& table, PatternCode code, int channel);

/// Informedness-optimal decision: 1 iff p > n_i/N. No estimate gives 0.
inline std::uint8_t decide(std::optional<double> probability, const BaseRates& base, int channel) {
  return probability && *probability > base.ratio(channel) ? 1 : 0;
}

/// Most recent history bin of the channel.
std::uint8_t inertia_predict(const BinaryWindow& window, int channel);
std::uint8_t inertia_predict(PatternCode code, const WindowSpec& spec, int channel);

template <typename Scalar>
Scalar sigmoid(Scalar z) {
  using std::exp;
  if (z >= Scalar(0)) return Scalar(1) / (Scalar(1) + exp(-z));
  const Scalar e = exp(z);
  return e / (Scalar(1) + e);
}

/// log(1 + exp(z)) without overflow.
template <typename Scalar>
Scalar softplus(Scalar z) {
  using std::abs, std::exp, std::log1p, std::max;
  return max(z, Scalar(0)) + log1p(exp(-abs(z)));
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

struct ChannelFit {
  bool converged = false;
  /// Training data held a single class; the channel is a constant predictor.
  bool degenerate = false;
  int iterations = 0;
  double residual = 0.0;
  std::vector<double> objective_trace;
};

/// Per-channel logistic weights over the flattened window; column layout
/// follows the pattern bit layout, intercept in the last column.
struct LinearModel {
  WindowSpec spec;
  Eigen::MatrixXd weights;  // channels x (h*C + 1)
  double reg_weight = 0.0;
  std::uint64_t seed = 0;
  double train_fraction = 1.0;
  BaseRates train_base;
  std::vector<ChannelFit> fits;

  double probability(PatternCode code, int channel) const;
  /// Throws ValidationError on a shape mismatch or non-finite weight.
  void validate() const;
};

/// Pattern bits as {0,1} features followed by a constant 1.
Eigen::VectorXd pattern_features(PatternCode code, const WindowSpec& spec);

double logit_predict(const LinearModel& model, const BinaryWindow& window, int channel);

/// Mean negative log-likelihood of one channel, aggregated over distinct
/// patterns of a table (identical to summing over instances).
class LogisticProblem {
 public:
  LogisticProblem(const PatternTable& table, int channel);

  Eigen::Index dimension() const { return design_.cols(); }
  std::uint64_t sample_count() const { return samples_; }
  std::uint64_t positive_count() const { return positives_total_; }

  double loss(const Eigen::VectorXd& w) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& w) const;
  Eigen::MatrixXd hessian(const Eigen::VectorXd& w) const;
  /// loss + lambda * |w| over all but the intercept.
  double objective(const Eigen::VectorXd& w, double lambda) const;
  /// Max-norm of the minimum-norm subgradient of the objective.
  double optimality_residual(const Eigen::VectorXd& w, double lambda) const;

 private:
  Eigen::MatrixXd design_;   // distinct patterns x (features + 1)
  Eigen::VectorXd counts_;   // instances per pattern
  Eigen::VectorXd positives_;
  std::uint64_t samples_ = 0;
  std::uint64_t positives_total_ = 0;
};

struct FitOptions {
  double lambda = 0.0;
  int max_iterations = 200;
  double tolerance = 1e-6;
};

/// Proximal Newton with coordinate-descent inner solves; `w` is the warm
/// start and receives the solution.
ChannelFit fit_channel(const LogisticProblem& problem, const FitOptions& options, Eigen::VectorXd& w);

struct TrainOptions {
  /// Regularization weight; chosen by validation grid search when empty.
  std::optional<double> lambda;
  double train_fraction = 0.75;
  double validation_fraction = 0.2;
  std::uint64_t seed = 0;
  int max_iterations = 200;
  double tolerance = 1e-6;
  int threads = 1;
};

inline constexpr std::array<double, 6> kLambdaGrid{1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0};

struct InstanceSplit {
  std::vector<Instance> first;   // selected fraction, original order
  std::vector<Instance> second;  // remainder
};

/// Uniform random split with exactly round(fraction * n) instances in `first`.
InstanceSplit split_instances(std::span<const Instance> instances, double fraction,
                              std::uint64_t seed);

/// Fits every channel on a precomputed training table.
LinearModel fit_logit(const PatternTable& train, double lambda, const TrainOptions& options);

/// Validation-set mean negative log-likelihood per grid point.
std::vector<double> lambda_validation_losses(const PatternTable& fit, const PatternTable& validation,
                                             const TrainOptions& options);

/// Splits off train_fraction, optionally grid-searches lambda, and fits.
LinearModel logit_train(std::span<const Instance> instances, const WindowSpec& spec,
                        const TrainOptions& options);

/// Asymptotic standard errors sqrt(diag((N * Hessian)^-1)) at the fitted
/// weights; meaningful for unpenalized fits.
Eigen::VectorXd standard_errors(const PatternTable& train, const LinearModel& model, int channel);

void write_model_json(std::ostream& out, const LinearModel& model);
LinearModel read_model_json(std::istream& in);

}  // namespace actpred
