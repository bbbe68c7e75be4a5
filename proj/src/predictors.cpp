#include "actpred/predictors.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <algorithm>
#include <istream>
#include <limits>
#include <ostream>

#include <json.hpp>

#include "actpred/errors.hpp"
#include "actpred/parallel.hpp"
#include "actpred/rng.hpp"

namespace actpred {

BaseRates BaseRates::from_table(const PatternTable& table) {
  BaseRates base;
  base.total = table.total();
  for (int c = 0; c < table.spec().channel_count; ++c) base.active.push_back(table.future_active(c));
  return base;
}

double BaseRates::ratio(int channel) const {
  if (total == 0) return 0.0;
  return static_cast<double>(active[static_cast<std::size_t>(channel)]) / static_cast<double>(total);
}

Estimate lookup_probability(const PatternTable& table, PatternCode code, int channel) {
  Estimate e;
  e.support = table.pattern_total(code);
  if (e.support > 0)
    e.probability = static_cast<double>(table.pattern_future_active(code, channel)) /
                    static_cast<double>(e.support);
  return e;
}

std::uint8_t inertia_predict(const BinaryWindow& window, int channel) {
  if (window.rows() == 0 || channel < 0 || channel >= window.cols())
    throw UsageError("inertia_predict: channel outside window");
  return window(window.rows() - 1, channel) ? 1 : 0;
}

std::uint8_t inertia_predict(PatternCode code, const WindowSpec& spec, int channel) {
  return static_cast<std::uint8_t>((code >> pattern_bit(spec, spec.history_bins - 1, channel)) & 1u);
}

Eigen::VectorXd pattern_features(PatternCode code, const WindowSpec& spec) {
  const int bits = spec.pattern_bits();
  Eigen::VectorXd x(bits + 1);
  for (int k = 0; k < bits; ++k) x(k) = static_cast<double>((code >> k) & 1u);
  x(bits) = 1.0;
  return x;
}

double LinearModel::probability(PatternCode code, int channel) const {
  const Eigen::VectorXd x = pattern_features(code, spec);
  return sigmoid(weights.row(channel).dot(x));
}

void LinearModel::validate() const {
  if (weights.rows() != spec.channel_count || weights.cols() != spec.pattern_bits() + 1)
    throw ValidationError("linear model weight matrix has the wrong shape");
  if (!weights.allFinite()) throw ValidationError("linear model has non-finite weights");
}

double logit_predict(const LinearModel& model, const BinaryWindow& window, int channel) {
  model.validate();
  return model.probability(encode_pattern(window, model.spec), channel);
}

// --- LogisticProblem ------------------------------------------------------------

LogisticProblem::LogisticProblem(const PatternTable& table, int channel) {
  const auto& spec = table.spec();
  const auto codes = table.observed_codes();
  const auto rows = static_cast<Eigen::Index>(codes.size());
  design_.resize(rows, spec.pattern_bits() + 1);
  counts_.resize(rows);
  positives_.resize(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const PatternCode code = codes[static_cast<std::size_t>(r)];
    design_.row(r) = pattern_features(code, spec).transpose();
    counts_(r) = static_cast<double>(table.pattern_total(code));
    positives_(r) = static_cast<double>(table.pattern_future_active(code, channel));
  }
  samples_ = table.total();
  positives_total_ = table.future_active(channel);
}

double LogisticProblem::loss(const Eigen::VectorXd& w) const {
  if (samples_ == 0) return 0.0;
  const Eigen::VectorXd z = design_ * w;
  double sum = 0.0;
  for (Eigen::Index r = 0; r < z.size(); ++r) sum += counts_(r) * softplus(z(r)) - positives_(r) * z(r);
  return sum / static_cast<double>(samples_);
}

Eigen::VectorXd LogisticProblem::gradient(const Eigen::VectorXd& w) const {
  if (samples_ == 0) return Eigen::VectorXd::Zero(w.size());
  const Eigen::VectorXd z = design_ * w;
  Eigen::VectorXd residual(z.size());
  for (Eigen::Index r = 0; r < z.size(); ++r) residual(r) = counts_(r) * sigmoid(z(r)) - positives_(r);
  return design_.transpose() * residual / static_cast<double>(samples_);
}

Eigen::MatrixXd LogisticProblem::hessian(const Eigen::VectorXd& w) const {
  if (samples_ == 0) return Eigen::MatrixXd::Zero(w.size(), w.size());
  const Eigen::VectorXd z = design_ * w;
  Eigen::VectorXd weight(z.size());
  for (Eigen::Index r = 0; r < z.size(); ++r) {
    const double p = sigmoid(z(r));
    weight(r) = counts_(r) * p * (1.0 - p);
  }
  return design_.transpose() * weight.asDiagonal() * design_ / static_cast<double>(samples_);
}

namespace {

double penalized_norm(const Eigen::VectorXd& w) {
  return w.head(w.size() - 1).lpNorm<1>();
}

double soft_threshold(double value, double threshold) {
  if (value > threshold) return value - threshold;
  if (value < -threshold) return value + threshold;
  return 0.0;
}

}  // namespace

double LogisticProblem::objective(const Eigen::VectorXd& w, double lambda) const {
  return loss(w) + lambda * penalized_norm(w);
}

double LogisticProblem::optimality_residual(const Eigen::VectorXd& w, double lambda) const {
  const Eigen::VectorXd g = gradient(w);
  const Eigen::Index last = w.size() - 1;
  double worst = std::abs(g(last));
  for (Eigen::Index k = 0; k < last; ++k) {
    const double r = w(k) != 0.0 ? std::abs(g(k) + lambda * (w(k) > 0 ? 1.0 : -1.0))
                                 : std::max(std::abs(g(k)) - lambda, 0.0);
    worst = std::max(worst, r);
  }
  return worst;
}

// --- training -------------------------------------------------------------------

namespace {

constexpr double kDegenerateLogit = 30.0;

/// Minimizes g.d + d'Hd/2 + lambda*|w + d| over d by cyclic coordinate descent.
Eigen::VectorXd newton_direction(const Eigen::VectorXd& w, const Eigen::VectorXd& g,
                                 const Eigen::MatrixXd& H, double lambda) {
  const Eigen::Index n = w.size();
  const Eigen::Index intercept = n - 1;
  Eigen::VectorXd d = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd Hd = Eigen::VectorXd::Zero(n);
  for (int sweep = 0; sweep < 500; ++sweep) {
    double largest = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      const double a = H(k, k);
      if (a <= 1e-14) {
        if (k != intercept && lambda > 0.0 && w(k) + d(k) != 0.0) {
          const double delta = -(w(k) + d(k));
          d(k) += delta;
          Hd += delta * H.col(k);
          largest = std::max(largest, std::abs(delta));
        }
        continue;
      }
      const double u = w(k) + d(k);
      const double step = u - (g(k) + Hd(k)) / a;
      const double z = k == intercept ? step : soft_threshold(step, lambda / a);
      const double delta = z - u;
      if (delta != 0.0) {
        d(k) += delta;
        Hd += delta * H.col(k);
        largest = std::max(largest, std::abs(delta));
      }
    }
    if (largest < 1e-12) break;
  }
  return d;
}

}  // namespace

ChannelFit fit_channel(const LogisticProblem& problem, const FitOptions& options, Eigen::VectorXd& w) {
  ChannelFit fit;
  const Eigen::Index intercept = w.size() - 1;
  if (problem.sample_count() == 0 || problem.positive_count() == 0 ||
      problem.positive_count() == problem.sample_count()) {
    fit.degenerate = true;
    w.setZero();
    if (problem.sample_count() > 0)
      w(intercept) = problem.positive_count() == 0 ? -kDegenerateLogit : kDegenerateLogit;
    fit.objective_trace.push_back(problem.objective(w, options.lambda));
    fit.residual = problem.optimality_residual(w, options.lambda);
    fit.converged = false;
    return fit;
  }

  double value = problem.objective(w, options.lambda);
  fit.objective_trace.push_back(value);
  for (fit.iterations = 0; fit.iterations < options.max_iterations; ++fit.iterations) {
    fit.residual = problem.optimality_residual(w, options.lambda);
    if (fit.residual < options.tolerance) {
      fit.converged = true;
      break;
    }
    const Eigen::VectorXd g = problem.gradient(w);
    Eigen::MatrixXd H = problem.hessian(w);
    H.diagonal().array() += 1e-10;
    const Eigen::VectorXd d = newton_direction(w, g, H, options.lambda);
    const double decrease =
        g.dot(d) + options.lambda * (penalized_norm(w + d) - penalized_norm(w));
    if (!(decrease < 0.0)) break;  // no descent direction left at this precision

    double t = 1.0;
    Eigen::VectorXd candidate = w + d;
    double candidate_value = problem.objective(candidate, options.lambda);
    while (candidate_value > value + 1e-4 * t * decrease && t > 1e-12) {
      t *= 0.5;
      candidate = w + t * d;
      candidate_value = problem.objective(candidate, options.lambda);
    }
    if (candidate_value > value) break;
    w = candidate;
    value = candidate_value;
    fit.objective_trace.push_back(value);
  }
  if (!fit.converged) {
    fit.residual = problem.optimality_residual(w, options.lambda);
    fit.converged = fit.residual < options.tolerance;
  }
  return fit;
}

InstanceSplit split_instances(std::span<const Instance> instances, double fraction,
                              std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw UsageError("split fraction must lie in [0, 1]");
  const std::size_t n = instances.size();
  std::size_t want = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  InstanceSplit split;
  split.first.reserve(want);
  split.second.reserve(n - want);
  // Selection sampling: each subset of size `want` is equally likely.
  Rng rng(seed, 0x73706c6974ULL);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t remaining = n - i;
    if (rng.below(remaining) < want) {
      split.first.push_back(instances[i]);
      --want;
    } else {
      split.second.push_back(instances[i]);
    }
  }
  return split;
}

LinearModel fit_logit(const PatternTable& train, double lambda, const TrainOptions& options) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw UsageError("lambda must be finite and >= 0");
  LinearModel model;
  model.spec = train.spec();
  model.reg_weight = lambda;
  model.seed = options.seed;
  model.train_fraction = options.train_fraction;
  model.train_base = BaseRates::from_table(train);
  const int channels = model.spec.channel_count;
  model.weights = Eigen::MatrixXd::Zero(channels, model.spec.pattern_bits() + 1);
  model.fits.resize(static_cast<std::size_t>(channels));
  parallel_for(static_cast<std::size_t>(channels), options.threads, [&](std::size_t c) {
    const LogisticProblem problem(train, static_cast<int>(c));
    Eigen::VectorXd w = Eigen::VectorXd::Zero(problem.dimension());
    const double rate = model.train_base.ratio(static_cast<int>(c));
    if (rate > 0.0 && rate < 1.0) w(w.size() - 1) = logit(rate);
    model.fits[c] = fit_channel(problem, {lambda, options.max_iterations, options.tolerance}, w);
    model.weights.row(static_cast<Eigen::Index>(c)) = w.transpose();
  });
  return model;
}

std::vector<double> lambda_validation_losses(const PatternTable& fit, const PatternTable& validation,
                                             const TrainOptions& options) {
  std::vector<double> losses;
  for (double lambda : kLambdaGrid) {
    const LinearModel model = fit_logit(fit, lambda, options);
    double total = 0.0;
    for (int c = 0; c < fit.spec().channel_count; ++c) {
      const LogisticProblem problem(validation, c);
      total += problem.loss(model.weights.row(c).transpose());
    }
    losses.push_back(total);
  }
  return losses;
}

LinearModel logit_train(std::span<const Instance> instances, const WindowSpec& spec,
                        const TrainOptions& options) {
  const InstanceSplit split = split_instances(instances, options.train_fraction, options.seed);
  const PatternTable train = build_table(split.first, spec);
  double lambda = 0.0;
  if (options.lambda) {
    lambda = *options.lambda;
  } else {
    const InstanceSplit inner =
        split_instances(split.first, 1.0 - options.validation_fraction, options.seed + 1);
    const auto losses = lambda_validation_losses(build_table(inner.first, spec),
                                                 build_table(inner.second, spec), options);
    const auto best = std::min_element(losses.begin(), losses.end()) - losses.begin();
    lambda = kLambdaGrid[static_cast<std::size_t>(best)];
  }
  return fit_logit(train, lambda, options);
}

Eigen::VectorXd standard_errors(const PatternTable& train, const LinearModel& model, int channel) {
  const LogisticProblem problem(train, channel);
  const Eigen::VectorXd w = model.weights.row(channel).transpose();
  const Eigen::MatrixXd information = problem.hessian(w) * static_cast<double>(problem.sample_count());
  const Eigen::MatrixXd covariance = information.ldlt().solve(
      Eigen::MatrixXd::Identity(information.rows(), information.cols()));
  return covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
}

// --- serialization --------------------------------------------------------------

void write_model_json(std::ostream& out, const LinearModel& model) {
  nlohmann::ordered_json doc;
  doc["version"] = 1;
  doc["spec"] = {{"history_bins", model.spec.history_bins},
                 {"lead_bins", model.spec.lead_bins},
                 {"channel_count", model.spec.channel_count},
                 {"layout", kPatternLayoutVersion}};
  doc["lead"] = model.spec.lead_bins;
  doc["lambda"] = model.reg_weight;
  auto weights = nlohmann::ordered_json::array();
  auto converged = nlohmann::ordered_json::array();
  auto degenerate = nlohmann::ordered_json::array();
  for (Eigen::Index c = 0; c < model.weights.rows(); ++c) {
    std::vector<double> row;
    for (Eigen::Index k = 0; k < model.weights.cols(); ++k) row.push_back(model.weights(c, k));
    weights.push_back(row);
    const auto& fit = model.fits.at(static_cast<std::size_t>(c));
    converged.push_back(fit.converged);
    degenerate.push_back(fit.degenerate);
  }
  doc["weights_per_channel"] = weights;
  doc["converged"] = converged;
  doc["degenerate"] = degenerate;
  doc["seed"] = model.seed;
  doc["train_fraction"] = model.train_fraction;
  doc["train_base"] = {{"total", model.train_base.total}, {"active", model.train_base.active}};
  out << doc.dump(2) << '\n';
}

LinearModel read_model_json(std::istream& in) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
    if (doc.at("version").get<int>() != 1) throw ValidationError("unsupported model version");
    LinearModel model;
    const auto& spec = doc.at("spec");
    model.spec = {spec.at("history_bins").get<int>(), spec.at("lead_bins").get<int>(),
                  spec.at("channel_count").get<int>()};
    model.spec.validate();
    model.reg_weight = doc.at("lambda").get<double>();
    model.seed = doc.at("seed").get<std::uint64_t>();
    model.train_fraction = doc.value("train_fraction", 1.0);
    const auto rows = doc.at("weights_per_channel");
    model.weights.resize(model.spec.channel_count, model.spec.pattern_bits() + 1);
    if (static_cast<int>(rows.size()) != model.spec.channel_count)
      throw ValidationError("model has wrong number of weight rows");
    for (std::size_t c = 0; c < rows.size(); ++c) {
      const auto row = rows[c].get<std::vector<double>>();
      if (static_cast<Eigen::Index>(row.size()) != model.weights.cols())
        throw ValidationError("model weight row " + std::to_string(c) + " has wrong length");
      for (std::size_t k = 0; k < row.size(); ++k)
        model.weights(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(k)) = row[k];
      ChannelFit fit;
      fit.converged = doc.at("converged").at(c).get<bool>();
      if (doc.contains("degenerate")) fit.degenerate = doc["degenerate"].at(c).get<bool>();
      model.fits.push_back(fit);
    }
    if (doc.contains("train_base")) {
      model.train_base.total = doc["train_base"].at("total").get<std::uint64_t>();
      model.train_base.active = doc["train_base"].at("active").get<std::vector<std::uint64_t>>();
    }
    model.validate();
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed model JSON: ") + e.what());
  }
}

}  // namespace actpred
