#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "actpred/patterns.hpp"
#include "actpred/predictors.hpp"
#include "actpred/rng.hpp"

namespace actpred {

/// Confusion counts of one channel (or of all channels pooled).
struct ChannelReport {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;

  void add(bool predicted, bool truth, std::uint64_t weight = 1);
  ChannelReport& operator+=(const ChannelReport& other);

  /// TP / (TP + FN); empty when no active futures.
  std::optional<double> r11() const;
  /// TN / (TN + FP); empty when no inactive futures.
  std::optional<double> r00() const;
  /// R11 + R00 - 1; empty when either class is absent.
  std::optional<double> informedness() const;

  friend bool operator==(const ChannelReport&, const ChannelReport&) = default;
};

struct InformednessReport {
  std::vector<ChannelReport> channels;

  explicit InformednessReport(int channel_count = 0)
      : channels(static_cast<std::size_t>(channel_count)) {}
  int channel_count() const { return static_cast<int>(channels.size()); }
  /// Pooled counts over channels.
  ChannelReport micro() const;
  void add(ChannelMask predicted, ChannelMask truth, std::uint64_t weight = 1);
  InformednessReport& operator+=(const InformednessReport& other);

  friend bool operator==(const InformednessReport&, const InformednessReport&) = default;
};

/// Exact confusion counts of predicted vs true channel masks.
InformednessReport informedness(std::span<const ChannelMask> predictions,
                                std::span<const ChannelMask> truths, int channel_count);

/// Scores any per-instance predictor returning a ChannelMask.
template <typename Predict>
InformednessReport evaluate_instances(std::span<const Instance> instances, int channel_count,
                                      Predict&& predict) {
  InformednessReport report(channel_count);
  for (const auto& inst : instances) report.add(predict(inst), inst.future);
  return report;
}

/// Decision-rule predictions of a count table, cached per pattern code.
class NonparametricPredictor {
 public:
  explicit NonparametricPredictor(const PatternTable& table);
  ChannelMask predict(PatternCode code) const;
  ChannelMask operator()(const Instance& inst) const { return predict(inst.pattern); }

 private:
  bool dense_;
  std::vector<ChannelMask> dense_masks_;
  std::unordered_map<PatternCode, ChannelMask> sparse_masks_;
};

/// Decision rule over logistic probabilities; thresholds come from the
/// model's training base rates.
class LogitPredictor {
 public:
  explicit LogitPredictor(const LinearModel& model);
  ChannelMask predict(PatternCode code) const;
  ChannelMask operator()(const Instance& inst) const { return predict(inst.pattern); }

 private:
  const LinearModel* model_;
  std::vector<double> thresholds_;
};

ChannelMask inertia_mask(PatternCode code, const WindowSpec& spec);

/// Decision rule applied to every instance of the table, scored in-sample.
InformednessReport in_sample_upper_bound(const PatternTable& table);
InformednessReport evaluate_nonparametric(const PatternTable& trained, std::span<const Instance> test);
InformednessReport evaluate_inertia(std::span<const Instance> instances, const WindowSpec& spec);
InformednessReport evaluate_logit(const LinearModel& model, std::span<const Instance> instances);

// --- convergence ------------------------------------------------------------------

struct ConvergencePoint {
  std::size_t sample_size = 0;
  InformednessReport report;
  std::uint64_t seed = 0;
};

enum class EvaluationMode { in_sample, split };

struct ConvergenceOptions {
  EvaluationMode mode = EvaluationMode::in_sample;
  /// Split mode: fraction of each subsample used to build the table.
  double train_fraction = 0.75;
};

/// For each size, a uniform subsample without replacement, scored with the
/// nonparametric decision rule.
std::vector<ConvergencePoint> convergence_curve(std::span<const Instance> instances,
                                                const WindowSpec& spec,
                                                std::span<const std::size_t> sizes,
                                                std::uint64_t seed,
                                                const ConvergenceOptions& options = {});

// --- individual vs common -----------------------------------------------------------

struct Shortfall {
  PatternCode code = 0;
  std::uint64_t wanted = 0;
  std::uint64_t available = 0;
};

struct MatchedSample {
  std::vector<Instance> instances;
  std::vector<Shortfall> shortfalls;
};

/// Instances grouped by pattern code (then by user) for repeated matched
/// sampling.
class CommonPool {
 public:
  explicit CommonPool(std::span<const Instance> pool);

  /// For each pattern with count c in `individual`, draws min(c - 1, available)
  /// pool instances of that pattern uniformly without replacement. Instances
  /// of `exclude_user` are never drawn.
  MatchedSample sample(const PatternTable& individual, std::optional<std::uint32_t> exclude_user,
                       Rng& rng) const;

 private:
  std::vector<Instance> sorted_;
  std::vector<PatternCode> codes_;
  std::vector<std::size_t> offsets_;  // group g spans [offsets_[g], offsets_[g + 1])
};

MatchedSample matched_common_sample(const PatternTable& individual,
                                    std::span<const Instance> common, std::uint64_t seed);

struct UserComparison {
  std::string user_id;
  std::size_t instance_count = 0;
  InformednessReport individual;
  InformednessReport common;
  std::size_t shortfall_patterns = 0;
  std::uint64_t shortfall_instances = 0;
};

/// Per eligible user: in-sample bound on the user's own instances vs the
/// decision rule trained on a matched sample of everyone else's instances.
std::vector<UserComparison> individual_vs_common(std::span<const ActivitySeries> series,
                                                 const WindowSpec& spec,
                                                 std::size_t min_instances, std::uint64_t seed,
                                                 int threads = 1);

// --- persistence --------------------------------------------------------------------

/// Pearson correlation; empty when either side has zero variance or n < 2.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

struct PersistenceReport {
  std::vector<int> leads;
  /// correlation[channel][k]: across users, I at leads[0] vs I at leads[k].
  std::vector<std::vector<std::optional<double>>> correlation;
  std::vector<std::vector<std::size_t>> users_used;
};

/// per_user[u][k] is user u's report at leads[k]. Users with undefined I at
/// either horizon are skipped; fewer than 3 usable users gives undefined.
PersistenceReport persistence(const std::vector<std::vector<InformednessReport>>& per_user,
                              std::span<const int> leads);

// --- CSV -----------------------------------------------------------------------------

/// Channel label for index c, or "all" for the pooled row (c == -1).
using ChannelLabels = std::vector<std::string>;

struct SweepRow {
  int lead_minutes = 0;
  std::string model;
  InformednessReport report;
};

void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows, const ChannelLabels& labels);
void write_report_csv(std::ostream& out, std::span<const SweepRow> rows, const ChannelLabels& labels);
void write_convergence_csv(std::ostream& out, std::span<const ConvergencePoint> points,
                           const ChannelLabels& labels);

struct ScatterBlock {
  int lead_minutes = 0;
  std::vector<UserComparison> users;
};
void write_scatter_csv(std::ostream& out, std::span<const ScatterBlock> blocks,
                       const ChannelLabels& labels);
void write_persistence_csv(std::ostream& out, const PersistenceReport& report, int bin_width_min,
                           const ChannelLabels& labels);

}  // namespace actpred
