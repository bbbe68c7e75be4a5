#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "actpred/timeline.hpp"

namespace actpred {

struct CorrelationOptions {
  int max_lag_bins = 96;  // lags span [-max, +max]
  /// Ratios are reported only with at least this many anchors ...
  std::uint64_t anchor_floor = 100;
  /// ... and a reference rate at least this large.
  double reference_floor = 1e-4;
};

/// P_ij(lag): activity of `target` at t + lag given activity of `source` at
/// t, pooled over users. Index k corresponds to lags[k].
struct ConditionalRate {
  std::vector<int> lags;
  std::vector<std::uint64_t> anchors;  // source active at t, t + lag covered
  std::vector<std::uint64_t> hits;     // ... and target active at t + lag
  std::optional<double> value(std::size_t k) const;
};

/// Q_ij(lag): time-of-week baseline rate of `target`, averaged over the
/// target times of the same anchors used by P.
struct ReferenceRate {
  std::vector<int> lags;
  std::vector<double> rate_sum;
  std::vector<std::uint64_t> anchors;   // anchors with a defined profile slot
  std::vector<std::uint64_t> excluded;  // anchors landing on undefined slots
  std::optional<double> value(std::size_t k) const;
};

ConditionalRate conditional_rate(std::span<const ActivitySeries> series, int source, int target,
                                 int max_lag_bins);

ReferenceRate reference_rate(std::span<const ActivitySeries> series, int source, int target,
                             int max_lag_bins, const WeeklyProfile& profile,
                             const BinConfig& config);
/// Builds the weekly profile from `series` first.
ReferenceRate reference_rate(std::span<const ActivitySeries> series, int source, int target,
                             int max_lag_bins, const BinConfig& config);

/// P / Q per lag; empty below the anchor or reference floors.
std::vector<std::optional<double>> alpha(const ConditionalRate& p, const ReferenceRate& q,
                                         const CorrelationOptions& options = {});

struct PairCorrelation {
  int source = 0;
  int target = 0;
  ConditionalRate p;
  ReferenceRate q;
  std::vector<std::optional<double>> alpha;
};

struct CorrelationProfile {
  std::vector<std::string> channels;
  int bin_width_min = 15;
  std::vector<PairCorrelation> pairs;  // source-major over all (i, j)
};

CorrelationProfile correlate(std::span<const ActivitySeries> series, const BinConfig& config,
                             const CorrelationOptions& options = {}, int threads = 1);

/// i,j,lag_minutes,P,Q,alpha,anchors
void write_correlation_csv(std::ostream& out, const CorrelationProfile& profile);

}  // namespace actpred
