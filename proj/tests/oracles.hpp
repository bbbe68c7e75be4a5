// Test-only reference computations. These deliberately avoid the library's
// fast paths (bit packing, rolling codes, table-level shortcuts) so they can
// check them.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <vector>

#include "actpred/timeline.hpp"

namespace oracle {

struct Row {
  std::uint64_t code;
  std::int64_t anchor;
  std::vector<int> future;
};

/// Instances by direct window inspection: every bin of the window and the
/// future bin is checked for coverage individually.
inline std::vector<Row> extract(const actpred::ActivitySeries& s, int h, int f) {
  std::vector<Row> rows;
  const int n = static_cast<int>(s.length());
  const int channels = s.channel_count();
  for (int anchor = h - 1; anchor + f < n; ++anchor) {
    bool ok = s.coverage.test(static_cast<std::size_t>(anchor + f));
    for (int k = anchor - h + 1; k <= anchor; ++k) ok = ok && s.coverage.test(static_cast<std::size_t>(k));
    if (!ok) continue;
    Row row{0, s.start_bin + anchor, {}};
    for (int c = 0; c < channels; ++c) {
      for (int r = 0; r < h; ++r) {
        if (s.bits[static_cast<std::size_t>(c)].test(static_cast<std::size_t>(anchor - h + 1 + r)))
          row.code += std::uint64_t{1} << (c * h + r);
      }
      row.future.push_back(s.bits[static_cast<std::size_t>(c)].test(static_cast<std::size_t>(anchor + f)));
    }
    rows.push_back(row);
  }
  return rows;
}

/// Informedness of explicit prediction/truth vectors; NaN when a class is absent.
inline double informedness(const std::vector<int>& predicted, const std::vector<int>& truth) {
  double tp = 0, fn = 0, tn = 0, fp = 0;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    if (truth[k]) (predicted[k] ? tp : fn) += 1;
    else (predicted[k] ? fp : tn) += 1;
  }
  if (tp + fn == 0 || tn + fp == 0) return std::numeric_limits<double>::quiet_NaN();
  return tp / (tp + fn) + tn / (tn + fp) - 1.0;
}

/// Maximum in-sample informedness over every deterministic map from the
/// distinct patterns to {0,1}, by enumeration.
inline double best_map_informedness(const std::vector<std::uint64_t>& patterns,
                                    const std::vector<int>& truth) {
  const auto positives = std::count(truth.begin(), truth.end(), 1);
  if (positives == 0 || positives == static_cast<std::ptrdiff_t>(truth.size()))
    return std::numeric_limits<double>::quiet_NaN();
  std::vector<std::uint64_t> distinct(patterns.begin(), patterns.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  double best = -std::numeric_limits<double>::infinity();
  for (std::uint64_t map = 0; map < (std::uint64_t{1} << distinct.size()); ++map) {
    std::vector<int> predicted(patterns.size());
    for (std::size_t k = 0; k < patterns.size(); ++k) {
      const auto idx = std::lower_bound(distinct.begin(), distinct.end(), patterns[k]) - distinct.begin();
      predicted[k] = static_cast<int>((map >> idx) & 1u);
    }
    best = std::max(best, informedness(predicted, truth));
  }
  return best;
}

/// P_ij(lag) by scanning every bin.
inline std::pair<std::uint64_t, std::uint64_t> conditional_counts(
    const std::vector<actpred::ActivitySeries>& series, int i, int j, int lag) {
  std::uint64_t anchors = 0, hits = 0;
  for (const auto& s : series) {
    const auto n = static_cast<std::int64_t>(s.length());
    for (std::int64_t t = 0; t < n; ++t) {
      const std::int64_t u = t + lag;
      if (u < 0 || u >= n) continue;
      if (!s.coverage.test(static_cast<std::size_t>(t)) || !s.coverage.test(static_cast<std::size_t>(u))) continue;
      if (!s.bits[static_cast<std::size_t>(i)].test(static_cast<std::size_t>(t))) continue;
      ++anchors;
      if (s.bits[static_cast<std::size_t>(j)].test(static_cast<std::size_t>(u))) ++hits;
    }
  }
  return {anchors, hits};
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Stationary activity rate of a two-state chain with P(1|0) = a, P(1|1) = b.
inline double two_state_stationary(double a, double b) { return a / (1.0 - b + a); }

}  // namespace oracle
