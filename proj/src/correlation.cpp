#include "actpred/correlation.hpp"

#include <bit>
#include <ostream>

#include "actpred/csv.hpp"
#include "actpred/errors.hpp"
#include "actpred/parallel.hpp"

namespace actpred {

std::optional<double> ConditionalRate::value(std::size_t k) const {
  if (anchors[k] == 0) return std::nullopt;
  return static_cast<double>(hits[k]) / static_cast<double>(anchors[k]);
}

std::optional<double> ReferenceRate::value(std::size_t k) const {
  if (anchors[k] == 0) return std::nullopt;
  return rate_sum[k] / static_cast<double>(anchors[k]);
}

namespace {

std::vector<int> lag_grid(int max_lag) {
  if (max_lag < 0) throw UsageError("max lag must be >= 0");
  std::vector<int> lags;
  for (int d = -max_lag; d <= max_lag; ++d) lags.push_back(d);
  return lags;
}

void check_channels(std::span<const ActivitySeries> series, int source, int target) {
  for (const auto& s : series) {
    if (source < 0 || target < 0 || source >= s.channel_count() || target >= s.channel_count())
      throw UsageError("channel index out of range for user '" + s.user_id + "'");
  }
}

/// Calls fn(t) for every set bit t of `bits`.
template <typename Fn>
void for_each_set_bit(const BitVector& bits, Fn&& fn) {
  const auto words = bits.words();
  for (std::size_t w = 0; w < words.size(); ++w)
    for (std::uint64_t word = words[w]; word; word &= word - 1)
      fn(w * 64 + static_cast<std::size_t>(std::countr_zero(word)));
}

/// hist[k][slot]: anchors of `source` whose covered target t + lags[k]
/// falls on time-of-week `slot`.
std::vector<std::vector<std::uint64_t>> target_slot_histogram(std::span<const ActivitySeries> series,
                                                              int source, std::span<const int> lags,
                                                              const BinConfig& config) {
  const int week = config.week_length();
  std::vector<std::vector<std::uint64_t>> hist(lags.size(), std::vector<std::uint64_t>(week, 0));
  for (const auto& s : series) {
    const auto n = static_cast<std::int64_t>(s.length());
    const int base_slot = config.week_bin(s.start_bin);
    for_each_set_bit(s.bits[static_cast<std::size_t>(source)], [&](std::size_t t) {
      for (std::size_t k = 0; k < lags.size(); ++k) {
        const std::int64_t u = static_cast<std::int64_t>(t) + lags[k];
        if (u < 0 || u >= n || !s.coverage.test(static_cast<std::size_t>(u))) continue;
        ++hist[k][static_cast<std::size_t>((base_slot + u) % week)];
      }
    });
  }
  return hist;
}

ReferenceRate reference_from_histogram(const std::vector<std::vector<std::uint64_t>>& hist,
                                       std::span<const int> lags, const WeeklyProfile& profile,
                                       int target) {
  ReferenceRate q;
  q.lags.assign(lags.begin(), lags.end());
  q.rate_sum.assign(lags.size(), 0.0);
  q.anchors.assign(lags.size(), 0);
  q.excluded.assign(lags.size(), 0);
  for (std::size_t k = 0; k < lags.size(); ++k) {
    for (int w = 0; w < profile.week_length(); ++w) {
      const std::uint64_t count = hist[k][static_cast<std::size_t>(w)];
      if (count == 0) continue;
      if (!profile.defined(w)) {
        q.excluded[k] += count;
        continue;
      }
      q.anchors[k] += count;
      q.rate_sum[k] += static_cast<double>(count) * profile.rates(target, w);
    }
  }
  return q;
}

}  // namespace

ConditionalRate conditional_rate(std::span<const ActivitySeries> series, int source, int target,
                                 int max_lag_bins) {
  check_channels(series, source, target);
  ConditionalRate p;
  p.lags = lag_grid(max_lag_bins);
  p.anchors.assign(p.lags.size(), 0);
  p.hits.assign(p.lags.size(), 0);
  for (const auto& s : series) {
    const auto& xs = s.bits[static_cast<std::size_t>(source)];
    const auto& xt = s.bits[static_cast<std::size_t>(target)];
    for (std::size_t k = 0; k < p.lags.size(); ++k) {
      p.anchors[k] += count_shifted_and(xs, s.coverage, s.coverage, s.coverage, p.lags[k]);
      p.hits[k] += count_shifted_and(xs, xt, s.coverage, s.coverage, p.lags[k]);
    }
  }
  return p;
}

ReferenceRate reference_rate(std::span<const ActivitySeries> series, int source, int target,
                             int max_lag_bins, const WeeklyProfile& profile,
                             const BinConfig& config) {
  check_channels(series, source, target);
  if (profile.week_length() != config.week_length())
    throw UsageError("weekly profile length does not match the bin config");
  const auto lags = lag_grid(max_lag_bins);
  return reference_from_histogram(target_slot_histogram(series, source, lags, config), lags,
                                  profile, target);
}

ReferenceRate reference_rate(std::span<const ActivitySeries> series, int source, int target,
                             int max_lag_bins, const BinConfig& config) {
  return reference_rate(series, source, target, max_lag_bins, weekly_profile(series, config), config);
}

std::vector<std::optional<double>> alpha(const ConditionalRate& p, const ReferenceRate& q,
                                         const CorrelationOptions& options) {
  if (p.lags != q.lags) throw UsageError("alpha: P and Q lag grids differ");
  std::vector<std::optional<double>> out(p.lags.size());
  for (std::size_t k = 0; k < p.lags.size(); ++k) {
    const auto pv = p.value(k);
    const auto qv = q.value(k);
    if (!pv || !qv || p.anchors[k] < options.anchor_floor || *qv < options.reference_floor) continue;
    out[k] = *pv / *qv;
  }
  return out;
}

CorrelationProfile correlate(std::span<const ActivitySeries> series, const BinConfig& config,
                             const CorrelationOptions& options, int threads) {
  if (series.empty()) throw ValidationError("correlate: no series");
  CorrelationProfile profile;
  profile.channels = series.front().channels;
  profile.bin_width_min = config.bin_width_min;
  const WeeklyProfile weekly = weekly_profile(series, config);
  const int channels = static_cast<int>(profile.channels.size());
  const auto lags = lag_grid(options.max_lag_bins);

  std::vector<std::vector<std::vector<std::uint64_t>>> histograms(static_cast<std::size_t>(channels));
  parallel_for(static_cast<std::size_t>(channels), threads, [&](std::size_t i) {
    histograms[i] = target_slot_histogram(series, static_cast<int>(i), lags, config);
  });

  profile.pairs.resize(static_cast<std::size_t>(channels * channels));
  parallel_for(profile.pairs.size(), threads, [&](std::size_t index) {
    const int i = static_cast<int>(index) / channels;
    const int j = static_cast<int>(index) % channels;
    PairCorrelation& pair = profile.pairs[index];
    pair.source = i;
    pair.target = j;
    pair.p = conditional_rate(series, i, j, options.max_lag_bins);
    pair.q = reference_from_histogram(histograms[static_cast<std::size_t>(i)], lags, weekly, j);
    pair.alpha = alpha(pair.p, pair.q, options);
  });
  return profile;
}

void write_correlation_csv(std::ostream& out, const CorrelationProfile& profile) {
  out << "i,j,lag_minutes,P,Q,alpha,anchors\n";
  for (const auto& pair : profile.pairs) {
    for (std::size_t k = 0; k < pair.p.lags.size(); ++k) {
      out << profile.channels[static_cast<std::size_t>(pair.source)] << ','
          << profile.channels[static_cast<std::size_t>(pair.target)] << ','
          << pair.p.lags[k] * profile.bin_width_min << ',' << format_optional(pair.p.value(k)) << ','
          << format_optional(pair.q.value(k)) << ',' << format_optional(pair.alpha[k]) << ','
          << pair.p.anchors[k] << '\n';
    }
  }
}

}  // namespace actpred
