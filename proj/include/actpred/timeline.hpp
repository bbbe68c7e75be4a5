#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "actpred/bits.hpp"

namespace actpred {

/// Canonical channel order. Every series and every output uses this order.
inline constexpr std::array<std::string_view, 4> kChannelLabels{"call", "text", "movement",
                                                                "proximity"};
inline constexpr int kMinutesPerWeek = 7 * 24 * 60;

/// Index of a known channel label, or -1.
int channel_index(std::string_view label);
std::vector<std::string> default_channel_labels();

struct BinConfig {
  int bin_width_min = 15;
  /// Added to UTC minutes before binning; no DST handling.
  int timezone_offset_min = 0;

  int week_length() const { return kMinutesPerWeek / bin_width_min; }
  /// Time-of-week slot of an absolute bin index. Slot 0 starts at the
  /// epoch's weekday (Thursday 00:00 local).
  int week_bin(std::int64_t absolute_bin) const;
  void validate() const;
};

/// Binary multichannel activity of one user over a contiguous bin range.
struct ActivitySeries {
  std::string user_id;
  std::int64_t start_bin = 0;
  int bin_width_min = 15;
  std::vector<std::string> channels;
  std::vector<BitVector> bits;  // one per channel
  BitVector coverage;

  std::size_t length() const { return coverage.size(); }
  int channel_count() const { return static_cast<int>(channels.size()); }
  std::size_t active_bins(int channel) const { return bits[static_cast<std::size_t>(channel)].count(); }

  /// Empty series with `channels` all zero and coverage as given.
  static ActivitySeries blank(std::string user_id, std::int64_t start_bin, std::size_t length,
                              std::vector<std::string> channels, bool covered = true,
                              int bin_width_min = 15);

  /// Throws ValidationError on unequal lengths or activity outside coverage.
  void validate() const;
  friend bool operator==(const ActivitySeries&, const ActivitySeries&) = default;
};

struct Event {
  std::string user_id;
  std::string channel;
  double timestamp_s = 0.0;
};

struct CoverageInterval {
  std::string user_id;
  double start_s = 0.0;  // half-open [start_s, end_s)
  double end_s = 0.0;
};

struct BinningResult {
  std::vector<ActivitySeries> series;  // sorted by user_id
  std::size_t dropped_events = 0;      // events landing in uncovered bins
};

/// Bins events into half-open bins. One series per user with coverage; the
/// series spans the user's first to last covered bin.
BinningResult bin_events(std::span<const Event> events,
                         std::span<const CoverageInterval> coverage, const BinConfig& config);

struct FilterResult {
  std::vector<ActivitySeries> kept;
  /// active_counts[k][c]: active bins of kept[k] in channel c.
  std::vector<std::vector<std::size_t>> active_counts;
};

/// Keeps users with at least `min_active` active bins in every channel.
FilterResult filter_users(std::span<const ActivitySeries> series, std::size_t min_active);

/// Mean activity per time-of-week slot, pooled over users and weeks.
struct WeeklyProfile {
  std::vector<std::string> channels;
  Eigen::ArrayXXd rates;                            // channels x week_length; NaN where undefined
  Eigen::Array<std::int64_t, Eigen::Dynamic, 1> support;  // covered bins per slot

  int week_length() const { return static_cast<int>(support.size()); }
  bool defined(int week_bin) const { return support(week_bin) > 0; }
};

WeeklyProfile weekly_profile(std::span<const ActivitySeries> series, const BinConfig& config);

// --- file formats -----------------------------------------------------------

/// Timeline JSON: user_id -> {start_bin, bin_width_min, channels{label: [0/1]}, coverage}.
std::vector<ActivitySeries> read_series_json(std::istream& in);
void write_series_json(std::ostream& out, std::span<const ActivitySeries> series);

/// Event CSV rows: user_id,channel,unix_timestamp_seconds (header optional).
std::vector<Event> read_events_csv(std::istream& in);
/// Coverage CSV rows: user_id,start_ts,end_ts (header optional).
std::vector<CoverageInterval> read_coverage_csv(std::istream& in);

/// week_bin,channel,rate,support (rate empty when undefined).
void write_profile_csv(std::ostream& out, const WeeklyProfile& profile);

}  // namespace actpred
