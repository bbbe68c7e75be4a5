#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "actpred/timeline.hpp"

namespace actpred {

using PatternCode = std::uint64_t;
/// Per-channel future state, bit c = channel c.
using ChannelMask = std::uint16_t;
inline constexpr int kMaxChannels = 16;
inline constexpr int kMaxPatternBits = 48;
/// Tables at or below this many pattern bits use dense storage.
inline constexpr int kDenseTableBits = 20;
/// Version of the code layout written into serialized tables.
inline constexpr int kPatternLayoutVersion = 1;

struct WindowSpec {
  int history_bins = 3;  // h
  int lead_bins = 1;     // f
  int channel_count = 4; // C

  int pattern_bits() const { return history_bins * channel_count; }
  /// Throws UsageError unless h, f, C >= 1, C <= 16 and h*C <= 48.
  void validate() const;
  friend bool operator==(const WindowSpec&, const WindowSpec&) = default;
};

/// h x C window, row 0 = oldest bin, last row = most recent bin.
using BinaryWindow = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Bit (c*h + r) of the code holds window(r, c): channel-major, oldest bin
/// least significant.
inline int pattern_bit(const WindowSpec& spec, int row, int channel) {
  return channel * spec.history_bins + row;
}

PatternCode encode_pattern(const BinaryWindow& window, const WindowSpec& spec);
BinaryWindow decode_pattern(PatternCode code, const WindowSpec& spec);

/// One predictive pattern with its observed future.
struct Instance {
  PatternCode pattern = 0;
  std::int64_t anchor_bin = 0;  // absolute index of the most recent history bin
  std::uint32_t user = 0;       // index into the series set
  ChannelMask future = 0;

  bool future_active(int channel) const { return (future >> channel) & 1u; }
  friend bool operator==(const Instance&, const Instance&) = default;
};

/// All anchors whose h history bins and future bin are covered, stride 1.
std::vector<Instance> extract_instances(const ActivitySeries& series, const WindowSpec& spec,
                                        std::uint32_t user_index = 0);
/// Concatenation over users in order; user field = position in `series`.
std::vector<Instance> extract_all(std::span<const ActivitySeries> series, const WindowSpec& spec,
                                  int threads = 1);

/// Exact counts of instances per pattern code and future channel.
class PatternTable {
 public:
  explicit PatternTable(const WindowSpec& spec);

  const WindowSpec& spec() const { return spec_; }
  bool dense() const { return dense_; }

  void add(PatternCode code, ChannelMask future, std::uint64_t weight = 1);
  void add(const Instance& instance) { add(instance.pattern, instance.future); }
  /// Adds `total` instances of `code`, `active[c]` of them with channel c
  /// active. Used when loading serialized marginals.
  void add_counts(PatternCode code, std::uint64_t total, std::span<const std::uint64_t> active);
  /// Adds another table's counts. Specs must match.
  void merge(const PatternTable& other);

  std::uint64_t total() const { return total_; }
  std::uint64_t future_active(int channel) const { return active_[static_cast<std::size_t>(channel)]; }
  std::uint64_t pattern_total(PatternCode code) const;
  std::uint64_t pattern_future_active(PatternCode code, int channel) const;

  /// Codes with nonzero count, ascending.
  std::vector<PatternCode> observed_codes() const;

  /// Throws std::logic_error if a count invariant is broken.
  void check_invariants() const;

  friend bool operator==(const PatternTable& a, const PatternTable& b);

 private:
  std::size_t stride() const { return static_cast<std::size_t>(spec_.channel_count) + 1; }
  void check_code(PatternCode code) const;

  WindowSpec spec_;
  bool dense_;
  std::uint64_t total_ = 0;
  std::vector<std::uint64_t> active_;
  // Row per code: [total, active_0, ..., active_{C-1}].
  std::vector<std::uint64_t> dense_counts_;
  std::unordered_map<PatternCode, std::vector<std::uint64_t>> sparse_counts_;
};

PatternTable build_table(std::span<const Instance> instances, const WindowSpec& spec);

/// CSV with a `#layout=...` preamble, then code,total,n_<channel>... rows.
void write_table_csv(std::ostream& out, const PatternTable& table,
                     std::span<const std::string> channel_labels, int bin_width_min = 15);
struct LoadedTable {
  PatternTable table;
  std::vector<std::string> channel_labels;
  int bin_width_min = 15;
};
LoadedTable read_table_csv(std::istream& in);

/// Short column names used in table CSVs (movement -> move, proximity -> prox).
std::string short_channel_name(const std::string& label);

}  // namespace actpred
