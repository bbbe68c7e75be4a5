#include "actpred/timeline.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "actpred/csv.hpp"
#include "actpred/errors.hpp"

namespace actpred {

int channel_index(std::string_view label) {
  for (std::size_t i = 0; i < kChannelLabels.size(); ++i)
    if (kChannelLabels[i] == label) return static_cast<int>(i);
  return -1;
}

std::vector<std::string> default_channel_labels() {
  return {kChannelLabels.begin(), kChannelLabels.end()};
}

int BinConfig::week_bin(std::int64_t absolute_bin) const {
  const std::int64_t w = week_length();
  return static_cast<int>(((absolute_bin % w) + w) % w);
}

void BinConfig::validate() const {
  if (bin_width_min <= 0 || 60 % bin_width_min != 0)
    throw ValidationError("bin width must divide 60 minutes, got " + std::to_string(bin_width_min));
}

ActivitySeries ActivitySeries::blank(std::string user_id, std::int64_t start_bin,
                                     std::size_t length, std::vector<std::string> channels,
                                     bool covered, int bin_width_min) {
  ActivitySeries s;
  s.user_id = std::move(user_id);
  s.start_bin = start_bin;
  s.bin_width_min = bin_width_min;
  s.bits.assign(channels.size(), BitVector(length));
  s.channels = std::move(channels);
  s.coverage = BitVector(length, covered);
  return s;
}

void ActivitySeries::validate() const {
  if (channels.empty()) throw ValidationError("user '" + user_id + "': no channels");
  if (bits.size() != channels.size())
    throw ValidationError("user '" + user_id + "': channel count mismatch");
  for (std::size_t c = 0; c < bits.size(); ++c) {
    if (bits[c].size() != coverage.size())
      throw ValidationError("user '" + user_id + "': channel '" + channels[c] +
                            "' length differs from coverage");
    const auto active = bits[c].words();
    const auto cov = coverage.words();
    for (std::size_t w = 0; w < active.size(); ++w) {
      if (active[w] & ~cov[w]) {
        const auto stray = active[w] & ~cov[w];
        const std::size_t bin = w * 64 + static_cast<std::size_t>(std::countr_zero(stray));
        throw ValidationError("user '" + user_id + "': channel '" + channels[c] +
                              "' active at uncovered bin offset " + std::to_string(bin));
      }
    }
  }
}

namespace {

std::int64_t floor_div(double value, double width) {
  return static_cast<std::int64_t>(std::floor(value / width));
}

}  // namespace

BinningResult bin_events(std::span<const Event> events,
                         std::span<const CoverageInterval> coverage, const BinConfig& config) {
  config.validate();
  const double width_s = config.bin_width_min * 60.0;
  const double shift_s = config.timezone_offset_min * 60.0;

  for (const auto& e : events) {
    if (channel_index(e.channel) < 0)
      throw ValidationError("unknown channel label '" + e.channel + "' in event record: " +
                            e.user_id + "," + e.channel + "," + format_double(e.timestamp_s));
    if (!std::isfinite(e.timestamp_s))
      throw ValidationError("non-finite timestamp in event record for user '" + e.user_id + "'");
  }

  // Covered bin ranges per user, [first, last] inclusive.
  std::map<std::string, std::vector<std::pair<std::int64_t, std::int64_t>>> ranges;
  for (const auto& iv : coverage) {
    if (!std::isfinite(iv.start_s) || !std::isfinite(iv.end_s) || iv.end_s < iv.start_s)
      throw ValidationError("invalid coverage interval for user '" + iv.user_id + "': [" +
                            format_double(iv.start_s) + ", " + format_double(iv.end_s) + ")");
    if (iv.end_s == iv.start_s) continue;
    const std::int64_t first = floor_div(iv.start_s + shift_s, width_s);
    const std::int64_t last =
        static_cast<std::int64_t>(std::ceil((iv.end_s + shift_s) / width_s)) - 1;
    ranges[iv.user_id].emplace_back(first, last);
  }

  BinningResult result;
  std::map<std::string, std::size_t> slot;
  for (const auto& [user, spans] : ranges) {
    std::int64_t lo = std::numeric_limits<std::int64_t>::max();
    std::int64_t hi = std::numeric_limits<std::int64_t>::min();
    for (auto [a, b] : spans) {
      lo = std::min(lo, a);
      hi = std::max(hi, b);
    }
    auto s = ActivitySeries::blank(user, lo, static_cast<std::size_t>(hi - lo + 1),
                                   default_channel_labels(), false, config.bin_width_min);
    for (auto [a, b] : spans)
      for (std::int64_t t = a; t <= b; ++t) s.coverage.set(static_cast<std::size_t>(t - lo));
    slot[user] = result.series.size();
    result.series.push_back(std::move(s));
  }

  for (const auto& e : events) {
    auto it = slot.find(e.user_id);
    if (it == slot.end()) {
      ++result.dropped_events;
      continue;
    }
    auto& s = result.series[it->second];
    const std::int64_t offset = floor_div(e.timestamp_s + shift_s, width_s) - s.start_bin;
    if (offset < 0 || offset >= static_cast<std::int64_t>(s.length()) ||
        !s.coverage.test(static_cast<std::size_t>(offset))) {
      ++result.dropped_events;
      continue;
    }
    s.bits[static_cast<std::size_t>(channel_index(e.channel))].set(static_cast<std::size_t>(offset));
  }
  return result;
}

FilterResult filter_users(std::span<const ActivitySeries> series, std::size_t min_active) {
  FilterResult out;
  for (const auto& s : series) {
    std::vector<std::size_t> counts(static_cast<std::size_t>(s.channel_count()));
    bool keep = true;
    for (int c = 0; c < s.channel_count(); ++c) {
      counts[static_cast<std::size_t>(c)] = s.active_bins(c);
      keep = keep && counts[static_cast<std::size_t>(c)] >= min_active;
    }
    if (keep) {
      out.kept.push_back(s);
      out.active_counts.push_back(std::move(counts));
    }
  }
  return out;
}

WeeklyProfile weekly_profile(std::span<const ActivitySeries> series, const BinConfig& config) {
  config.validate();
  const int week = config.week_length();
  if (series.empty()) throw ValidationError("weekly profile needs at least one series");
  const int channels = series.front().channel_count();

  WeeklyProfile profile;
  profile.channels = series.front().channels;
  profile.support = Eigen::Array<std::int64_t, Eigen::Dynamic, 1>::Zero(week);
  Eigen::Array<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> active =
      Eigen::Array<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(channels, week);

  for (const auto& s : series) {
    if (s.channels != profile.channels)
      throw ValidationError("user '" + s.user_id + "': channel order differs from population");
    if (s.bin_width_min != config.bin_width_min)
      throw ValidationError("user '" + s.user_id + "': bin width differs from profile config");
    for (std::size_t t = 0; t < s.length(); ++t) {
      if (!s.coverage.test(t)) continue;
      const int w = config.week_bin(s.start_bin + static_cast<std::int64_t>(t));
      ++profile.support(w);
      for (int c = 0; c < channels; ++c)
        if (s.bits[static_cast<std::size_t>(c)].test(t)) ++active(c, w);
    }
  }
  if (profile.support.sum() == 0) throw ValidationError("weekly profile: no covered bins");

  profile.rates.resize(channels, week);
  for (int w = 0; w < week; ++w) {
    for (int c = 0; c < channels; ++c) {
      profile.rates(c, w) = profile.support(w) > 0
                                ? static_cast<double>(active(c, w)) / static_cast<double>(profile.support(w))
                                : std::numeric_limits<double>::quiet_NaN();
    }
  }
  return profile;
}

// --- file formats -----------------------------------------------------------

namespace {

BitVector bits_from_json(const nlohmann::ordered_json& array, const std::string& what) {
  if (!array.is_array()) throw ValidationError(what + ": expected an array of 0/1");
  BitVector out(array.size());
  for (std::size_t t = 0; t < array.size(); ++t) {
    const auto& v = array[t];
    if (!v.is_number_integer() || (v.get<int>() != 0 && v.get<int>() != 1))
      throw ValidationError(what + ": value at index " + std::to_string(t) + " is not 0 or 1");
    if (v.get<int>() == 1) out.set(t);
  }
  return out;
}

nlohmann::ordered_json bits_to_json(const BitVector& bits) {
  std::vector<int> values(bits.size());
  for (std::size_t t = 0; t < bits.size(); ++t) values[t] = bits.test(t) ? 1 : 0;
  return values;
}

}  // namespace

std::vector<ActivitySeries> read_series_json(std::istream& in) {
  nlohmann::ordered_json doc;
  try {
    doc = nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed series JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ValidationError("series JSON must be an object keyed by user id");

  std::vector<ActivitySeries> out;
  for (const auto& [user, body] : doc.items()) {
    const std::string where = "user '" + user + "'";
    if (!body.is_object() || !body.contains("channels") || !body.contains("coverage"))
      throw ValidationError(where + ": missing 'channels' or 'coverage'");
    ActivitySeries s;
    s.user_id = user;
    s.start_bin = body.value("start_bin", std::int64_t{0});
    s.bin_width_min = body.value("bin_width_min", 15);
    BinConfig{s.bin_width_min, 0}.validate();
    s.coverage = bits_from_json(body["coverage"], where + " coverage");

    const auto& channels = body["channels"];
    if (!channels.is_object() || channels.empty())
      throw ValidationError(where + ": 'channels' must be a non-empty object");
    std::vector<std::string> labels;
    for (const auto& [label, _] : channels.items()) labels.push_back(label);
    const bool all_known = std::all_of(labels.begin(), labels.end(),
                                       [](const std::string& l) { return channel_index(l) >= 0; });
    if (all_known) {
      if (labels.size() != kChannelLabels.size())
        throw ValidationError(where + ": expected all of call, text, movement, proximity");
      labels = default_channel_labels();
    }
    for (const auto& label : labels) {
      s.channels.push_back(label);
      s.bits.push_back(bits_from_json(channels[label], where + " channel '" + label + "'"));
    }
    s.validate();
    if (!out.empty() && out.front().channels != s.channels)
      throw ValidationError(where + ": channel labels differ from the first user");
    out.push_back(std::move(s));
  }
  return out;
}

void write_series_json(std::ostream& out, std::span<const ActivitySeries> series) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::object();
  for (const auto& s : series) {
    nlohmann::ordered_json body;
    body["start_bin"] = s.start_bin;
    body["bin_width_min"] = s.bin_width_min;
    nlohmann::ordered_json channels = nlohmann::ordered_json::object();
    for (std::size_t c = 0; c < s.channels.size(); ++c) channels[s.channels[c]] = bits_to_json(s.bits[c]);
    body["channels"] = std::move(channels);
    body["coverage"] = bits_to_json(s.coverage);
    doc[s.user_id] = std::move(body);
  }
  out << doc.dump() << '\n';
}

namespace {

template <typename Row>
std::vector<Row> read_rows(std::istream& in, std::string_view header_first,
                           Row (*parse)(const std::vector<std::string>&, const std::string&)) {
  std::vector<Row> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (line_no == 1 && fields.front() == header_first) continue;
    if (fields.size() != 3)
      throw ValidationError("line " + std::to_string(line_no) + ": expected 3 fields: " + line);
    rows.push_back(parse(fields, "line " + std::to_string(line_no) + ": " + line));
  }
  return rows;
}

Event parse_event(const std::vector<std::string>& f, const std::string& record) {
  if (channel_index(f[1]) < 0)
    throw ValidationError("unknown channel label '" + f[1] + "' at " + record);
  return Event{f[0], f[1], parse_double(f[2], record)};
}

CoverageInterval parse_coverage(const std::vector<std::string>& f, const std::string& record) {
  CoverageInterval iv{f[0], parse_double(f[1], record), parse_double(f[2], record)};
  if (iv.end_s < iv.start_s) throw ValidationError("coverage end precedes start at " + record);
  return iv;
}

}  // namespace

std::vector<Event> read_events_csv(std::istream& in) {
  return read_rows<Event>(in, "user_id", &parse_event);
}

std::vector<CoverageInterval> read_coverage_csv(std::istream& in) {
  return read_rows<CoverageInterval>(in, "user_id", &parse_coverage);
}

void write_profile_csv(std::ostream& out, const WeeklyProfile& profile) {
  out << "week_bin,channel,rate,support\n";
  for (int w = 0; w < profile.week_length(); ++w) {
    for (std::size_t c = 0; c < profile.channels.size(); ++c) {
      out << w << ',' << profile.channels[c] << ',';
      if (profile.defined(w)) out << format_double(profile.rates(static_cast<Eigen::Index>(c), w));
      out << ',' << profile.support(w) << '\n';
    }
  }
}

}  // namespace actpred
