#include "actpred/patterns.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "actpred/csv.hpp"
#include "actpred/errors.hpp"
#include "actpred/parallel.hpp"

namespace actpred {

void WindowSpec::validate() const {
  if (history_bins < 1 || lead_bins < 1 || channel_count < 1)
    throw UsageError("window spec needs history >= 1, lead >= 1, channels >= 1");
  if (channel_count > kMaxChannels)
    throw UsageError("at most " + std::to_string(kMaxChannels) + " channels supported");
  if (pattern_bits() > kMaxPatternBits)
    throw UsageError("history x channels = " + std::to_string(pattern_bits()) +
                     " exceeds the " + std::to_string(kMaxPatternBits) + "-bit pattern ceiling");
}

PatternCode encode_pattern(const BinaryWindow& window, const WindowSpec& spec) {
  spec.validate();
  if (window.rows() != spec.history_bins || window.cols() != spec.channel_count)
    throw UsageError("window is " + std::to_string(window.rows()) + "x" +
                     std::to_string(window.cols()) + ", spec expects " +
                     std::to_string(spec.history_bins) + "x" + std::to_string(spec.channel_count));
  PatternCode code = 0;
  for (int c = 0; c < spec.channel_count; ++c) {
    for (int r = 0; r < spec.history_bins; ++r) {
      const auto v = window(r, c);
      if (v > 1) throw UsageError("window entries must be 0 or 1");
      if (v) code |= PatternCode{1} << pattern_bit(spec, r, c);
    }
  }
  return code;
}

BinaryWindow decode_pattern(PatternCode code, const WindowSpec& spec) {
  spec.validate();
  if (spec.pattern_bits() < 64 && (code >> spec.pattern_bits()) != 0)
    throw ValidationError("pattern code " + std::to_string(code) + " out of range for " +
                          std::to_string(spec.pattern_bits()) + " bits");
  BinaryWindow window(spec.history_bins, spec.channel_count);
  for (int c = 0; c < spec.channel_count; ++c)
    for (int r = 0; r < spec.history_bins; ++r)
      window(r, c) = static_cast<std::uint8_t>((code >> pattern_bit(spec, r, c)) & 1u);
  return window;
}

std::vector<Instance> extract_instances(const ActivitySeries& series, const WindowSpec& spec,
                                        std::uint32_t user_index) {
  spec.validate();
  if (series.channel_count() != spec.channel_count)
    throw UsageError("series '" + series.user_id + "' has " +
                     std::to_string(series.channel_count()) + " channels, spec expects " +
                     std::to_string(spec.channel_count));
  const int h = spec.history_bins;
  const int channels = spec.channel_count;
  const std::size_t n = series.length();

  // Rolling update: shift every channel segment one bin older, then insert
  // the newest bin at the top of each segment.
  PatternCode newest_mask = 0;
  for (int c = 0; c < channels; ++c) newest_mask |= PatternCode{1} << pattern_bit(spec, h - 1, c);
  const PatternCode keep_mask = ~newest_mask;

  std::vector<Instance> out;
  if (n < static_cast<std::size_t>(h + spec.lead_bins)) return out;
  out.reserve(n - static_cast<std::size_t>(h + spec.lead_bins) + 1);

  PatternCode code = 0;
  std::size_t covered_run = 0;
  for (std::size_t t = 0; t + static_cast<std::size_t>(spec.lead_bins) < n; ++t) {
    code = (code >> 1) & keep_mask;
    for (int c = 0; c < channels; ++c)
      if (series.bits[static_cast<std::size_t>(c)].test(t))
        code |= PatternCode{1} << pattern_bit(spec, h - 1, c);
    covered_run = series.coverage.test(t) ? covered_run + 1 : 0;
    if (covered_run < static_cast<std::size_t>(h)) continue;
    const std::size_t future_bin = t + static_cast<std::size_t>(spec.lead_bins);
    if (!series.coverage.test(future_bin)) continue;
    ChannelMask future = 0;
    for (int c = 0; c < channels; ++c)
      if (series.bits[static_cast<std::size_t>(c)].test(future_bin))
        future |= static_cast<ChannelMask>(1u << c);
    out.push_back(Instance{code, series.start_bin + static_cast<std::int64_t>(t), user_index, future});
  }
  return out;
}

std::vector<Instance> extract_all(std::span<const ActivitySeries> series, const WindowSpec& spec,
                                  int threads) {
  std::vector<std::vector<Instance>> per_user(series.size());
  parallel_for(series.size(), threads, [&](std::size_t u) {
    per_user[u] = extract_instances(series[u], spec, static_cast<std::uint32_t>(u));
  });
  std::size_t total = 0;
  for (const auto& v : per_user) total += v.size();
  std::vector<Instance> out;
  out.reserve(total);
  for (auto& v : per_user) {
    out.insert(out.end(), v.begin(), v.end());
    v = {};
  }
  return out;
}

// --- PatternTable -------------------------------------------------------------

PatternTable::PatternTable(const WindowSpec& spec)
    : spec_(spec), dense_(false), active_(static_cast<std::size_t>(spec.channel_count), 0) {
  spec_.validate();
  dense_ = spec_.pattern_bits() <= kDenseTableBits;
  if (dense_) dense_counts_.assign((std::size_t{1} << spec_.pattern_bits()) * stride(), 0);
}

void PatternTable::check_code(PatternCode code) const {
  if ((code >> spec_.pattern_bits()) != 0)
    throw ValidationError("pattern code " + std::to_string(code) + " out of range for a " +
                          std::to_string(spec_.pattern_bits()) + "-bit table");
}

void PatternTable::add(PatternCode code, ChannelMask future, std::uint64_t weight) {
  check_code(code);
  std::uint64_t* row;
  if (dense_) {
    row = &dense_counts_[static_cast<std::size_t>(code) * stride()];
  } else {
    auto& v = sparse_counts_[code];
    if (v.empty()) v.assign(stride(), 0);
    row = v.data();
  }
  row[0] += weight;
  total_ += weight;
  for (int c = 0; c < spec_.channel_count; ++c) {
    if ((future >> c) & 1u) {
      row[c + 1] += weight;
      active_[static_cast<std::size_t>(c)] += weight;
    }
  }
}

void PatternTable::add_counts(PatternCode code, std::uint64_t total,
                              std::span<const std::uint64_t> active) {
  check_code(code);
  if (static_cast<int>(active.size()) != spec_.channel_count)
    throw ValidationError("per-channel count vector has the wrong length");
  for (auto a : active)
    if (a > total) throw ValidationError("future count exceeds pattern total");
  std::uint64_t* row;
  if (dense_) {
    row = &dense_counts_[static_cast<std::size_t>(code) * stride()];
  } else {
    auto& v = sparse_counts_[code];
    if (v.empty()) v.assign(stride(), 0);
    row = v.data();
  }
  row[0] += total;
  total_ += total;
  for (std::size_t c = 0; c < active.size(); ++c) {
    row[c + 1] += active[c];
    active_[c] += active[c];
  }
}

void PatternTable::merge(const PatternTable& other) {
  if (!(other.spec_ == spec_)) throw UsageError("cannot merge tables with different window specs");
  total_ += other.total_;
  for (std::size_t c = 0; c < active_.size(); ++c) active_[c] += other.active_[c];
  if (dense_) {
    for (std::size_t i = 0; i < dense_counts_.size(); ++i) dense_counts_[i] += other.dense_counts_[i];
  } else {
    for (const auto& [code, row] : other.sparse_counts_) {
      auto& mine = sparse_counts_[code];
      if (mine.empty()) mine.assign(stride(), 0);
      for (std::size_t k = 0; k < row.size(); ++k) mine[k] += row[k];
    }
  }
}

std::uint64_t PatternTable::pattern_total(PatternCode code) const {
  return pattern_future_active(code, -1);
}

std::uint64_t PatternTable::pattern_future_active(PatternCode code, int channel) const {
  check_code(code);
  const std::size_t column = static_cast<std::size_t>(channel + 1);
  if (dense_) return dense_counts_[static_cast<std::size_t>(code) * stride() + column];
  auto it = sparse_counts_.find(code);
  return it == sparse_counts_.end() ? 0 : it->second[column];
}

std::vector<PatternCode> PatternTable::observed_codes() const {
  std::vector<PatternCode> codes;
  if (dense_) {
    const std::size_t n = dense_counts_.size() / stride();
    for (std::size_t code = 0; code < n; ++code)
      if (dense_counts_[code * stride()] > 0) codes.push_back(code);
  } else {
    for (const auto& [code, row] : sparse_counts_)
      if (row[0] > 0) codes.push_back(code);
    std::sort(codes.begin(), codes.end());
  }
  return codes;
}

void PatternTable::check_invariants() const {
  std::uint64_t total = 0;
  std::vector<std::uint64_t> active(active_.size(), 0);
  for (PatternCode code : observed_codes()) {
    const std::uint64_t n = pattern_total(code);
    total += n;
    for (int c = 0; c < spec_.channel_count; ++c) {
      const std::uint64_t a = pattern_future_active(code, c);
      if (a > n) throw std::logic_error("pattern future count exceeds pattern total");
      active[static_cast<std::size_t>(c)] += a;
    }
  }
  if (total != total_) throw std::logic_error("pattern totals do not sum to N");
  for (std::size_t c = 0; c < active.size(); ++c) {
    if (active[c] != active_[c]) throw std::logic_error("pattern future counts do not sum to n_i");
    if (active_[c] > total_) throw std::logic_error("n_i exceeds N");
  }
}

bool operator==(const PatternTable& a, const PatternTable& b) {
  if (!(a.spec_ == b.spec_) || a.total_ != b.total_ || a.active_ != b.active_) return false;
  const auto codes = a.observed_codes();
  if (codes != b.observed_codes()) return false;
  for (PatternCode code : codes)
    for (int c = -1; c < a.spec_.channel_count; ++c)
      if (a.pattern_future_active(code, c) != b.pattern_future_active(code, c)) return false;
  return true;
}

PatternTable build_table(std::span<const Instance> instances, const WindowSpec& spec) {
  PatternTable table(spec);
  for (const auto& inst : instances) table.add(inst);
  return table;
}

// --- serialization ------------------------------------------------------------

std::string short_channel_name(const std::string& label) {
  if (label == "movement") return "move";
  if (label == "proximity") return "prox";
  return label;
}

void write_table_csv(std::ostream& out, const PatternTable& table,
                     std::span<const std::string> channel_labels, int bin_width_min) {
  const auto& spec = table.spec();
  if (static_cast<int>(channel_labels.size()) != spec.channel_count)
    throw UsageError("label count does not match table channels");
  out << "#layout=" << kPatternLayoutVersion << ",history=" << spec.history_bins
      << ",lead=" << spec.lead_bins << ",bin_width_min=" << bin_width_min << ",channels=";
  for (std::size_t c = 0; c < channel_labels.size(); ++c)
    out << (c ? ";" : "") << channel_labels[c];
  out << "\ncode,total";
  for (const auto& label : channel_labels) out << ",n_" << short_channel_name(label);
  out << '\n';
  for (PatternCode code : table.observed_codes()) {
    out << code << ',' << table.pattern_total(code);
    for (int c = 0; c < spec.channel_count; ++c) out << ',' << table.pattern_future_active(code, c);
    out << '\n';
  }
}

LoadedTable read_table_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("#layout=", 0) != 0)
    throw ValidationError("table CSV must start with a '#layout=' line");
  WindowSpec spec{0, 0, 0};
  std::vector<std::string> labels;
  int layout = -1;
  int bin_width_min = 15;
  for (const auto& field : split_csv_line(std::string_view(line).substr(1))) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw ValidationError("bad table preamble field: " + field);
    const std::string key = field.substr(0, eq);
    const std::string value = field.substr(eq + 1);
    if (key == "layout") layout = static_cast<int>(parse_int(value, line));
    else if (key == "history") spec.history_bins = static_cast<int>(parse_int(value, line));
    else if (key == "lead") spec.lead_bins = static_cast<int>(parse_int(value, line));
    else if (key == "bin_width_min") bin_width_min = static_cast<int>(parse_int(value, line));
    else if (key == "channels") {
      std::stringstream ss(value);
      std::string label;
      while (std::getline(ss, label, ';')) labels.push_back(label);
    }
  }
  if (layout != kPatternLayoutVersion)
    throw ValidationError("unsupported table layout version " + std::to_string(layout));
  spec.channel_count = static_cast<int>(labels.size());
  try {
    spec.validate();
  } catch (const UsageError& e) {
    throw ValidationError(std::string("table preamble: ") + e.what());
  }

  LoadedTable loaded{PatternTable(spec), labels, bin_width_min};
  std::getline(in, line);  // column header
  std::size_t line_no = 2;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    const std::string record = "line " + std::to_string(line_no) + ": " + line;
    if (static_cast<int>(fields.size()) != spec.channel_count + 2)
      throw ValidationError("wrong field count at " + record);
    const auto code = static_cast<PatternCode>(parse_int(fields[0], record));
    const auto total = parse_int(fields[1], record);
    if (total < 0) throw ValidationError("negative count at " + record);
    std::vector<std::uint64_t> active;
    for (int c = 0; c < spec.channel_count; ++c) {
      const auto a = parse_int(fields[static_cast<std::size_t>(c) + 2], record);
      if (a < 0 || a > total) throw ValidationError("future count outside [0, total] at " + record);
      active.push_back(static_cast<std::uint64_t>(a));
    }
    try {
      loaded.table.add_counts(code, static_cast<std::uint64_t>(total), active);
    } catch (const ValidationError& e) {
      throw ValidationError(std::string(e.what()) + " at " + record);
    }
  }
  return loaded;
}

}  // namespace actpred
