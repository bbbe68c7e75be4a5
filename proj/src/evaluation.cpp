#include "actpred/evaluation.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <ostream>
#include <unordered_set>

#include "actpred/csv.hpp"
#include "actpred/errors.hpp"
#include "actpred/parallel.hpp"

namespace actpred {

void ChannelReport::add(bool predicted, bool truth, std::uint64_t weight) {
  if (truth)
    (predicted ? tp : fn) += weight;
  else
    (predicted ? fp : tn) += weight;
}

ChannelReport& ChannelReport::operator+=(const ChannelReport& other) {
  tp += other.tp;
  fp += other.fp;
  tn += other.tn;
  fn += other.fn;
  return *this;
}

std::optional<double> ChannelReport::r11() const {
  if (tp + fn == 0) return std::nullopt;
  return static_cast<double>(tp) / static_cast<double>(tp + fn);
}

std::optional<double> ChannelReport::r00() const {
  if (tn + fp == 0) return std::nullopt;
  return static_cast<double>(tn) / static_cast<double>(tn + fp);
}

std::optional<double> ChannelReport::informedness() const {
  const auto a = r11();
  const auto b = r00();
  if (!a || !b) return std::nullopt;
  return *a + *b - 1.0;
}

ChannelReport InformednessReport::micro() const {
  ChannelReport pooled;
  for (const auto& c : channels) pooled += c;
  return pooled;
}

void InformednessReport::add(ChannelMask predicted, ChannelMask truth, std::uint64_t weight) {
  for (std::size_t c = 0; c < channels.size(); ++c)
    channels[c].add((predicted >> c) & 1u, (truth >> c) & 1u, weight);
}

InformednessReport& InformednessReport::operator+=(const InformednessReport& other) {
  if (other.channels.size() != channels.size())
    throw UsageError("cannot merge reports with different channel counts");
  for (std::size_t c = 0; c < channels.size(); ++c) channels[c] += other.channels[c];
  return *this;
}

InformednessReport informedness(std::span<const ChannelMask> predictions,
                                std::span<const ChannelMask> truths, int channel_count) {
  if (predictions.size() != truths.size())
    throw UsageError("informedness: " + std::to_string(predictions.size()) + " predictions vs " +
                     std::to_string(truths.size()) + " truths");
  InformednessReport report(channel_count);
  for (std::size_t k = 0; k < predictions.size(); ++k) report.add(predictions[k], truths[k]);
  return report;
}

// --- predictors -------------------------------------------------------------------

namespace {

ChannelMask decision_mask(const PatternTable& table, const BaseRates& base, PatternCode code) {
  ChannelMask mask = 0;
  for (int c = 0; c < table.spec().channel_count; ++c)
    if (decide(lookup_probability(table, code, c).probability, base, c))
      mask |= static_cast<ChannelMask>(1u << c);
  return mask;
}

}  // namespace

NonparametricPredictor::NonparametricPredictor(const PatternTable& table) : dense_(table.dense()) {
  const BaseRates base = BaseRates::from_table(table);
  if (dense_) dense_masks_.assign(std::size_t{1} << table.spec().pattern_bits(), 0);
  for (PatternCode code : table.observed_codes()) {
    const ChannelMask mask = decision_mask(table, base, code);
    if (dense_)
      dense_masks_[static_cast<std::size_t>(code)] = mask;
    else if (mask)
      sparse_masks_[code] = mask;
  }
}

ChannelMask NonparametricPredictor::predict(PatternCode code) const {
  if (dense_) return code < dense_masks_.size() ? dense_masks_[static_cast<std::size_t>(code)] : 0;
  auto it = sparse_masks_.find(code);
  return it == sparse_masks_.end() ? 0 : it->second;
}

LogitPredictor::LogitPredictor(const LinearModel& model) : model_(&model) {
  model.validate();
  for (int c = 0; c < model.spec.channel_count; ++c) {
    const bool has_base = !model.train_base.active.empty();
    thresholds_.push_back(has_base ? model.train_base.ratio(c) : 0.5);
  }
}

ChannelMask LogitPredictor::predict(PatternCode code) const {
  const auto& w = model_->weights;
  const Eigen::Index intercept = w.cols() - 1;
  ChannelMask mask = 0;
  for (Eigen::Index c = 0; c < w.rows(); ++c) {
    double z = w(c, intercept);
    for (PatternCode bits = code; bits; bits &= bits - 1) z += w(c, std::countr_zero(bits));
    if (sigmoid(z) > thresholds_[static_cast<std::size_t>(c)]) mask |= static_cast<ChannelMask>(1u << c);
  }
  return mask;
}

ChannelMask inertia_mask(PatternCode code, const WindowSpec& spec) {
  ChannelMask mask = 0;
  for (int c = 0; c < spec.channel_count; ++c)
    if (inertia_predict(code, spec, c)) mask |= static_cast<ChannelMask>(1u << c);
  return mask;
}

InformednessReport in_sample_upper_bound(const PatternTable& table) {
  const BaseRates base = BaseRates::from_table(table);
  const int channels = table.spec().channel_count;
  InformednessReport report(channels);
  for (PatternCode code : table.observed_codes()) {
    const std::uint64_t n = table.pattern_total(code);
    for (int c = 0; c < channels; ++c) {
      const std::uint64_t a = table.pattern_future_active(code, c);
      auto& r = report.channels[static_cast<std::size_t>(c)];
      if (decide(lookup_probability(table, code, c).probability, base, c)) {
        r.tp += a;
        r.fp += n - a;
      } else {
        r.fn += a;
        r.tn += n - a;
      }
    }
  }
  return report;
}

InformednessReport evaluate_nonparametric(const PatternTable& trained, std::span<const Instance> test) {
  return evaluate_instances(test, trained.spec().channel_count, NonparametricPredictor(trained));
}

InformednessReport evaluate_inertia(std::span<const Instance> instances, const WindowSpec& spec) {
  return evaluate_instances(instances, spec.channel_count,
                            [&](const Instance& inst) { return inertia_mask(inst.pattern, spec); });
}

InformednessReport evaluate_logit(const LinearModel& model, std::span<const Instance> instances) {
  return evaluate_instances(instances, model.spec.channel_count, LogitPredictor(model));
}

// --- convergence ------------------------------------------------------------------

std::vector<ConvergencePoint> convergence_curve(std::span<const Instance> instances,
                                                const WindowSpec& spec,
                                                std::span<const std::size_t> sizes,
                                                std::uint64_t seed,
                                                const ConvergenceOptions& options) {
  if (!std::is_sorted(sizes.begin(), sizes.end()))
    throw UsageError("convergence sizes must be ascending");
  if (!sizes.empty() && sizes.back() > instances.size())
    throw UsageError("convergence size " + std::to_string(sizes.back()) + " exceeds the " +
                     std::to_string(instances.size()) + " available instances");
  std::vector<ConvergencePoint> curve;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    const std::size_t size = sizes[k];
    Rng rng(seed, k);
    std::vector<Instance> subsample;
    subsample.reserve(size);
    std::size_t want = size;
    for (std::size_t i = 0; i < instances.size() && want > 0; ++i) {
      if (rng.below(instances.size() - i) < want) {
        subsample.push_back(instances[i]);
        --want;
      }
    }
    ConvergencePoint point{size, InformednessReport(spec.channel_count), seed};
    if (options.mode == EvaluationMode::in_sample) {
      point.report = in_sample_upper_bound(build_table(subsample, spec));
    } else {
      const auto split = split_instances(subsample, options.train_fraction, seed + k);
      point.report = evaluate_nonparametric(build_table(split.first, spec), split.second);
    }
    curve.push_back(std::move(point));
  }
  return curve;
}

// --- matched sampling -----------------------------------------------------------------

CommonPool::CommonPool(std::span<const Instance> pool) : sorted_(pool.begin(), pool.end()) {
  std::stable_sort(sorted_.begin(), sorted_.end(), [](const Instance& a, const Instance& b) {
    return a.pattern != b.pattern ? a.pattern < b.pattern : a.user < b.user;
  });
  for (std::size_t i = 0; i < sorted_.size(); ++i) {
    if (i == 0 || sorted_[i].pattern != sorted_[i - 1].pattern) {
      codes_.push_back(sorted_[i].pattern);
      offsets_.push_back(i);
    }
  }
  offsets_.push_back(sorted_.size());
}

MatchedSample CommonPool::sample(const PatternTable& individual,
                                 std::optional<std::uint32_t> exclude_user, Rng& rng) const {
  MatchedSample out;
  for (PatternCode code : individual.observed_codes()) {
    const std::uint64_t wanted = individual.pattern_total(code) - 1;
    if (wanted == 0) continue;
    const auto it = std::lower_bound(codes_.begin(), codes_.end(), code);
    std::size_t begin = 0, end = 0, own_begin = 0, own_end = 0;
    if (it != codes_.end() && *it == code) {
      const auto g = static_cast<std::size_t>(it - codes_.begin());
      begin = offsets_[g];
      end = offsets_[g + 1];
      own_begin = own_end = begin;
      if (exclude_user) {
        auto user_less = [](const Instance& a, std::uint32_t u) { return a.user < u; };
        own_begin = static_cast<std::size_t>(
            std::lower_bound(sorted_.begin() + static_cast<std::ptrdiff_t>(begin),
                             sorted_.begin() + static_cast<std::ptrdiff_t>(end), *exclude_user, user_less) -
            sorted_.begin());
        own_end = own_begin;
        while (own_end < end && sorted_[own_end].user == *exclude_user) ++own_end;
      }
    }
    const std::uint64_t available = (end - begin) - (own_end - own_begin);
    const std::uint64_t take = std::min(wanted, available);
    if (take < wanted) out.shortfalls.push_back({code, wanted, available});
    if (take == 0) continue;

    // Floyd's algorithm: `take` distinct positions in [0, available).
    std::unordered_set<std::uint64_t> chosen;
    chosen.reserve(static_cast<std::size_t>(take) * 2);
    for (std::uint64_t j = available - take; j < available; ++j) {
      const std::uint64_t t = rng.below(j + 1);
      if (!chosen.insert(t).second) chosen.insert(j);
    }
    std::vector<std::uint64_t> positions(chosen.begin(), chosen.end());
    std::sort(positions.begin(), positions.end());
    const std::size_t own = own_end - own_begin;
    for (std::uint64_t p : positions) {
      std::size_t index = begin + static_cast<std::size_t>(p);
      if (index >= own_begin) index += own;
      out.instances.push_back(sorted_[index]);
    }
  }
  return out;
}

MatchedSample matched_common_sample(const PatternTable& individual,
                                    std::span<const Instance> common, std::uint64_t seed) {
  Rng rng(seed);
  return CommonPool(common).sample(individual, std::nullopt, rng);
}

std::vector<UserComparison> individual_vs_common(std::span<const ActivitySeries> series,
                                                 const WindowSpec& spec,
                                                 std::size_t min_instances, std::uint64_t seed,
                                                 int threads) {
  const std::vector<Instance> all = extract_all(series, spec, threads);
  std::vector<std::size_t> user_begin(series.size() + 1, all.size());
  for (std::size_t i = all.size(); i-- > 0;) user_begin[all[i].user] = i;
  for (std::size_t u = series.size(); u-- > 0;)
    user_begin[u] = std::min(user_begin[u], user_begin[u + 1]);

  std::vector<std::uint32_t> eligible;
  for (std::uint32_t u = 0; u < series.size(); ++u)
    if (user_begin[u + 1] - user_begin[u] >= min_instances && user_begin[u + 1] > user_begin[u])
      eligible.push_back(u);

  const CommonPool pool(all);
  std::vector<UserComparison> out(eligible.size());
  parallel_for(eligible.size(), threads, [&](std::size_t k) {
    const std::uint32_t u = eligible[k];
    const std::span<const Instance> own(all.data() + user_begin[u], user_begin[u + 1] - user_begin[u]);
    const PatternTable table = build_table(own, spec);
    Rng rng(seed, u);
    const MatchedSample sample = pool.sample(table, u, rng);

    UserComparison& result = out[k];
    result.user_id = series[u].user_id;
    result.instance_count = own.size();
    result.individual = in_sample_upper_bound(table);
    result.common = evaluate_nonparametric(build_table(sample.instances, spec), own);
    result.shortfall_patterns = sample.shortfalls.size();
    for (const auto& s : sample.shortfalls) result.shortfall_instances += s.wanted - s.available;
  });
  return out;
}

// --- persistence ----------------------------------------------------------------------

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw UsageError("pearson: length mismatch");
  const std::size_t n = x.size();
  if (n < 2) return std::nullopt;
  const Eigen::Map<const Eigen::ArrayXd> a(x.data(), static_cast<Eigen::Index>(n));
  const Eigen::Map<const Eigen::ArrayXd> b(y.data(), static_cast<Eigen::Index>(n));
  const Eigen::ArrayXd da = a - a.mean();
  const Eigen::ArrayXd db = b - b.mean();
  const double sa = da.square().sum();
  const double sb = db.square().sum();
  if (sa <= 0.0 || sb <= 0.0) return std::nullopt;
  return std::clamp((da * db).sum() / std::sqrt(sa * sb), -1.0, 1.0);
}

PersistenceReport persistence(const std::vector<std::vector<InformednessReport>>& per_user,
                              std::span<const int> leads) {
  PersistenceReport out;
  out.leads.assign(leads.begin(), leads.end());
  if (per_user.empty() || leads.empty()) return out;
  const int channels = per_user.front().front().channel_count();
  out.correlation.assign(static_cast<std::size_t>(channels),
                         std::vector<std::optional<double>>(leads.size()));
  out.users_used.assign(static_cast<std::size_t>(channels), std::vector<std::size_t>(leads.size(), 0));
  for (int c = 0; c < channels; ++c) {
    for (std::size_t k = 0; k < leads.size(); ++k) {
      std::vector<double> first, later;
      for (const auto& reports : per_user) {
        if (reports.size() != leads.size()) throw UsageError("persistence: ragged per-user reports");
        const auto a = reports[0].channels[static_cast<std::size_t>(c)].informedness();
        const auto b = reports[k].channels[static_cast<std::size_t>(c)].informedness();
        if (a && b) {
          first.push_back(*a);
          later.push_back(*b);
        }
      }
      out.users_used[static_cast<std::size_t>(c)][k] = first.size();
      if (first.size() >= 3) out.correlation[static_cast<std::size_t>(c)][k] = pearson(first, later);
    }
  }
  return out;
}

// --- CSV ------------------------------------------------------------------------------

namespace {

template <typename Fn>
void for_each_channel_row(const InformednessReport& report, const ChannelLabels& labels, Fn&& fn) {
  for (int c = 0; c < report.channel_count(); ++c)
    fn(labels.at(static_cast<std::size_t>(c)), report.channels[static_cast<std::size_t>(c)]);
  fn(std::string("all"), report.micro());
}

}  // namespace

void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows, const ChannelLabels& labels) {
  out << "t_f,model,channel,I\n";
  for (const auto& row : rows)
    for_each_channel_row(row.report, labels, [&](const std::string& label, const ChannelReport& r) {
      out << row.lead_minutes << ',' << row.model << ',' << label << ','
          << format_optional(r.informedness()) << '\n';
    });
}

void write_report_csv(std::ostream& out, std::span<const SweepRow> rows, const ChannelLabels& labels) {
  out << "t_f,model,channel,R11,R00,I,TP,FP,TN,FN\n";
  for (const auto& row : rows)
    for_each_channel_row(row.report, labels, [&](const std::string& label, const ChannelReport& r) {
      out << row.lead_minutes << ',' << row.model << ',' << label << ',' << format_optional(r.r11())
          << ',' << format_optional(r.r00()) << ',' << format_optional(r.informedness()) << ','
          << r.tp << ',' << r.fp << ',' << r.tn << ',' << r.fn << '\n';
    });
}

void write_convergence_csv(std::ostream& out, std::span<const ConvergencePoint> points,
                           const ChannelLabels& labels) {
  out << "size,channel,R11,R00,I\n";
  for (const auto& p : points)
    for_each_channel_row(p.report, labels, [&](const std::string& label, const ChannelReport& r) {
      out << p.sample_size << ',' << label << ',' << format_optional(r.r11()) << ','
          << format_optional(r.r00()) << ',' << format_optional(r.informedness()) << '\n';
    });
}

void write_scatter_csv(std::ostream& out, std::span<const ScatterBlock> blocks,
                       const ChannelLabels& labels) {
  out << "user,t_f,channel,I_individual,I_common\n";
  for (const auto& block : blocks) {
    for (const auto& u : block.users) {
      for (std::size_t c = 0; c < u.individual.channels.size(); ++c) {
        out << u.user_id << ',' << block.lead_minutes << ',' << labels.at(c) << ','
            << format_optional(u.individual.channels[c].informedness()) << ','
            << format_optional(u.common.channels[c].informedness()) << '\n';
      }
    }
  }
}

void write_persistence_csv(std::ostream& out, const PersistenceReport& report, int bin_width_min,
                           const ChannelLabels& labels) {
  out << "channel,t_f,C\n";
  for (std::size_t c = 0; c < report.correlation.size(); ++c)
    for (std::size_t k = 0; k < report.leads.size(); ++k)
      out << labels.at(c) << ',' << report.leads[k] * bin_width_min << ','
          << format_optional(report.correlation[c][k]) << '\n';
}

}  // namespace actpred
