#include "cli.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "actpred/correlation.hpp"
#include "actpred/csv.hpp"
#include "actpred/errors.hpp"
#include "actpred/evaluation.hpp"
#include "actpred/parallel.hpp"
#include "actpred/patterns.hpp"
#include "actpred/predictors.hpp"
#include "actpred/syngen.hpp"
#include "actpred/timeline.hpp"
#include "manifest.hpp"

namespace actpred::cli {
namespace {

constexpr const char* kFormats = R"(CSV outputs (stable column order):
  profile      week_bin,channel,rate,support
  filter       user,channel,active_bins               (--counts)
  tabulate     #layout=...,history=,lead=,bin_width_min=,channels=a;b;...
               code,total,n_call,n_text,n_move,n_prox
  evaluate     t_f,model,channel,I                    (--out, horizon sweep)
               t_f,model,channel,R11,R00,I,TP,FP,TN,FN (--report)
               size,channel,R11,R00,I                 (--convergence-out)
  compare      user,t_f,channel,I_individual,I_common (--out, scatter)
               channel,t_f,C                          (--persistence)
  correlate    i,j,lag_minutes,P,Q,alpha,anchors
Durations (t_f, history, lags) are minutes; undefined values are empty fields.
The pooled row of each report uses channel "all".
Default worker count comes from ACTPRED_THREADS.
Exit status: 0 success, 2 usage error, 3 data validation failure.)";

struct Options {
  std::uint64_t seed = 0;
  bool seed_given = false;
  int threads = 1;
  std::string manifest;

  std::string in, out, events, coverage, json, counts, config, table, report, convergence_out;
  std::string persistence_out, save_model, config_out;
  int bin_width = 15;
  int tz_offset = 0;
  std::size_t min_active = 100;
  int history_min = 45;
  std::vector<int> tf_min{15};
  std::vector<std::string> models{"nonparametric"};
  std::string mode = "in-sample";
  double train_fraction = 0.75;
  std::optional<double> lambda;
  std::vector<std::size_t> convergence_sizes;
  std::size_t min_instances = 30000;
  int max_lag_min = 24 * 60;
  std::uint64_t anchor_floor = 100;
  std::vector<double> calibrate;
  std::int64_t calibration_bins = 1000000;
};

class Run {
 public:
  Run(std::string command, std::vector<std::string> args, const Options& opt)
      : opt_(opt), start_(std::chrono::steady_clock::now()) {
    manifest_.command = std::move(command);
    manifest_.arguments = std::move(args);
    std::string joined = manifest_.command;
    for (const auto& a : manifest_.arguments) joined += '\0' + a;
    manifest_.config_hash = "fnv1a64:" + hex64(fnv1a64(joined));
    manifest_.seed = opt.seed;
    manifest_.threads = opt.threads;
    manifest_.version = ACTPRED_VERSION;
  }

  std::ifstream open_input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open input '" + path + "'");
    manifest_.inputs.emplace_back(path, file_digest(path));
    return in;
  }

  template <typename Writer>
  void write_output(const std::string& path, Writer&& writer) {
    {
      std::ofstream out(path, std::ios::binary);
      if (!out) throw ValidationError("cannot open output '" + path + "'");
      writer(out);
      if (!out) throw ValidationError("failed writing '" + path + "'");
    }
    manifest_.outputs.emplace_back(path, file_digest(path));
  }

  void finish() {
    if (manifest_.outputs.empty()) return;
    manifest_.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    const std::string path =
        opt_.manifest.empty() ? opt_.out + ".manifest.json" : opt_.manifest;
    write_manifest(path, manifest_);
  }

 private:
  const Options& opt_;
  RunManifest manifest_;
  std::chrono::steady_clock::time_point start_;
};

int minutes_to_bins(int minutes, int bin_width, const char* flag) {
  if (minutes <= 0 || minutes % bin_width != 0)
    throw UsageError(std::string(flag) + " = " + std::to_string(minutes) +
                     " min is not a positive multiple of the " + std::to_string(bin_width) +
                     "-min bin width");
  return minutes / bin_width;
}

std::vector<ActivitySeries> load_series(Run& run, const std::string& path) {
  auto in = run.open_input(path);
  auto series = read_series_json(in);
  if (series.empty()) throw ValidationError("'" + path + "' contains no users");
  for (const auto& s : series)
    if (s.bin_width_min != series.front().bin_width_min)
      throw ValidationError("user '" + s.user_id + "' has a different bin width");
  return series;
}

// --- subcommands ---------------------------------------------------------------------

void cmd_ingest(Run& run, const Options& opt, std::ostream& err) {
  std::vector<ActivitySeries> series;
  if (!opt.json.empty()) {
    series = load_series(run, opt.json);
  } else {
    if (opt.events.empty() || opt.coverage.empty())
      throw UsageError("ingest needs --events and --coverage, or --json");
    auto events_in = run.open_input(opt.events);
    const auto events = read_events_csv(events_in);
    auto coverage_in = run.open_input(opt.coverage);
    const auto coverage = read_coverage_csv(coverage_in);
    auto result = bin_events(events, coverage, BinConfig{opt.bin_width, opt.tz_offset});
    if (result.dropped_events > 0)
      err << "warning: dropped " << result.dropped_events << " events outside coverage\n";
    series = std::move(result.series);
  }
  run.write_output(opt.out, [&](std::ostream& o) { write_series_json(o, series); });
}

void cmd_filter(Run& run, const Options& opt) {
  const auto series = load_series(run, opt.in);
  const auto result = filter_users(series, opt.min_active);
  run.write_output(opt.out, [&](std::ostream& o) { write_series_json(o, result.kept); });
  if (!opt.counts.empty()) {
    run.write_output(opt.counts, [&](std::ostream& o) {
      o << "user,channel,active_bins\n";
      for (std::size_t k = 0; k < result.kept.size(); ++k)
        for (std::size_t c = 0; c < result.active_counts[k].size(); ++c)
          o << result.kept[k].user_id << ',' << result.kept[k].channels[c] << ','
            << result.active_counts[k][c] << '\n';
    });
  }
}

void cmd_profile(Run& run, const Options& opt) {
  const auto series = load_series(run, opt.in);
  const auto profile = weekly_profile(series, BinConfig{series.front().bin_width_min, 0});
  run.write_output(opt.out, [&](std::ostream& o) { write_profile_csv(o, profile); });
}

void cmd_simulate(Run& run, const Options& opt) {
  auto in = run.open_input(opt.config);
  GeneratorConfig config = read_generator_config(in);
  if (opt.seed_given) config.seed = opt.seed;
  if (!opt.calibrate.empty()) config = calibrate_base_logits(config, opt.calibrate, opt.calibration_bins);
  const auto series = generate(config, opt.threads);
  run.write_output(opt.out, [&](std::ostream& o) { write_series_json(o, series); });
  if (!opt.config_out.empty())
    run.write_output(opt.config_out, [&](std::ostream& o) { write_generator_config(o, config); });
}

WindowSpec window_spec(const std::vector<ActivitySeries>& series, int history_min, int lead_min) {
  const int width = series.front().bin_width_min;
  return WindowSpec{minutes_to_bins(history_min, width, "--history"),
                    minutes_to_bins(lead_min, width, "--tf"), series.front().channel_count()};
}

void cmd_tabulate(Run& run, const Options& opt) {
  const auto series = load_series(run, opt.in);
  if (opt.tf_min.size() != 1) throw UsageError("tabulate takes a single --lead");
  const WindowSpec spec = window_spec(series, opt.history_min, opt.tf_min.front());
  const auto instances = extract_all(series, spec, opt.threads);
  const auto table = build_table(instances, spec);
  run.write_output(opt.out, [&](std::ostream& o) {
    write_table_csv(o, table, series.front().channels, series.front().bin_width_min);
  });
}

EvaluationMode parse_mode(const std::string& mode) {
  if (mode == "in-sample") return EvaluationMode::in_sample;
  if (mode == "split") return EvaluationMode::split;
  throw UsageError("--mode must be in-sample or split");
}

void cmd_evaluate(Run& run, const Options& opt) {
  const EvaluationMode mode = parse_mode(opt.mode);
  std::vector<SweepRow> rows;
  ChannelLabels labels;

  if (!opt.table.empty()) {
    if (!opt.in.empty()) throw UsageError("give either --in or --table, not both");
    for (const auto& m : opt.models)
      if (m != "nonparametric") throw UsageError("--table supports only --model nonparametric");
    if (mode != EvaluationMode::in_sample) throw UsageError("--table supports only in-sample mode");
    if (!opt.convergence_sizes.empty()) throw UsageError("--convergence needs --in");
    auto in = run.open_input(opt.table);
    const auto loaded = read_table_csv(in);
    labels = loaded.channel_labels;
    rows.push_back({loaded.table.spec().lead_bins * loaded.bin_width_min, "nonparametric",
                    in_sample_upper_bound(loaded.table)});
  } else {
    if (opt.in.empty()) throw UsageError("evaluate needs --in or --table");
    const auto series = load_series(run, opt.in);
    labels = series.front().channels;
    for (const auto& m : opt.models)
      if (m != "nonparametric" && m != "inertia" && m != "logit")
        throw UsageError("unknown model '" + m + "'");
    if (!opt.save_model.empty() && opt.tf_min.size() != 1)
      throw UsageError("--save-model needs a single --tf");

    for (int tf : opt.tf_min) {
      const WindowSpec spec = window_spec(series, opt.history_min, tf);
      const auto instances = extract_all(series, spec, opt.threads);
      const double fraction = mode == EvaluationMode::in_sample ? 1.0 : opt.train_fraction;
      const InstanceSplit split = split_instances(instances, fraction, opt.seed);
      const std::span<const Instance> test =
          mode == EvaluationMode::in_sample ? std::span<const Instance>(instances) : split.second;

      for (const auto& m : opt.models) {
        InformednessReport report(spec.channel_count);
        if (m == "nonparametric") {
          report = mode == EvaluationMode::in_sample
                       ? in_sample_upper_bound(build_table(instances, spec))
                       : evaluate_nonparametric(build_table(split.first, spec), test);
        } else if (m == "inertia") {
          report = evaluate_inertia(test, spec);
        } else {
          TrainOptions train;
          train.lambda = opt.lambda;
          train.train_fraction = fraction;
          train.seed = opt.seed;
          train.threads = opt.threads;
          const LinearModel model = logit_train(instances, spec, train);
          report = evaluate_logit(model, test);
          if (!opt.save_model.empty())
            run.write_output(opt.save_model, [&](std::ostream& o) { write_model_json(o, model); });
        }
        rows.push_back({tf, m, std::move(report)});
      }
    }

    if (!opt.convergence_sizes.empty()) {
      if (opt.convergence_out.empty()) throw UsageError("--convergence needs --convergence-out");
      const WindowSpec spec = window_spec(series, opt.history_min, opt.tf_min.front());
      const auto instances = extract_all(series, spec, opt.threads);
      ConvergenceOptions conv;
      conv.mode = mode;
      conv.train_fraction = opt.train_fraction;
      const auto curve = convergence_curve(instances, spec, opt.convergence_sizes, opt.seed, conv);
      run.write_output(opt.convergence_out,
                       [&](std::ostream& o) { write_convergence_csv(o, curve, labels); });
    }
  }

  run.write_output(opt.out, [&](std::ostream& o) { write_sweep_csv(o, rows, labels); });
  if (!opt.report.empty())
    run.write_output(opt.report, [&](std::ostream& o) { write_report_csv(o, rows, labels); });
}

void cmd_compare(Run& run, const Options& opt) {
  const auto series = load_series(run, opt.in);
  const int width = series.front().bin_width_min;
  std::vector<ScatterBlock> blocks;
  std::vector<int> leads;
  for (int tf : opt.tf_min) {
    const WindowSpec spec = window_spec(series, opt.history_min, tf);
    leads.push_back(spec.lead_bins);
    blocks.push_back({tf, individual_vs_common(series, spec, opt.min_instances, opt.seed, opt.threads)});
  }
  run.write_output(opt.out, [&](std::ostream& o) { write_scatter_csv(o, blocks, series.front().channels); });

  if (!opt.persistence_out.empty()) {
    // Users eligible at every horizon, matched by id.
    std::map<std::string, std::vector<InformednessReport>> by_user;
    for (const auto& block : blocks)
      for (const auto& u : block.users) by_user[u.user_id].push_back(u.individual);
    std::vector<std::vector<InformednessReport>> per_user;
    for (auto& [id, reports] : by_user)
      if (reports.size() == blocks.size()) per_user.push_back(std::move(reports));
    const auto report = persistence(per_user, leads);
    run.write_output(opt.persistence_out, [&](std::ostream& o) {
      write_persistence_csv(o, report, width, series.front().channels);
    });
  }
}

void cmd_correlate(Run& run, const Options& opt) {
  const auto series = load_series(run, opt.in);
  const BinConfig config{series.front().bin_width_min, 0};
  CorrelationOptions options;
  if (opt.max_lag_min < 0 || opt.max_lag_min % config.bin_width_min != 0)
    throw UsageError("--max-lag must be a non-negative multiple of the bin width");
  options.max_lag_bins = opt.max_lag_min / config.bin_width_min;
  options.anchor_floor = opt.anchor_floor;
  const auto profile = correlate(series, config, options, opt.threads);
  run.write_output(opt.out, [&](std::ostream& o) { write_correlation_csv(o, profile); });
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options opt;
  opt.threads = default_thread_count();

  CLI::App app{"Predict and analyze multichannel binary activity time series", "actpred"};
  app.footer(kFormats);
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(ACTPRED_VERSION));

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", opt.seed, "Seed for every random choice")->each([&](const std::string&) {
      opt.seed_given = true;
    });
    sub->add_option("--threads", opt.threads, "Worker threads (outputs do not depend on it)")
        ->check(CLI::PositiveNumber);
    sub->add_option("--manifest", opt.manifest, "Manifest path (default <--out>.manifest.json)");
  };

  auto* ingest = app.add_subcommand("ingest", "Bin event CSVs (or re-read timeline JSON) into series JSON");
  ingest->add_option("--events", opt.events, "Event CSV: user_id,channel,unix_timestamp_seconds");
  ingest->add_option("--coverage", opt.coverage, "Coverage CSV: user_id,start_ts,end_ts");
  ingest->add_option("--json", opt.json, "Pre-binned timeline JSON");
  ingest->add_option("--bin-width", opt.bin_width, "Bin width in minutes (divides 60)");
  ingest->add_option("--tz-offset", opt.tz_offset, "Fixed local-time offset in minutes");
  ingest->add_option("--out", opt.out, "Output series JSON")->required();
  add_common(ingest);

  auto* filter = app.add_subcommand("filter", "Keep users with enough active bins in every channel");
  filter->add_option("--in", opt.in)->required();
  filter->add_option("--min-active", opt.min_active, "Minimum active bins per channel");
  filter->add_option("--out", opt.out)->required();
  filter->add_option("--counts", opt.counts, "Per-user active-bin counts CSV");
  add_common(filter);

  auto* profile = app.add_subcommand("profile", "Weekly activity profile CSV");
  profile->add_option("--in", opt.in)->required();
  profile->add_option("--out", opt.out)->required();
  add_common(profile);

  auto* simulate = app.add_subcommand("simulate", "Generate synthetic series from a generator config");
  simulate->add_option("--config", opt.config, "Generator config JSON")->required();
  simulate->add_option("--out", opt.out)->required();
  simulate->add_option("--calibrate", opt.calibrate, "Target base rates; tunes base logits first")
      ->delimiter(',');
  simulate->add_option("--calibration-bins", opt.calibration_bins, "Bins per calibration round");
  simulate->add_option("--config-out", opt.config_out, "Write the effective config JSON");
  add_common(simulate);

  auto* tabulate = app.add_subcommand("tabulate", "Pattern count table for one history/lead");
  tabulate->add_option("--in", opt.in)->required();
  tabulate->add_option("--history", opt.history_min, "History length in minutes");
  tabulate->add_option("--lead", opt.tf_min, "Lead time t_f in minutes")->expected(1);
  tabulate->add_option("--out", opt.out)->required();
  add_common(tabulate);

  auto* evaluate = app.add_subcommand("evaluate", "Informedness of nonparametric / inertia / logit models");
  evaluate->add_option("--in", opt.in, "Series JSON");
  evaluate->add_option("--table", opt.table, "Pattern table CSV (nonparametric, in-sample)");
  evaluate->add_option("--model", opt.models, "nonparametric, inertia, logit")->delimiter(',');
  evaluate->add_option("--history", opt.history_min, "History length in minutes");
  evaluate->add_option("--tf", opt.tf_min, "Lead times in minutes (comma list = horizon sweep)")
      ->delimiter(',');
  evaluate->add_option("--mode", opt.mode, "in-sample or split");
  evaluate->add_option("--train-fraction", opt.train_fraction, "Training share in split mode");
  evaluate->add_option("--lambda", opt.lambda, "L1 weight for logit (default: validation grid search)");
  evaluate->add_option("--convergence", opt.convergence_sizes, "Ascending subsample sizes")->delimiter(',');
  evaluate->add_option("--convergence-out", opt.convergence_out);
  evaluate->add_option("--report", opt.report, "Full confusion-count report CSV");
  evaluate->add_option("--save-model", opt.save_model, "Write the trained logit model JSON");
  evaluate->add_option("--out", opt.out)->required();
  add_common(evaluate);

  auto* compare = app.add_subcommand("compare", "Individual vs matched common-pattern informedness");
  compare->add_option("--in", opt.in)->required();
  compare->add_option("--history", opt.history_min, "History length in minutes");
  compare->add_option("--tf", opt.tf_min, "Lead times in minutes; first is the persistence reference")
      ->delimiter(',');
  compare->add_option("--min-instances", opt.min_instances, "Minimum instances per user");
  compare->add_option("--out", opt.out, "Scatter CSV")->required();
  compare->add_option("--persistence", opt.persistence_out, "Persistence correlation CSV");
  add_common(compare);

  auto* correlate_cmd = app.add_subcommand("correlate", "Circadian-corrected activity correlations");
  correlate_cmd->add_option("--in", opt.in)->required();
  correlate_cmd->add_option("--max-lag", opt.max_lag_min, "Largest lag in minutes");
  correlate_cmd->add_option("--anchor-floor", opt.anchor_floor, "Minimum anchors for a reported ratio");
  correlate_cmd->add_option("--out", opt.out)->required();
  add_common(correlate_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  }

  CLI::App* chosen = app.get_subcommands().front();
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    Run run(chosen->get_name(), args, opt);
    const std::string& name = chosen->get_name();
    if (name == "ingest") cmd_ingest(run, opt, err);
    else if (name == "filter") cmd_filter(run, opt);
    else if (name == "profile") cmd_profile(run, opt);
    else if (name == "simulate") cmd_simulate(run, opt);
    else if (name == "tabulate") cmd_tabulate(run, opt);
    else if (name == "evaluate") cmd_evaluate(run, opt);
    else if (name == "compare") cmd_compare(run, opt);
    else if (name == "correlate") cmd_correlate(run, opt);
    run.finish();
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ValidationError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}

}  // namespace actpred::cli
