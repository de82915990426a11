#include <cmath>
#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dsmc/stats.hpp"
#include "experiment.hpp"

// Command-line harness around the tree smoother, the FFBS baseline, and the
// theta-logistic particle-Gibbs sampler. Every run writes the fixed-schema
// result CSV; summaries go to stdout, warnings to stderr.

namespace {

using dsmc::cli::ExperimentConfig;
using dsmc::cli::ResultRow;

void print_summary(const std::vector<ResultRow>& rows,
                   const std::string& out_path) {
  std::vector<std::string> methods;
  for (const auto& row : rows) {
    bool seen = false;
    for (const auto& m : methods) seen = seen || m == row.method;
    if (!seen) methods.push_back(row.method);
  }
  std::printf("wrote %zu rows to %s\n", rows.size(), out_path.c_str());
  for (const auto& method : methods) {
    std::vector<double> estimates, walls;
    int failed = 0, total = 0;
    for (const auto& row : rows) {
      if (row.method != method) continue;
      ++total;
      if (row.error.empty() && row.estimate) {
        estimates.push_back(*row.estimate);
        walls.push_back(row.wall_time_ms);
      } else {
        ++failed;
      }
    }
    std::string line = "  " + method + ": " +
                       std::to_string(total - failed) + "/" +
                       std::to_string(total) + " replicates ok";
    if (!estimates.empty()) {
      line += ", estimate mean " +
              dsmc::cli::format_double(dsmc::stats::mean(estimates));
      if (estimates.size() >= 2)
        line += ", sd " + dsmc::cli::format_double(
                              std::sqrt(dsmc::stats::variance(estimates)));
      line += ", mean wall " +
              dsmc::cli::format_double(dsmc::stats::mean(walls)) + " ms";
    }
    std::printf("%s\n", line.c_str());
  }
}

std::vector<int> parse_int_list(const std::vector<int>& raw,
                                const char* flag) {
  if (raw.empty())
    throw std::invalid_argument(std::string(flag) +
                                " needs at least one value");
  for (int v : raw)
    if (v < 1)
      throw std::invalid_argument(std::string(flag) +
                                  " entries must be at least 1");
  return raw;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "dsmc: divide-and-conquer particle smoothing and particle Gibbs "
      "experiments"};
  app.require_subcommand(1);

  std::string config_path, experiment, resampler, out, data_path, trace_out;
  int horizon = 0, replicates = 0, threads = 0, sweeps = 0;
  std::size_t n_particles = 0, mh_steps = 0;
  std::uint64_t seed = 0, data_seed = 0;
  double inflation = 0.0;
  bool stable_timing = false;
  std::vector<std::string> methods;
  std::vector<int> t_list, n_list;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path,
                    "JSON config file; flags override its values");
    sub->add_option("--experiment", experiment,
                    "cox, theta-logistic, constrained-rw, or lgssm-check");
    sub->add_option("--T", horizon, "time horizon (times run 0..T)");
    sub->add_option("--N", n_particles, "particles per block");
    sub->add_option("--replicates", replicates, "independent repetitions");
    sub->add_option("--resampler", resampler,
                    "dense stitching scheme: multinomial or systematic");
    sub->add_option("--mh-steps", mh_steps,
                    "chain length per slot for the dsmc-mh method");
    sub->add_option("--seed", seed, "base inference seed");
    sub->add_option("--data-seed", data_seed,
                    "seed for simulating the shared data set");
    sub->add_option("--out", out, "result CSV path");
    sub->add_option("--threads", threads, "worker threads over replicates");
    sub->add_option("--inflation", inflation,
                    "proposal variance inflation factor");
    sub->add_option("--data", data_path,
                    "observation series, one value per line");
    sub->add_flag("--stable-timing", stable_timing,
                  "write wall_time_ms as 0 for byte-stable output");
  };

  CLI::App* smooth = app.add_subcommand(
      "smooth", "run smoothing methods and write one CSV row per replicate");
  add_common(smooth);
  smooth->add_option("--methods", methods,
                     "subset of dsmc,dsmc-rs,dsmc-mh,ffbs")
      ->delimiter(',');

  CLI::App* pgibbs = app.add_subcommand(
      "pgibbs", "run theta-logistic particle-Gibbs chains");
  add_common(pgibbs);
  pgibbs->add_option("--sweeps", sweeps, "Gibbs sweeps per chain");
  pgibbs->add_option("--trace", trace_out,
                     "also write per-sweep parameter draws to this CSV");

  CLI::App* bench = app.add_subcommand(
      "bench", "sweep a grid of T and N values with the smooth runner");
  add_common(bench);
  bench->add_option("--methods", methods,
                    "subset of dsmc,dsmc-rs,dsmc-mh,ffbs")
      ->delimiter(',');
  bench->add_option("--T-list", t_list, "comma-separated horizons")
      ->delimiter(',');
  bench->add_option("--N-list", n_list, "comma-separated particle counts")
      ->delimiter(',');

  CLI::App* check = app.add_subcommand(
      "check-oracle",
      "compare the smoother against the exact Kalman/RTS answer");
  add_common(check);

  CLI11_PARSE(app, argc, argv);
  CLI::App* sub = app.get_subcommands().front();

  try {
    ExperimentConfig cfg;
    if (sub->count("--config")) dsmc::cli::apply_json_file(config_path, cfg);
    if (sub->count("--experiment")) cfg.experiment = experiment;
    if (sub->count("--T")) cfg.horizon = horizon;
    if (sub->count("--N")) cfg.n_particles = n_particles;
    if (sub->count("--replicates")) cfg.replicates = replicates;
    if (sub->count("--resampler")) cfg.resampler = resampler;
    if (sub->count("--mh-steps")) cfg.mh_steps = mh_steps;
    if (sub->count("--seed")) cfg.seed = seed;
    if (sub->count("--data-seed")) cfg.data_seed = data_seed;
    if (sub->count("--out")) cfg.out = out;
    if (sub->count("--threads")) cfg.threads = threads;
    if (sub->count("--inflation")) cfg.proposal_inflation = inflation;
    if (sub->count("--data")) cfg.data_path = data_path;
    if (sub->count("--stable-timing")) cfg.stable_timing = true;
    if (sub == smooth || sub == bench)
      if (sub->count("--methods")) cfg.methods = methods;
    if (sub == pgibbs) {
      if (sub->count("--sweeps")) cfg.sweeps = sweeps;
      if (sub->count("--trace")) cfg.trace_out = trace_out;
      if (!sub->count("--experiment") && !sub->count("--config"))
        cfg.experiment = "theta-logistic";
    }
    dsmc::cli::validate_config(cfg);

    if (sub == check) {
      return dsmc::cli::run_oracle_check(cfg) ? 0 : 1;
    }

    std::vector<ResultRow> rows;
    bool ok = true;
    if (sub == smooth) {
      const auto data = dsmc::cli::resolve_data(cfg);
      if (!data.note.empty()) std::fprintf(stderr, "%s\n", data.note.c_str());
      ok = dsmc::cli::run_smooth(cfg, data, rows);
    } else if (sub == pgibbs) {
      const auto data = dsmc::cli::resolve_data(cfg);
      if (!data.note.empty()) std::fprintf(stderr, "%s\n", data.note.c_str());
      ok = dsmc::cli::run_pgibbs(cfg, data, rows);
    } else {  // bench
      const auto ts = parse_int_list(t_list.empty()
                                         ? std::vector<int>{cfg.horizon}
                                         : t_list,
                                     "--T-list");
      const auto ns =
          parse_int_list(n_list.empty()
                             ? std::vector<int>{static_cast<int>(
                                   cfg.n_particles)}
                             : n_list,
                         "--N-list");
      for (int t : ts) {
        ExperimentConfig grid_cfg = cfg;
        grid_cfg.horizon = t;
        const auto data = dsmc::cli::resolve_data(grid_cfg);
        if (!data.note.empty())
          std::fprintf(stderr, "%s\n", data.note.c_str());
        for (int n : ns) {
          grid_cfg.n_particles = static_cast<std::size_t>(n);
          ok = dsmc::cli::run_smooth(grid_cfg, data, rows) && ok;
        }
      }
    }
    dsmc::cli::write_csv(cfg.out, rows);
    print_summary(rows, cfg.out);
    if (!ok)
      std::fprintf(stderr,
                   "error: some replicates failed; see the error column\n");
    return ok ? 0 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
