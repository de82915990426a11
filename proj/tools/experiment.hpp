#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dsmc/models.hpp"
#include "dsmc/pgibbs.hpp"
#include "dsmc/resampling.hpp"

// Experiment harness shared by the CLI subcommands: configuration with JSON
// round-tripping and a stable content hash, the fixed-schema result CSV, and
// the method runners (tree smoother variants, FFBS, particle Gibbs).

namespace dsmc::cli {

// One-dimensional linear-Gaussian test model, x_t = coef * x_{t-1} + shift +
// noise, observed directly with additive noise at every time.
struct LgssmCheckParams {
  double coef = 0.9;
  double shift = 0.0;
  double trans_var = 0.25;
  double init_mean = 0.0;
  double init_var = 1.0;
  double obs_var = 0.25;
};

// Particle-Gibbs tuning knobs that are not already top-level config fields.
struct GibbsTuning {
  double prec_x_shape = 2.0;
  double prec_x_rate = 1.0;
  double prec_y_shape = 2.0;
  double prec_y_rate = 1.0;
  double tau0_sd = 1.0;
  double tau1_sd = 1.0;
  double tau2_sd = 1.0;
  double rwm_step_tau = 0.05;
  double rwm_step_x0 = 0.1;
  int ieks_cold_iterations = 25;
};

struct ExperimentConfig {
  std::string experiment = "cox";  // cox | theta-logistic | constrained-rw |
                                   // lgssm-check
  int horizon = 32;                // T; times run 0..T
  std::size_t n_particles = 256;   // N
  int replicates = 10;
  // Method names: dsmc (dense stitching), dsmc-rs (rejection-lazy), dsmc-mh
  // (Metropolis-lazy), ffbs. Empty selects the experiment's default set.
  std::vector<std::string> methods;
  std::string resampler = "multinomial";  // dense scheme for dsmc + the filter
  std::size_t mh_steps = 16;
  std::uint64_t seed = 1;
  // Data simulation is keyed separately so every replicate smooths the same
  // realization.
  std::uint64_t data_seed = 90210;
  std::string out = "results.csv";
  int threads = 1;
  // Write wall_time_ms as 0 so identical seed + config gives a byte-identical
  // file; measured time is the one physically nondeterministic column.
  bool stable_timing = false;
  double proposal_inflation = 1.0;
  int sweeps = 1000;          // pgibbs only
  std::string data_path;      // observation series, one value per line
  std::string trace_out;      // optional pgibbs per-sweep parameter CSV

  CoxParams cox;
  double rw_sigma = 0.5;
  ThetaLogisticParams theta;
  LgssmCheckParams lgssm;
  GibbsTuning gibbs;
};

// Throws std::invalid_argument with a field-specific message.
void validate_config(const ExperimentConfig& cfg);

// Overlay the JSON object (only the keys present) onto cfg; unknown keys are
// an error. Throws std::invalid_argument on malformed input.
void apply_json_file(const std::string& path, ExperimentConfig& cfg);

// FNV-1a hash (16 hex digits) of the result-determining fields plus, when the
// observations came from a file, a fingerprint of the loaded series.
std::string config_hash(const ExperimentConfig& cfg,
                        const std::vector<double>* loaded_data);

// RFC-4180 field quoting: wraps when the value holds a comma, quote, or line
// break, doubling embedded quotes.
std::string csv_escape(const std::string& field);

// Shortest round-trip decimal form, locale-independent.
std::string format_double(double v);

struct ResultRow {
  std::string experiment;
  int horizon = 0;
  std::size_t n_particles = 0;
  std::string method;
  int replicate = 0;
  std::optional<double> estimate;
  double wall_time_ms = 0.0;
  int levels = 0;
  std::uint64_t weight_evals = 0;
  std::optional<double> log_norm_const;
  std::uint64_t seed = 0;
  std::string hash;
  std::string error;
};

extern const char* const kCsvHeader;
std::string format_row(const ResultRow& row);

// The experiment resolved against its data: the observation series (empty for
// constrained-rw), the effective horizon, and a note to surface on stderr
// when a fallback happened (synthetic substitute for a missing data file).
struct ResolvedData {
  std::vector<double> ys;
  int horizon = 0;
  bool from_file = false;
  std::string note;
};

ResolvedData resolve_data(const ExperimentConfig& cfg);

// Run all configured methods x replicates for one (T, N) setting; appends one
// row per task in method-major order. Returns false when any replicate
// recorded an error. `data` must come from resolve_data on the same config.
bool run_smooth(const ExperimentConfig& cfg, const ResolvedData& data,
                std::vector<ResultRow>& rows);

// Particle-Gibbs chains (theta-logistic only): one row per chain replicate
// with estimate = mean per-time update rate; optionally writes the per-sweep
// parameter trace CSV.
bool run_pgibbs(const ExperimentConfig& cfg, const ResolvedData& data,
                std::vector<ResultRow>& rows);

// Exact-reference self-check on the linear-Gaussian model: smoothed means and
// the normalizing constant against the Kalman/RTS answer, plus the combine
// depth formula. Prints one [PASS]/[FAIL] line per check; returns false on
// any failure.
bool run_oracle_check(const ExperimentConfig& cfg);

// Writes header + rows; throws std::runtime_error when the file cannot be
// opened.
void write_csv(const std::string& path, const std::vector<ResultRow>& rows);

}  // namespace dsmc::cli
