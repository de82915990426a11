#include "experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>

#include <json.hpp>

#include "dsmc/baselines.hpp"
#include "dsmc/kalman.hpp"
#include "dsmc/smoother.hpp"
#include "dsmc/stats.hpp"

namespace dsmc::cli {
namespace {

using nlohmann::json;

constexpr const char* kMethodNames[] = {"dsmc", "dsmc-rs", "dsmc-mh", "ffbs"};
constexpr int kPgibbsMethodId = 4;

int method_id(const std::string& name) {
  for (int i = 0; i < 4; ++i)
    if (name == kMethodNames[i]) return i;
  return -1;
}

// Seeds are salted by a stable per-method identity in the high half, so a
// replicate keeps its streams when the method list is reordered or trimmed,
// and no two (method, replicate) tasks share a stream family.
std::uint64_t derive_seed(std::uint64_t base, int method, int replicate) {
  return base + ((static_cast<std::uint64_t>(method) + 1) << 32) +
         static_cast<std::uint64_t>(replicate);
}

std::vector<std::string> effective_methods(const ExperimentConfig& cfg) {
  if (!cfg.methods.empty()) return cfg.methods;
  if (cfg.experiment == "constrained-rw") return {"dsmc", "dsmc-rs", "ffbs"};
  return {"dsmc", "ffbs"};
}

Resampler dense_resampler(const ExperimentConfig& cfg) {
  auto r = parse_resampler(cfg.resampler);
  if (!r) throw std::invalid_argument("unknown resampler: " + cfg.resampler);
  return *r;
}

void require(bool ok, const char* message) {
  if (!ok) throw std::invalid_argument(message);
}

// ---------------------------------------------------------------- JSON I/O

void expect_keys(const json& j, const char* where,
                 std::initializer_list<const char*> allowed) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed)
      if (item.key() == k) {
        known = true;
        break;
      }
    if (!known)
      throw std::invalid_argument("unknown config key '" + item.key() +
                                  "' in " + where);
  }
}

template <typename T>
void take(const json& j, const char* key, T& into) {
  if (j.contains(key)) j.at(key).get_to(into);
}

void apply_json(const json& j, ExperimentConfig& cfg) {
  expect_keys(j, "the top-level object",
              {"experiment", "T", "N", "replicates", "methods", "resampler",
               "mh_steps", "seed", "data_seed", "out", "threads",
               "stable_timing", "proposal_inflation", "sweeps", "data_path",
               "trace_out", "cox", "rw", "theta", "lgssm", "gibbs"});
  take(j, "experiment", cfg.experiment);
  take(j, "T", cfg.horizon);
  take(j, "N", cfg.n_particles);
  take(j, "replicates", cfg.replicates);
  take(j, "methods", cfg.methods);
  take(j, "resampler", cfg.resampler);
  take(j, "mh_steps", cfg.mh_steps);
  take(j, "seed", cfg.seed);
  take(j, "data_seed", cfg.data_seed);
  take(j, "out", cfg.out);
  take(j, "threads", cfg.threads);
  take(j, "stable_timing", cfg.stable_timing);
  take(j, "proposal_inflation", cfg.proposal_inflation);
  take(j, "sweeps", cfg.sweeps);
  take(j, "data_path", cfg.data_path);
  take(j, "trace_out", cfg.trace_out);
  if (j.contains("cox")) {
    const json& s = j.at("cox");
    expect_keys(s, "\"cox\"", {"mu", "rho", "sigma2", "lambda"});
    take(s, "mu", cfg.cox.mu);
    take(s, "rho", cfg.cox.rho);
    take(s, "sigma2", cfg.cox.sigma2);
    take(s, "lambda", cfg.cox.lambda);
  }
  if (j.contains("rw")) {
    const json& s = j.at("rw");
    expect_keys(s, "\"rw\"", {"sigma"});
    take(s, "sigma", cfg.rw_sigma);
  }
  if (j.contains("theta")) {
    const json& s = j.at("theta");
    expect_keys(s, "\"theta\"", {"tau0", "tau1", "tau2", "q2", "r2"});
    take(s, "tau0", cfg.theta.tau0);
    take(s, "tau1", cfg.theta.tau1);
    take(s, "tau2", cfg.theta.tau2);
    take(s, "q2", cfg.theta.q2);
    take(s, "r2", cfg.theta.r2);
  }
  if (j.contains("lgssm")) {
    const json& s = j.at("lgssm");
    expect_keys(s, "\"lgssm\"",
                {"coef", "shift", "trans_var", "init_mean", "init_var",
                 "obs_var"});
    take(s, "coef", cfg.lgssm.coef);
    take(s, "shift", cfg.lgssm.shift);
    take(s, "trans_var", cfg.lgssm.trans_var);
    take(s, "init_mean", cfg.lgssm.init_mean);
    take(s, "init_var", cfg.lgssm.init_var);
    take(s, "obs_var", cfg.lgssm.obs_var);
  }
  if (j.contains("gibbs")) {
    const json& s = j.at("gibbs");
    expect_keys(s, "\"gibbs\"",
                {"prec_x_shape", "prec_x_rate", "prec_y_shape", "prec_y_rate",
                 "tau0_sd", "tau1_sd", "tau2_sd", "rwm_step_tau",
                 "rwm_step_x0", "ieks_cold_iterations"});
    take(s, "prec_x_shape", cfg.gibbs.prec_x_shape);
    take(s, "prec_x_rate", cfg.gibbs.prec_x_rate);
    take(s, "prec_y_shape", cfg.gibbs.prec_y_shape);
    take(s, "prec_y_rate", cfg.gibbs.prec_y_rate);
    take(s, "tau0_sd", cfg.gibbs.tau0_sd);
    take(s, "tau1_sd", cfg.gibbs.tau1_sd);
    take(s, "tau2_sd", cfg.gibbs.tau2_sd);
    take(s, "rwm_step_tau", cfg.gibbs.rwm_step_tau);
    take(s, "rwm_step_x0", cfg.gibbs.rwm_step_x0);
    take(s, "ieks_cold_iterations", cfg.gibbs.ieks_cold_iterations);
  }
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

void apply_json_file(const std::string& path, ExperimentConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::invalid_argument("malformed JSON in " + path + ": " + e.what());
  }
  if (!j.is_object())
    throw std::invalid_argument("config file must hold a JSON object: " + path);
  apply_json(j, cfg);
}

void validate_config(const ExperimentConfig& cfg) {
  const bool known_experiment =
      cfg.experiment == "cox" || cfg.experiment == "theta-logistic" ||
      cfg.experiment == "constrained-rw" || cfg.experiment == "lgssm-check";
  if (!known_experiment)
    throw std::invalid_argument(
        "unknown experiment: " + cfg.experiment +
        " (expected cox, theta-logistic, constrained-rw, or lgssm-check)");
  require(cfg.horizon >= 1, "T must be at least 1");
  require(cfg.n_particles >= 2, "N must be at least 2");
  require(cfg.replicates >= 1, "replicates must be at least 1");
  require(cfg.sweeps >= 2, "sweeps must be at least 2");
  require(cfg.threads >= 1, "threads must be at least 1");
  require(cfg.mh_steps >= 1, "mh-steps must be at least 1");
  require(cfg.proposal_inflation > 0.0, "proposal inflation must be positive");
  if (!parse_resampler(cfg.resampler))
    throw std::invalid_argument("unknown resampler: " + cfg.resampler);
  for (const auto& m : cfg.methods)
    if (method_id(m) < 0)
      throw std::invalid_argument(
          "unknown method: " + m +
          " (expected dsmc, dsmc-rs, dsmc-mh, or ffbs)");
  require(cfg.cox.sigma2 > 0.0, "cox.sigma2 must be positive");
  require(std::abs(cfg.cox.rho) < 1.0, "cox.rho must lie in (-1, 1)");
  require(std::abs(cfg.cox.rho * cfg.cox.lambda) < 1.0,
          "cox.rho * cox.lambda must lie in (-1, 1)");
  require(cfg.rw_sigma > 0.0, "rw.sigma must be positive");
  require(cfg.theta.q2 > 0.0, "theta.q2 must be positive");
  require(cfg.theta.r2 > 0.0, "theta.r2 must be positive");
  require(cfg.lgssm.trans_var > 0.0, "lgssm.trans_var must be positive");
  require(cfg.lgssm.init_var > 0.0, "lgssm.init_var must be positive");
  require(cfg.lgssm.obs_var > 0.0, "lgssm.obs_var must be positive");
  require(cfg.gibbs.prec_x_shape > 0.0 && cfg.gibbs.prec_x_rate > 0.0 &&
              cfg.gibbs.prec_y_shape > 0.0 && cfg.gibbs.prec_y_rate > 0.0,
          "gibbs precision prior shapes and rates must be positive");
  require(cfg.gibbs.tau0_sd > 0.0 && cfg.gibbs.tau1_sd > 0.0 &&
              cfg.gibbs.tau2_sd > 0.0,
          "gibbs prior standard deviations must be positive");
  require(cfg.gibbs.rwm_step_tau >= 0.0 && cfg.gibbs.rwm_step_x0 >= 0.0,
          "gibbs random-walk steps must be nonnegative");
  require(cfg.gibbs.ieks_cold_iterations >= 1,
          "gibbs.ieks_cold_iterations must be at least 1");
}

std::string config_hash(const ExperimentConfig& cfg,
                        const std::vector<double>* loaded_data) {
  json j;
  j["experiment"] = cfg.experiment;
  j["T"] = cfg.horizon;
  j["N"] = cfg.n_particles;
  j["replicates"] = cfg.replicates;
  j["methods"] = effective_methods(cfg);
  j["resampler"] = cfg.resampler;
  j["mh_steps"] = cfg.mh_steps;
  j["seed"] = cfg.seed;
  j["data_seed"] = cfg.data_seed;
  j["proposal_inflation"] = cfg.proposal_inflation;
  j["sweeps"] = cfg.sweeps;
  j["cox"] = {{"mu", cfg.cox.mu},
              {"rho", cfg.cox.rho},
              {"sigma2", cfg.cox.sigma2},
              {"lambda", cfg.cox.lambda}};
  j["rw_sigma"] = cfg.rw_sigma;
  j["theta"] = {{"tau0", cfg.theta.tau0},
                {"tau1", cfg.theta.tau1},
                {"tau2", cfg.theta.tau2},
                {"q2", cfg.theta.q2},
                {"r2", cfg.theta.r2}};
  j["lgssm"] = {{"coef", cfg.lgssm.coef},
                {"shift", cfg.lgssm.shift},
                {"trans_var", cfg.lgssm.trans_var},
                {"init_mean", cfg.lgssm.init_mean},
                {"init_var", cfg.lgssm.init_var},
                {"obs_var", cfg.lgssm.obs_var}};
  j["gibbs"] = {{"prec_x_shape", cfg.gibbs.prec_x_shape},
                {"prec_x_rate", cfg.gibbs.prec_x_rate},
                {"prec_y_shape", cfg.gibbs.prec_y_shape},
                {"prec_y_rate", cfg.gibbs.prec_y_rate},
                {"tau0_sd", cfg.gibbs.tau0_sd},
                {"tau1_sd", cfg.gibbs.tau1_sd},
                {"tau2_sd", cfg.gibbs.tau2_sd},
                {"rwm_step_tau", cfg.gibbs.rwm_step_tau},
                {"rwm_step_x0", cfg.gibbs.rwm_step_x0},
                {"ieks_cold_iterations", cfg.gibbs.ieks_cold_iterations}};
  if (loaded_data) {
    std::string bytes;
    for (double v : *loaded_data) {
      bytes += format_double(v);
      bytes += '\n';
    }
    char fp[17];
    std::snprintf(fp, sizeof fp, "%016llx",
                  static_cast<unsigned long long>(fnv1a(bytes)));
    j["data_fingerprint"] = fp;
  }
  char out[17];
  std::snprintf(out, sizeof out, "%016llx",
                static_cast<unsigned long long>(fnv1a(j.dump())));
  return out;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string quoted = "\"";
  for (char c : field) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  quoted += '"';
  return quoted;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

const char* const kCsvHeader =
    "experiment,T,N,method,replicate,estimate,wall_time_ms,levels,"
    "weight_evals,log_norm_const,seed,config_hash,error";

std::string format_row(const ResultRow& row) {
  std::string line;
  auto add = [&line](const std::string& field) {
    if (!line.empty()) line += ',';
    line += csv_escape(field);
  };
  add(row.experiment);
  add(std::to_string(row.horizon));
  add(std::to_string(row.n_particles));
  add(row.method);
  add(std::to_string(row.replicate));
  add(row.estimate ? format_double(*row.estimate) : "");
  add(format_double(row.wall_time_ms));
  add(std::to_string(row.levels));
  add(std::to_string(row.weight_evals));
  add(row.log_norm_const ? format_double(*row.log_norm_const) : "");
  add(std::to_string(row.seed));
  add(row.hash);
  add(row.error);
  return line;
}

void write_csv(const std::string& path, const std::vector<ResultRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open output file: " + path);
  out << kCsvHeader << '\n';
  for (const auto& row : rows) out << format_row(row) << '\n';
  if (!out) throw std::runtime_error("failed writing output file: " + path);
}

namespace {

// -------------------------------------------------------------- data layer

std::vector<double> load_series(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open data file: " + path);
  std::vector<double> values;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    const std::string token = line.substr(first, last - first + 1);
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end != token.c_str() + token.size())
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": not a number: '" + token + "'");
    values.push_back(v);
  }
  return values;
}

LinearGaussianModel build_lgssm(const LgssmCheckParams& p, int horizon) {
  LinearGaussianModel m;
  m.horizon = horizon;
  m.m0 = Eigen::VectorXd::Constant(1, p.init_mean);
  m.P0 = Eigen::MatrixXd::Constant(1, 1, p.init_var);
  const std::size_t len = static_cast<std::size_t>(horizon) + 1;
  m.F.assign(len, Eigen::MatrixXd::Constant(1, 1, p.coef));
  m.b.assign(len, Eigen::VectorXd::Constant(1, p.shift));
  m.Q.assign(len, Eigen::MatrixXd::Constant(1, 1, p.trans_var));
  m.H.assign(len, Eigen::MatrixXd::Constant(1, 1, 1.0));
  m.R.assign(len, Eigen::MatrixXd::Constant(1, 1, p.obs_var));
  m.y.assign(len, Eigen::VectorXd::Zero(1));
  m.has_obs.assign(len, 1);
  return m;
}

}  // namespace

ResolvedData resolve_data(const ExperimentConfig& cfg) {
  ResolvedData data;
  data.horizon = cfg.horizon;
  if (cfg.experiment == "cox") {
    data.ys = simulate_cox(cfg.cox, cfg.horizon, cfg.data_seed).ys;
  } else if (cfg.experiment == "constrained-rw") {
    // No observations: the conditioning lives in the indicator potentials.
  } else if (cfg.experiment == "lgssm-check") {
    LinearGaussianModel m = build_lgssm(cfg.lgssm, cfg.horizon);
    RngStream stream({cfg.data_seed, 0, 0, StreamRole::data_sim});
    const LgssmSample sample = simulate_lgssm(m, stream);
    data.ys.resize(sample.y.size());
    for (std::size_t t = 0; t < sample.y.size(); ++t)
      data.ys[t] = sample.y[t](0);
  } else {  // theta-logistic
    const std::string path =
        cfg.data_path.empty() ? "data/nutria.txt" : cfg.data_path;
    std::ifstream probe(path);
    if (probe) {
      data.ys = load_series(path);
      if (data.ys.size() < 2)
        throw std::runtime_error("data file holds fewer than 2 values: " +
                                 path);
      data.horizon = static_cast<int>(data.ys.size()) - 1;
      data.from_file = true;
      data.note = "loaded " + std::to_string(data.ys.size()) +
                  " observations from " + path +
                  " (T = " + std::to_string(data.horizon) + ")";
    } else if (!cfg.data_path.empty()) {
      throw std::runtime_error("cannot open data file: " + cfg.data_path);
    } else {
      data.ys =
          simulate_theta_logistic(cfg.theta, cfg.horizon, cfg.data_seed).ys;
      data.note = "warning: " + path +
                  " not found; smoothing synthetic theta-logistic data (T = " +
                  std::to_string(cfg.horizon) +
                  ", data seed = " + std::to_string(cfg.data_seed) + ")";
    }
  }
  return data;
}

namespace {

// -------------------------------------------------------- method execution

struct Prepared {
  FeynmanKacModel model;
  std::function<double(const double*)> functional;
};

Prepared prepare(const ExperimentConfig& cfg, const ResolvedData& data) {
  Prepared prep;
  const int T = data.horizon;
  if (cfg.experiment == "cox") {
    prep.model = make_cox_model(cfg.cox, data.ys);
    prep.functional = [p = cfg.cox, T](const double* path) {
      return cox_score(p, path, T);
    };
  } else if (cfg.experiment == "constrained-rw") {
    prep.model = make_constrained_rw(cfg.rw_sigma, T);
    prep.functional = [sigma = cfg.rw_sigma, T](const double* path) {
      return rw_score(sigma, path, T);
    };
  } else if (cfg.experiment == "lgssm-check") {
    LinearGaussianModel m = build_lgssm(cfg.lgssm, T);
    for (int t = 0; t <= T; ++t)
      m.y[static_cast<std::size_t>(t)](0) = data.ys[static_cast<std::size_t>(t)];
    const KalmanResult kr = kalman_smooth(m);
    prep.model =
        make_lgssm_fk(m, proposal_marginals(kr, cfg.proposal_inflation));
    prep.functional = [T](const double* path) { return path[T]; };
  } else {  // theta-logistic
    const NonlinearGaussianModel nl =
        theta_logistic_nonlinear(cfg.theta, data.ys);
    const IteratedSmoothResult it =
        iterated_smooth(nl, cfg.gibbs.ieks_cold_iterations);
    prep.model = make_theta_logistic(
        cfg.theta, data.ys,
        proposal_marginals(it.kr, cfg.proposal_inflation));
    prep.functional = [T](const double* path) { return path[T]; };
  }
  return prep;
}

double block_functional_mean(const BlockEstimate& block,
                             const std::function<double(const double*)>& f) {
  std::vector<double> buf(static_cast<std::size_t>(block.len()) *
                          static_cast<std::size_t>(block.dim));
  double acc = 0.0;
  for (std::size_t i = 0; i < block.n; ++i) {
    const double lw = block.log_w[i];
    if (!std::isfinite(lw)) continue;
    copy_path(block, i, buf.data());
    acc += std::exp(lw) * f(buf.data());
  }
  return acc;
}

// Runs body(0..n_tasks-1) across the requested workers; each index is claimed
// exactly once. The body owns its error handling.
void run_tasks(int threads, std::size_t n_tasks,
               const std::function<void(std::size_t)>& body) {
  std::atomic<std::size_t> next{0};
  auto worker = [&next, n_tasks, &body] {
    for (std::size_t i; (i = next.fetch_add(1)) < n_tasks;) body(i);
  };
  const int extra = static_cast<int>(
      std::min<std::size_t>(n_tasks > 0 ? n_tasks - 1 : 0,
                            static_cast<std::size_t>(threads - 1)));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(extra));
  for (int k = 0; k < extra; ++k) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
}

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - t0)
      .count();
}

}  // namespace

bool run_smooth(const ExperimentConfig& cfg, const ResolvedData& data,
                std::vector<ResultRow>& rows) {
  const std::vector<std::string> methods = effective_methods(cfg);
  const Resampler dense = dense_resampler(cfg);
  if (resampler_is_lazy(dense))
    throw std::invalid_argument(
        "the dsmc method stitches with a dense scheme (multinomial or "
        "systematic); the lazy schemes are the methods dsmc-rs and dsmc-mh");
  const Prepared prep = prepare(cfg, data);
  const std::string hash =
      config_hash(cfg, data.from_file ? &data.ys : nullptr);

  const std::size_t base = rows.size();
  const std::size_t n_tasks =
      methods.size() * static_cast<std::size_t>(cfg.replicates);
  rows.resize(base + n_tasks);

  run_tasks(cfg.threads, n_tasks, [&](std::size_t task) {
    const std::size_t m = task / static_cast<std::size_t>(cfg.replicates);
    const int rep = static_cast<int>(task % static_cast<std::size_t>(cfg.replicates));
    const std::string& method = methods[m];
    ResultRow& row = rows[base + task];
    row.experiment = cfg.experiment;
    row.horizon = data.horizon;
    row.n_particles = cfg.n_particles;
    row.method = method;
    row.replicate = rep;
    row.seed = derive_seed(cfg.seed, method_id(method), rep);
    row.hash = hash;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      if (method == "ffbs") {
        const FilterOutput filter =
            run_particle_filter(prep.model, cfg.n_particles, dense, row.seed);
        const FfbsResult draws =
            ffbs_sample(prep.model, filter, cfg.n_particles, row.seed);
        double acc = 0.0;
        for (std::size_t i = 0; i < draws.n_draws; ++i)
          acc += prep.functional(draws.path(i));
        row.estimate = acc / static_cast<double>(draws.n_draws);
        row.log_norm_const = filter.log_likelihood;
        row.weight_evals = draws.density_evals;
        row.levels = 0;
      } else {
        SmootherOptions opts;
        opts.n_particles = cfg.n_particles;
        opts.resampler = method == "dsmc-rs"  ? Resampler::rejection_lazy
                         : method == "dsmc-mh" ? Resampler::mh_lazy
                                                : dense;
        opts.mh_steps = cfg.mh_steps;
        opts.seed = row.seed;
        const RunResult res = run_smoother(prep.model, opts);
        row.estimate = block_functional_mean(res.root, prep.functional);
        row.levels = res.meta.levels;
        row.weight_evals = res.meta.weight_evals;
        row.log_norm_const = res.meta.log_norm_const;
      }
    } catch (const std::exception& e) {
      row.estimate.reset();
      row.error = e.what();
    }
    row.wall_time_ms = cfg.stable_timing ? 0.0 : elapsed_ms(t0);
  });

  bool ok = true;
  for (std::size_t i = base; i < rows.size(); ++i)
    if (!rows[i].error.empty()) ok = false;
  return ok;
}

bool run_pgibbs(const ExperimentConfig& cfg, const ResolvedData& data,
                std::vector<ResultRow>& rows) {
  if (cfg.experiment != "theta-logistic")
    throw std::invalid_argument(
        "pgibbs runs the theta-logistic experiment only");
  if (cfg.theta.tau1 <= 0.0 || cfg.theta.tau2 <= 0.0)
    throw std::invalid_argument(
        "pgibbs needs positive initial theta.tau1 and theta.tau2 (the prior "
        "support)");

  ThetaLogisticGibbsConfig g;
  g.prec_x_shape = cfg.gibbs.prec_x_shape;
  g.prec_x_rate = cfg.gibbs.prec_x_rate;
  g.prec_y_shape = cfg.gibbs.prec_y_shape;
  g.prec_y_rate = cfg.gibbs.prec_y_rate;
  g.tau0_sd = cfg.gibbs.tau0_sd;
  g.tau1_sd = cfg.gibbs.tau1_sd;
  g.tau2_sd = cfg.gibbs.tau2_sd;
  g.rwm_step_tau = cfg.gibbs.rwm_step_tau;
  g.rwm_step_x0 = cfg.gibbs.rwm_step_x0;
  g.n_particles = cfg.n_particles;
  g.resampler = dense_resampler(cfg);
  g.ieks_cold_iterations = cfg.gibbs.ieks_cold_iterations;
  g.proposal_inflation = cfg.proposal_inflation;

  const std::string method = resampler_is_lazy(g.resampler)
                                 ? (g.resampler == Resampler::mh_lazy
                                        ? "dsmc-mh"
                                        : "dsmc-rs")
                                 : "dsmc";
  const std::string hash =
      config_hash(cfg, data.from_file ? &data.ys : nullptr);

  const std::size_t base = rows.size();
  rows.resize(base + static_cast<std::size_t>(cfg.replicates));
  std::vector<ThetaLogisticChain> chains(
      static_cast<std::size_t>(cfg.replicates));

  run_tasks(cfg.threads, static_cast<std::size_t>(cfg.replicates),
            [&](std::size_t task) {
              ResultRow& row = rows[base + task];
              row.experiment = cfg.experiment;
              row.horizon = data.horizon;
              row.n_particles = cfg.n_particles;
              row.method = method;
              row.replicate = static_cast<int>(task);
              row.seed = derive_seed(cfg.seed, kPgibbsMethodId,
                                     static_cast<int>(task));
              row.hash = hash;
              row.levels = reference_tree_depth(data.horizon);
              const auto t0 = std::chrono::steady_clock::now();
              try {
                chains[task] = run_theta_logistic_pgibbs(
                    data.ys, cfg.theta, g, cfg.sweeps, row.seed);
                row.estimate =
                    stats::mean(update_rate(chains[task].stars));
                row.weight_evals = chains[task].weight_evals;
              } catch (const std::exception& e) {
                row.estimate.reset();
                row.error = e.what();
              }
              row.wall_time_ms = cfg.stable_timing ? 0.0 : elapsed_ms(t0);
            });

  if (!cfg.trace_out.empty()) {
    std::ofstream trace(cfg.trace_out, std::ios::binary);
    if (!trace)
      throw std::runtime_error("cannot open trace file: " + cfg.trace_out);
    trace << "chain,sweep,tau0,tau1,tau2,q2,r2\n";
    for (std::size_t c = 0; c < chains.size(); ++c) {
      for (std::size_t s = 0; s < chains[c].thetas.size(); ++s) {
        const ThetaLogisticParams& p = chains[c].thetas[s];
        trace << c << ',' << s + 1 << ',' << format_double(p.tau0) << ','
              << format_double(p.tau1) << ',' << format_double(p.tau2) << ','
              << format_double(p.q2) << ',' << format_double(p.r2) << '\n';
      }
    }
  }

  bool ok = true;
  for (std::size_t i = base; i < rows.size(); ++i)
    if (!rows[i].error.empty()) ok = false;
  return ok;
}

bool run_oracle_check(const ExperimentConfig& cfg) {
  if (cfg.replicates < 4)
    throw std::invalid_argument(
        "check-oracle needs at least 4 replicates for its standard errors");
  bool all_ok = true;
  auto report = [&all_ok](bool ok, const std::string& what) {
    std::printf("[%s] %s\n", ok ? "PASS" : "FAIL", what.c_str());
    if (!ok) all_ok = false;
  };

  {
    bool depth_ok = true;
    for (int t : {1, 9, 31, 100, 511})
      if (build_schedule(t).levels != reference_tree_depth(t))
        depth_ok = false;
    report(depth_ok,
           "combine depth equals ceil(log2(T+1)) for T in {1, 9, 31, 100, "
           "511}");
  }

  const int T = cfg.horizon;
  LinearGaussianModel m = build_lgssm(cfg.lgssm, T);
  RngStream stream({cfg.data_seed, 0, 0, StreamRole::data_sim});
  const LgssmSample sample = simulate_lgssm(m, stream);
  for (int t = 0; t <= T; ++t)
    m.y[static_cast<std::size_t>(t)] = sample.y[static_cast<std::size_t>(t)];
  const KalmanResult kr = kalman_smooth(m);
  const FeynmanKacModel fk =
      make_lgssm_fk(m, proposal_marginals(kr, cfg.proposal_inflation));

  const int reps = cfg.replicates;
  std::vector<std::vector<double>> means(
      static_cast<std::size_t>(T) + 1,
      std::vector<double>(static_cast<std::size_t>(reps)));
  std::vector<double> ratios(static_cast<std::size_t>(reps));
  for (int r = 0; r < reps; ++r) {
    SmootherOptions opts;
    opts.n_particles = cfg.n_particles;
    opts.seed = derive_seed(cfg.seed, 0, r);
    const RunResult res = run_smoother(fk, opts);
    for (int t = 0; t <= T; ++t)
      means[static_cast<std::size_t>(t)][static_cast<std::size_t>(r)] =
          weighted_time_mean(res.root, t)[0];
    ratios[static_cast<std::size_t>(r)] =
        std::exp(*res.meta.log_norm_const - kr.log_likelihood);
  }

  double worst_z = 0.0;
  for (int t = 0; t <= T; ++t) {
    const auto& col = means[static_cast<std::size_t>(t)];
    const double diff =
        stats::mean(col) - kr.smooth_mean[static_cast<std::size_t>(t)](0);
    const double se =
        std::sqrt(stats::variance(col) / static_cast<double>(reps));
    const double z = se > 0.0 ? std::abs(diff) / se
                              : (diff == 0.0 ? 0.0
                                             : std::numeric_limits<double>::infinity());
    worst_z = std::max(worst_z, z);
  }
  report(worst_z <= 4.0, "smoothed means track the exact RTS answer: max |z| "
                         "= " +
                             format_double(worst_z) + " across " +
                             std::to_string(T + 1) +
                             " times (threshold 4)");

  const double ratio_mean = stats::mean(ratios);
  const double ratio_se =
      std::sqrt(stats::variance(ratios) / static_cast<double>(reps));
  report(std::abs(ratio_mean - 1.0) <= 4.0 * ratio_se,
         "normalizing-constant estimate is unbiased: mean exp(lnZ - exact) = " +
             format_double(ratio_mean) + " +/- " + format_double(ratio_se) +
             " (within 4 SE of 1)");
  return all_ok;
}

}  // namespace dsmc::cli
