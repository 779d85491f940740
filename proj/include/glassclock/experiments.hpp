#pragma once

// Batch experiments: configuration, parameter sweeps, replicate scheduling
// and the runners that turn simulations into TrialResult records.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "glassclock/aux_block.hpp"
#include "glassclock/dynamics.hpp"
#include "glassclock/errors.hpp"
#include "glassclock/hamiltonian.hpp"
#include "glassclock/hypercube.hpp"
#include "glassclock/limit_laws.hpp"
#include "glassclock/rng.hpp"
#include "glassclock/scales.hpp"
#include "glassclock/stats.hpp"

namespace glassclock {

inline constexpr const char* kVersion = "glassclock 0.1.0";

inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = {
      "aging",         "fixed-time-law",   "sup-distance", "block-exceedance",
      "resample-exceedance", "poisson-blocks", "sa-constants", "comparison-bound",
      "bd-mixing",     "pair-counts"};
  return names;
}

struct ExperimentConfig {
  std::string name;
  // Model sweep lists; the cartesian product is run with N outermost.
  std::vector<int> N{64};
  std::vector<int> p{2};
  std::vector<double> beta{1.0};
  std::vector<double> c{0.3};
  std::vector<double> omega{0.81};
  std::vector<double> epsilon_aging{0.5};
  // Experiment axes.
  std::vector<double> theta{1.0};
  std::vector<double> t{1.0};
  std::vector<double> x{1.0};
  std::vector<double> delta{1.0};
  std::vector<double> rho{1.0, 10.0, 100.0};
  std::vector<double> alpha{1e-2, 1e-3};
  std::vector<int> distance{};

  std::string backend = "auto";  // auto | exact | conditional | rem
  std::size_t window = 0;        // conditional backend window; 0 means 4 nu
  std::size_t replicates = 200;
  std::uint64_t seed = 0;
  double T = 1.0;
  double horizon_factor = 20.0;
  bool conditional_on_walk = false;
  double sup_threshold = 0.25;
  std::size_t instances = 50;
  int n_max = 4;
  std::size_t mc_samples = 200000;
  std::size_t steps = 0;  // pair-counts trajectory length; 0 means 4 nu
  double mixing_K = 5.0;
  std::uint64_t step_cap = 1000000;
  double tail_tol = 1e-10;
};

struct TrialResult {
  std::string experiment;
  nlohmann::json params = nlohmann::json::object();
  double estimate = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  std::size_t truncated_count = 0;
  std::size_t replicates = 0;
  nlohmann::json extra = nlohmann::json::object();

  nlohmann::json to_json() const {
    return {{"experiment", experiment}, {"params", params},   {"estimate", estimate},
            {"ci_lo", ci_lo},           {"ci_hi", ci_hi},     {"truncated_count", truncated_count},
            {"replicates", replicates}, {"extra", extra}};
  }

  static TrialResult from_json(const nlohmann::json& j) {
    TrialResult r;
    r.experiment = j.at("experiment").get<std::string>();
    r.params = j.at("params");
    r.estimate = j.at("estimate").get<double>();
    r.ci_lo = j.at("ci_lo").get<double>();
    r.ci_hi = j.at("ci_hi").get<double>();
    r.truncated_count = j.at("truncated_count").get<std::size_t>();
    r.replicates = j.at("replicates").get<std::size_t>();
    r.extra = j.value("extra", nlohmann::json::object());
    return r;
  }
};

// ---------------------------------------------------------------------------
// Configuration ingestion.

namespace detail {

template <class T>
std::vector<T> as_list(const nlohmann::json& v, const std::string& key) {
  try {
    if (v.is_array()) {
      if (v.empty()) throw InvalidParameter("config: list '" + key + "' is empty");
      return v.get<std::vector<T>>();
    }
    return {v.get<T>()};
  } catch (const nlohmann::json::exception& e) {
    throw InvalidParameter("config: bad value for '" + key + "': " + e.what());
  }
}

template <class T>
T as_scalar(const nlohmann::json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidParameter("config: bad value for '" + key + "': " + e.what());
  }
}

}  // namespace detail

/// Reads one experiment object. Model fields may be scalars or lists under
/// "model"; unknown keys anywhere are rejected.
inline ExperimentConfig experiment_from_json(const nlohmann::json& j) {
  using detail::as_list;
  using detail::as_scalar;
  if (!j.is_object()) throw InvalidParameter("config: experiment must be a JSON object");
  ExperimentConfig cfg;
  for (const auto& [key, v] : j.items()) {
    if (key == "experiment") {
      cfg.name = as_scalar<std::string>(v, key);
    } else if (key == "model") {
      if (!v.is_object()) throw InvalidParameter("config: 'model' must be an object");
      for (const auto& [mk, mv] : v.items()) {
        if (mk == "N") cfg.N = as_list<int>(mv, mk);
        else if (mk == "p") cfg.p = as_list<int>(mv, mk);
        else if (mk == "beta") cfg.beta = as_list<double>(mv, mk);
        else if (mk == "c") cfg.c = as_list<double>(mv, mk);
        else if (mk == "omega") cfg.omega = as_list<double>(mv, mk);
        else if (mk == "epsilon_aging") cfg.epsilon_aging = as_list<double>(mv, mk);
        else if (mk == "theta") cfg.theta = as_list<double>(mv, mk);
        else throw InvalidParameter("unknown parameter key: " + mk);
      }
    } else if (key == "theta") cfg.theta = as_list<double>(v, key);
    else if (key == "t") cfg.t = as_list<double>(v, key);
    else if (key == "x") cfg.x = as_list<double>(v, key);
    else if (key == "delta") cfg.delta = as_list<double>(v, key);
    else if (key == "rho") cfg.rho = as_list<double>(v, key);
    else if (key == "alpha") cfg.alpha = as_list<double>(v, key);
    else if (key == "distance") cfg.distance = as_list<int>(v, key);
    else if (key == "backend") cfg.backend = as_scalar<std::string>(v, key);
    else if (key == "window") cfg.window = as_scalar<std::size_t>(v, key);
    else if (key == "replicates") cfg.replicates = as_scalar<std::size_t>(v, key);
    else if (key == "seed") cfg.seed = as_scalar<std::uint64_t>(v, key);
    else if (key == "T") cfg.T = as_scalar<double>(v, key);
    else if (key == "horizon_factor") cfg.horizon_factor = as_scalar<double>(v, key);
    else if (key == "conditional_on_walk") cfg.conditional_on_walk = as_scalar<bool>(v, key);
    else if (key == "sup_threshold") cfg.sup_threshold = as_scalar<double>(v, key);
    else if (key == "instances") cfg.instances = as_scalar<std::size_t>(v, key);
    else if (key == "n_max") cfg.n_max = as_scalar<int>(v, key);
    else if (key == "mc_samples") cfg.mc_samples = as_scalar<std::size_t>(v, key);
    else if (key == "steps") cfg.steps = as_scalar<std::size_t>(v, key);
    else if (key == "mixing_K") cfg.mixing_K = as_scalar<double>(v, key);
    else if (key == "step_cap") cfg.step_cap = as_scalar<std::uint64_t>(v, key);
    else if (key == "tail_tol") cfg.tail_tol = as_scalar<double>(v, key);
    else throw InvalidParameter("config: unknown key '" + key + "'");
  }
  const auto& names = experiment_names();
  if (std::find(names.begin(), names.end(), cfg.name) == names.end())
    throw InvalidParameter("config: unknown experiment '" + cfg.name + "'");
  if (cfg.backend != "auto" && cfg.backend != "exact" && cfg.backend != "conditional" &&
      cfg.backend != "rem")
    throw InvalidParameter("config: backend must be auto, exact, conditional or rem");
  if (cfg.replicates < 1) throw InvalidParameter("config: replicates must be >= 1");
  if (!(cfg.T > 0.0)) throw InvalidParameter("config: T must be > 0");
  return cfg;
}

/// A config file holds either one experiment object or
/// {"seed": s, "experiments": [...]}; a top-level seed applies to every
/// experiment that does not set its own.
inline std::vector<ExperimentConfig> configs_from_json(const nlohmann::json& j) {
  std::vector<ExperimentConfig> out;
  if (j.is_object() && j.contains("experiments")) {
    std::optional<std::uint64_t> seed;
    for (const auto& [key, v] : j.items()) {
      if (key == "seed") seed = detail::as_scalar<std::uint64_t>(v, key);
      else if (key != "experiments") throw InvalidParameter("config: unknown key '" + key + "'");
    }
    for (const auto& e : j.at("experiments")) {
      auto cfg = experiment_from_json(e);
      if (seed && !e.contains("seed")) cfg.seed = *seed;
      out.push_back(std::move(cfg));
    }
  } else {
    out.push_back(experiment_from_json(j));
  }
  return out;
}

inline std::vector<ExperimentConfig> load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidParameter("cannot open config file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidParameter("config file " + path + " is not valid JSON: " + e.what());
  }
  return configs_from_json(j);
}

/// Expands the model sweep and validates every combination before any work.
inline std::vector<ModelParams> model_grid(const ExperimentConfig& cfg) {
  std::vector<ModelParams> grid;
  for (int N : cfg.N)
    for (int p : cfg.p)
      for (double beta : cfg.beta)
        for (double c : cfg.c)
          for (double omega : cfg.omega)
            for (double eps : cfg.epsilon_aging) {
              ModelParams m{N, p, beta, c, omega, eps, 1.0};
              try {
                validate(m);
              } catch (const InvalidParameter& e) {
                throw InvalidParameter("config: parameters N=" + std::to_string(N) +
                                       " p=" + std::to_string(p) + " invalid: " + e.what());
              }
              if (cfg.name == "resample-exceedance")
                for (double rho : cfg.rho) {
                  const double a = derive_scales(m).alpha;
                  if (!(rho * a * a <= 1.0) || rho < 0.0)
                    throw InvalidParameter("config: rho=" + std::to_string(rho) + " at N=" + std::to_string(N) +
                                           " gives mask density rho alpha^2 outside [0, 1]");
                }
              grid.push_back(m);
            }
  return grid;
}

inline std::uint64_t model_hash(const ModelParams& m) {
  std::uint64_t h = splitmix64(static_cast<std::uint64_t>(m.N));
  h = hash_combine(h, static_cast<std::uint64_t>(m.p));
  h = hash_combine(h, hash_double(m.beta));
  h = hash_combine(h, hash_double(m.c));
  h = hash_combine(h, hash_double(m.omega));
  h = hash_combine(h, hash_double(m.epsilon_aging));
  return h;
}

inline nlohmann::json model_json(const ModelParams& m) {
  return {{"N", m.N}, {"p", m.p}, {"beta", m.beta}, {"c", m.c}, {"omega", m.omega}};
}

// ---------------------------------------------------------------------------
// Scheduling: replicates are claimed from a shared counter; each result lands
// in its own slot, so output does not depend on the number of threads.

inline void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  const unsigned k = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  for (unsigned w = 0; w < k; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        {
          std::lock_guard lock(failure_mutex);
          if (failure) return;
        }
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

struct RunOptions {
  unsigned threads = 1;
};

// One fully specified model run: parameters, scalings and energy backend.
struct ModelSetup {
  ModelParams model;
  DerivedScales scales;
  TimeScale time;
  Backend backend = Backend::exact;
  std::size_t window = 0;

  std::string backend_name() const {
    switch (backend) {
      case Backend::exact: return "exact";
      case Backend::conditional: return "conditional";
      case Backend::rem: return "rem";
    }
    return "?";
  }
};

inline ModelSetup model_setup(const ModelParams& m, const std::string& backend, std::size_t window) {
  ModelSetup s;
  s.model = m;
  s.scales = derive_scales(m);
  if (backend == "rem") s.backend = Backend::rem;
  else if (backend == "exact") s.backend = Backend::exact;
  else if (backend == "conditional") s.backend = Backend::conditional;
  else s.backend = default_backend(m.N, m.p);
  s.time = s.backend == Backend::rem ? rem_time_scale(s.scales) : correlated_time_scale(s.scales);
  s.window = window > 0 ? window : 4 * static_cast<std::size_t>(s.scales.nu);
  return s;
}

class ReplicateStreams {
 public:
  ReplicateStreams(std::uint64_t master, const std::string& experiment, std::uint64_t tuple)
      : master_(master), experiment_(hash_string(experiment)), tuple_(tuple) {}

  Rng stream(std::uint64_t replicate, StreamRole role) const {
    return make_stream(StreamKey{master_, experiment_, tuple_, replicate, role});
  }

 private:
  std::uint64_t master_;
  std::uint64_t experiment_;
  std::uint64_t tuple_;
};

/// Builds the dynamics for replicate i. With `fixed_walk` every replicate
/// shares the walk of replicate 0 and only disorder and holds vary.
inline RhtRun make_rht_run(const ModelSetup& s, const ReplicateStreams& streams, std::size_t i,
                           bool fixed_walk = false) {
  auto source = make_energy_source(s.backend, s.model.N, s.model.p, s.window,
                                   streams.stream(i, StreamRole::disorder));
  return RhtRun(s.model.N, s.model.beta, std::move(source),
                streams.stream(fixed_walk ? 0 : i, StreamRole::walk),
                streams.stream(i, StreamRole::holds));
}

inline std::size_t horizon_steps(const ModelSetup& s, double T, double horizon_factor,
                                 double crossing_estimate = 0.0) {
  return static_cast<std::size_t>(
      std::ceil(horizon_factor * s.time.r * std::max(T, crossing_estimate)));
}

namespace detail {

inline TrialResult proportion_result(const std::string& exp, nlohmann::json params,
                                     std::size_t hits, std::size_t n, std::size_t truncated) {
  TrialResult r;
  r.experiment = exp;
  r.params = std::move(params);
  r.replicates = n + truncated;
  r.truncated_count = truncated;
  if (n > 0) {
    r.estimate = static_cast<double>(hits) / static_cast<double>(n);
    const auto ci = wilson_interval(hits, n);
    r.ci_lo = std::min(ci.lo, r.estimate);
    r.ci_hi = std::max(ci.hi, r.estimate);
  }
  return r;
}

inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// aging

inline std::vector<TrialResult> run_aging(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  std::vector<TrialResult> results;
  const double theta_max = *std::max_element(cfg.theta.begin(), cfg.theta.end());
  for (const auto& m : model_grid(cfg)) {
    const auto s = model_setup(m, cfg.backend, cfg.window);
    const ReplicateStreams streams(cfg.seed, cfg.name, model_hash(m));
    const double crossing = std::pow(1.0 + theta_max, 1.0 / (m.beta * m.beta)) / s.time.K;
    const std::size_t horizon = horizon_steps(s, cfg.T, cfg.horizon_factor, crossing);
    const double log_target = log_second_time(s.time, theta_max);

    std::vector<std::vector<AgingOutcome>> outcomes(cfg.replicates);
    parallel_for(cfg.replicates, opt.threads, [&](std::size_t i) {
      auto run = make_rht_run(s, streams, i, cfg.conditional_on_walk);
      run.run_until(log_target, horizon);
      const auto traj = run.trajectory();
      for (double th : cfg.theta)
        outcomes[i].push_back(aging_indicator(run.record(), traj, s.time, th, m.epsilon_aging));
    });

    for (std::size_t a = 0; a < cfg.theta.size(); ++a) {
      std::size_t hits = 0, valid = 0, truncated = 0;
      for (const auto& o : outcomes) {
        if (o[a].truncated) {
          ++truncated;
        } else {
          ++valid;
          hits += o[a].aged;
        }
      }
      if (valid == 0)
        throw HorizonError("aging: every replicate was truncated at N=" + std::to_string(m.N));
      auto params = model_json(m);
      params["epsilon_aging"] = m.epsilon_aging;
      params["theta"] = cfg.theta[a];
      params["backend"] = s.backend_name();
      params["conditional_on_walk"] = cfg.conditional_on_walk;
      auto r = detail::proportion_result(cfg.name, params, hits, valid, truncated);
      r.extra["target"] = aging_function(m.beta, cfg.theta[a]);
      r.extra["horizon_steps"] = horizon;
      results.push_back(std::move(r));
    }
  }
  return results;
}

// ---------------------------------------------------------------------------
// fixed-time-law

inline std::vector<TrialResult> run_fixed_time_law(const ExperimentConfig& cfg,
                                                   const RunOptions& opt = {}) {
  std::vector<TrialResult> results;
  const double t_max = *std::max_element(cfg.t.begin(), cfg.t.end());
  for (const auto& m : model_grid(cfg)) {
    const auto s = model_setup(m, cfg.backend, cfg.window);
    const ReplicateStreams streams(cfg.seed, cfg.name, model_hash(m));
    const std::size_t need = std::max<std::size_t>(1, required_steps(s.time, t_max));
    std::vector<std::vector<double>> maxv(cfg.replicates), clockv(cfg.replicates);
    parallel_for(cfg.replicates, opt.threads, [&](std::size_t i) {
      auto run = make_rht_run(s, streams, i, cfg.conditional_on_walk);
      run.extend(need);
      for (double t : cfg.t) {
        maxv[i].push_back(rescaled_value(run.record(), s.time, PathKind::maximal, t));
        clockv[i].push_back(rescaled_value(run.record(), s.time, PathKind::clock, t));
      }
    });
    const ExtremalLaw law(m.beta, s.time.K);
    for (std::size_t a = 0; a < cfg.t.size(); ++a) {
      const double t = cfg.t[a];
      std::vector<double> xm, xc;
      for (std::size_t i = 0; i < cfg.replicates; ++i) {
        xm.push_back(maxv[i][a]);
        xc.push_back(clockv[i][a]);
      }
      TrialResult r;
      r.experiment = cfg.name;
      r.params = model_json(m);
      r.params["t"] = t;
      r.params["backend"] = s.backend_name();
      r.replicates = cfg.replicates;
      if (t == 0.0) {
        // The law at t = 0 is the point mass at 0.
        const auto nonzero = std::count_if(xm.begin(), xm.end(), [](double v) { return v != 0.0; });
        r.estimate = static_cast<double>(nonzero) / static_cast<double>(xm.size());
        r.extra["ks_max_p"] = nonzero == 0 ? 1.0 : 0.0;
      } else {
        auto cdf = [&](double x) { return fixed_time_cdf(law, t, x); };
        const auto km = ks_statistic(xm, cdf, "extremal");
        const auto kc = ks_statistic(xc, cdf, "extremal");
        const auto k2 = ks_two_sample(xm, xc);
        r.estimate = km.statistic;
        r.extra["ks_max_p"] = km.p_value;
        r.extra["ks_clock"] = kc.statistic;
        r.extra["ks_clock_p"] = kc.p_value;
        r.extra["ks_two_sample"] = k2.statistic;
        r.extra["ks_two_sample_p"] = k2.p_value;
        r.extra["median_max"] = detail::quantile(xm, 0.5);
        r.extra["median_target"] = fixed_time_quantile(law, t, 0.5);
      }
      r.ci_lo = r.ci_hi = r.estimate;
      results.push_back(std::move(r));
    }
  }
  return results;
}

// ---------------------------------------------------------------------------
// sup-distance

inline std::vector<TrialResult> run_sup_distance(const ExperimentConfig& cfg,
                                                 const RunOptions& opt = {}) {
  std::vector<TrialResult> results;
  for (const auto& m : model_grid(cfg)) {
    const auto s = model_setup(m, cfg.backend, cfg.window);
    const ReplicateStreams streams(cfg.seed, cfg.name, model_hash(m));
    const std::size_t need = std::max<std::size_t>(1, required_steps(s.time, cfg.T));
    const std::size_t end = grid_end(s.time, cfg.T);
    std::vector<double> sup(cfg.replicates), ratio(cfg.replicates);
    parallel_for(cfg.replicates, opt.threads, [&](std::size_t i) {
      auto run = make_rht_run(s, streams, i, cfg.conditional_on_walk);
      run.extend(need);
      const auto& rec = run.record();
      sup[i] = sup_power_distance(rec, s.time, cfg.T);
      const std::size_t k = std::max<std::size_t>(1, end);
      ratio[i] = s.scales.alpha * s.scales.alpha * std::exp(rec.log_S[k] - rec.log_m[k]);
    });
    const auto hits = static_cast<std::size_t>(
        std::count_if(sup.begin(), sup.end(), [&](double v) { return v > cfg.sup_threshold; }));
    auto params = model_json(m);
    params["T"] = cfg.T;
    params["threshold"] = cfg.sup_threshold;
    params["backend"] = s.backend_name();
    auto r = detail::proportion_result(cfg.name, params, hits, cfg.replicates, 0);
    RunningStats st;
    for (double v : sup) st.push(v);
    r.extra["mean_sup"] = st.mean();
    r.extra["ratio_alpha2_p95"] = detail::quantile(ratio, 0.95);
    r.extra["ratio_alpha2_median"] = detail::quantile(ratio, 0.5);
    results.push_back(std::move(r));
  }
  return results;
}

// ---------------------------------------------------------------------------
// block-exceedance and resample-exceedance

inline std::vector<TrialResult> run_block_exceedance(const ExperimentConfig& cfg,
                                                     const RunOptions& opt = {}) {
  std::vector<TrialResult> results;
  for (const auto& m : model_grid(cfg)) {
    const auto sc = derive_scales(m);
    const BlockSpec spec(m.N, m.p, sc.nu);
    const ReplicateStreams streams(cfg.seed, cfg.name, model_hash(m));
    // Blocks are split into chunks with their own streams so work can be shared.
    const std::size_t chunks = std::max<std::size_t>(1, std::min<std::size_t>(64, cfg.replicates));
    std::vector<std::vector<std::size_t>> hits(chunks);
    parallel_for(chunks, opt.threads, [&](std::size_t ch) {
      const std::size_t n = cfg.replicates / chunks + (ch < cfg.replicates % chunks ? 1 : 0);
      Rng rng = streams.stream(ch, StreamRole::aux);
      for (const auto& e : block_max_exceedance(spec, sc, m.beta, cfg.x, n, rng))
        hits[ch].push_back(e.hits);
    });
    for (std::size_t a = 0; a < cfg.x.size(); ++a) {
      std::size_t h = 0;
      for (const auto& v : hits) h += v[a];
      const auto ci = wilson_interval(h, cfg.replicates);
      const double scale = block_rate_scale(sc);
      TrialResult r;
      r.experiment = cfg.name;
      r.params = model_json(m);
      r.params["x"] = cfg.x[a];
      r.estimate = scale * static_cast<double>(h) / static_cast<double>(cfg.replicates);
      r.ci_lo = scale * ci.lo;
      r.ci_hi = scale * ci.hi;
      r.replicates = cfg.replicates;
      r.extra["target"] = sc.K / std::pow(cfg.x[a], 1.0 / (m.beta * m.beta));
      r.extra["nu"] = sc.nu;
      r.extra["hits"] = h;
      results.push_back(std::move(r));
    }
  }
  return results;
}

inline std::vector<TrialResult> run_resample_exceedance(const ExperimentConfig& cfg,
                                                        const RunOptions& opt = {}) {
  std::vector<TrialResult> results;
  for (const auto& m : model_grid(cfg)) {
    const auto sc = derive_scales(m);
    const BlockSpec spec(m.N, m.p, sc.nu);
    const ReplicateStreams streams(cfg.seed, cfg.name, model_hash(m));
    const std::size_t nx = cfg.x.size();
    const std::size_t nr = cfg.rho.size();
    std::vector<ExceedanceEstimate> plain;
    std::vector<ExceedanceEstimate> masked;
    std::vector<Prop2Estimate> prop2(nx * nr);
    std::vector<std::function<void()>> jobs;
    jobs.emplace_back([&] {
      Rng blocks = streams.stream(0, StreamRole::aux);
      Rng masks = streams.stream(1, StreamRole::aux);
      Rng copy = blocks;
      plain = block_max_exceedance(spec, sc, m.beta, cfg.x, cfg.replicates, copy);
      masked = resampled_max_exceedance(spec, sc, m.beta, cfg.x, cfg.rho, cfg.replicates, blocks,
                                        masks);
    });
    for (std::size_t a = 0; a < nr; ++a)
      for (std::size_t k = 0; k < nx; ++k)
        jobs.emplace_back([&, a, k] {
          Rng blocks = streams.stream(0, StreamRole::aux);
          prop2[a * nx + k] =
              prop2_functional(spec, sc, m.beta, cfg.x[k], cfg.rho[a], cfg.replicates, blocks);
        });
    parallel_for(jobs.size(), opt.threads, [&](std::size_t i) { jobs[i](); });
    for (std::size_t a = 0; a < nr; ++a) {
      for (std::size_t k = 0; k < nx; ++k) {
        const auto& e = masked[a * nx + k];
        const auto& f = prop2[a * nx + k];
        TrialResult r;
        r.experiment = cfg.name;
        r.params = model_json(m);
        r.params["x"] = cfg.x[k];
        r.params["rho"] = cfg.rho[a];
        r.estimate = e.estimate;
        r.ci_lo = e.ci_lo;
        r.ci_hi = e.ci_hi;
        r.replicates = cfg.replicates;
        r.extra["unmasked"] = plain[k].estimate;
        r.extra["prop2"] = f.estimate;
        r.extra["prop2_ci_lo"] = f.ci_lo;
        r.extra["prop2_ci_hi"] = f.ci_hi;
        r.extra["conditional_count"] = f.conditional_count;
        r.extra["conditional_count_se"] = f.conditional_count_se;
        r.extra["alpha_inv_sq"] = 1.0 / (sc.alpha * sc.alpha);
        r.extra["target"] = sc.K / std::pow(cfg.x[k], 1.0 / (m.beta * m.beta));
        results.push_back(std::move(r));
      }
    }
  }
  return results;
}

// ---------------------------------------------------------------------------
// poisson-blocks

// CDF of a gap between consecutive points of a rate-lambda Poisson process
// observed on [0, T], pooled over windows: density proportional to
// (T - g) exp(-lambda g) on [0, T].
inline double windowed_gap_cdf(double lambda, double T, double g) {
  if (g <= 0.0) return 0.0;
  if (g >= T) return 1.0;
  auto mass = [&](double u) {
    const double e = std::exp(-lambda * u);
    return T * (1.0 - e) / lambda - (1.0 - e * (1.0 + lambda * u)) / (lambda * lambda);
  };
  return mass(g) / mass(T);
}

inline std::vector<TrialResult> run_poisson_blocks(const ExperimentConfig& cfg,
                                                   const RunOptions& opt = {}) {
  std::vector<TrialResult> results;
  for (const auto& m : model_grid(cfg)) {
    const auto s = model_setup(m, cfg.backend, cfg.window);
    const ReplicateStreams streams(cfg.seed, cfg.name, model_hash(m));
    const std::size_t need = std::max<std::size_t>(1, required_steps(s.time, cfg.T));
    const double h = s.scales.nu / s.time.r;  // block duration
    // points[i][a]: block times for delta a, jittered uniformly inside their block
    std::vector<std::vector<std::vector<double>>> points(cfg.replicates);
    parallel_for(cfg.replicates, opt.threads, [&](std::size_t i) {
      auto run = make_rht_run(s, streams, i, cfg.conditional_on_walk);
      run.extend(need);
      Rng jitter = streams.stream(i, StreamRole::aux);
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      for (double d : cfg.delta) {
        auto pts = deep_block_process(run.record(), s.time, s.scales.nu, d, cfg.T);
        for (auto& t : pts) t = std::min(cfg.T, t + h * unif(jitter));
        points[i].push_back(std::move(pts));
      }
    });
    for (std::size_t a = 0; a < cfg.delta.size(); ++a) {
      RunningStats counts;
      std::vector<double> gaps;
      std::vector<double> first_half, second_half;
      for (const auto& rep : points) {
        const auto& pts = rep[a];
        counts.push(static_cast<double>(pts.size()));
        for (std::size_t k = 1; k < pts.size(); ++k) gaps.push_back(pts[k] - pts[k - 1]);
        first_half.push_back(static_cast<double>(
            std::count_if(pts.begin(), pts.end(), [&](double t) { return t < cfg.T / 2; })));
        second_half.push_back(static_cast<double>(pts.size()) - first_half.back());
      }
      const double target = deep_block_intensity(s.time.K, m.beta, cfg.delta[a]) * cfg.T;
      TrialResult r;
      r.experiment = cfg.name;
      r.params = model_json(m);
      r.params["delta"] = cfg.delta[a];
      r.params["T"] = cfg.T;
      r.params["backend"] = s.backend_name();
      r.replicates = cfg.replicates;
      r.estimate = counts.mean();
      const auto ci = counts.interval();
      r.ci_lo = std::min(ci.lo, r.estimate);
      r.ci_hi = std::max(ci.hi, r.estimate);
      const double dispersion = counts.mean() > 0.0 ? counts.variance() / counts.mean() : 0.0;
      r.extra["target_mean"] = target;
      r.extra["variance"] = counts.variance();
      r.extra["dispersion"] = dispersion;
      r.extra["dispersion_se"] = std::sqrt(2.0 / std::max<double>(1.0, cfg.replicates - 1.0));
      r.extra["gaps"] = gaps.size();
      // Correlation of counts in the two halves of [0, T].
      RunningStats a1, a2;
      double cov = 0.0;
      for (std::size_t i = 0; i < first_half.size(); ++i) {
        a1.push(first_half[i]);
        a2.push(second_half[i]);
      }
      for (std::size_t i = 0; i < first_half.size(); ++i)
        cov += (first_half[i] - a1.mean()) * (second_half[i] - a2.mean());
      const double denom = std::sqrt(a1.variance() * a2.variance()) *
                           static_cast<double>(std::max<std::size_t>(1, first_half.size() - 1));
      r.extra["half_count_correlation"] = denom > 0.0 ? cov / denom : 0.0;
      if (!gaps.empty() && counts.mean() > 0.0) {
        const double lam_hat = counts.mean() / cfg.T;
        const auto ks = ks_statistic(
            gaps, [&](double g) { return windowed_gap_cdf(lam_hat, cfg.T, g); }, "gap");
        const auto ks_target = ks_statistic(
            gaps, [&](double g) { return windowed_gap_cdf(target / cfg.T, cfg.T, g); }, "gap");
        r.extra["gap_ks"] = ks.statistic;
        r.extra["gap_ks_p"] = ks.p_value;
        r.extra["gap_ks_target_rate"] = ks_target.statistic;
        r.extra["gap_ks_target_rate_p"] = ks_target.p_value;
      }
      results.push_back(std::move(r));
    }
  }
  return results;
}

// ---------------------------------------------------------------------------
// sa-constants

inline std::vector<TrialResult> run_sa_constants(const ExperimentConfig& cfg,
                                                 const RunOptions& opt = {}) {
  struct Key {
    int p;
    double beta;
    double alpha;
  };
  std::vector<Key> keys;
  for (int p : cfg.p)
    for (double beta : cfg.beta)
      for (double a : cfg.alpha) keys.push_back({p, beta, a});
  std::vector<SAConstants> vals(keys.size());
  parallel_for(keys.size(), opt.threads, [&](std::size_t i) {
    vals[i] = sa_constants(keys[i].alpha, keys[i].p, keys[i].beta, cfg.tail_tol);
  });
  std::vector<TrialResult> results;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const auto& v = vals[i];
    TrialResult r;
    r.experiment = cfg.name;
    r.params = {{"p", keys[i].p}, {"beta", keys[i].beta}, {"alpha", keys[i].alpha}};
    r.estimate = v.p_inf_over_alpha;
    r.ci_lo = v.p_inf_over_alpha - v.certified_error / v.alpha;
    r.ci_hi = v.p_inf_over_alpha + v.certified_error / v.alpha;
    r.replicates = 1;
    r.extra = {{"alpha", v.alpha},
               {"d_N", v.d_N},
               {"p_inf", v.p_inf},
               {"p_inf_over_alpha", v.p_inf_over_alpha},
               {"e_tau_finite", v.e_tau_finite},
               {"alpha_times_e_tau", v.alpha_times_e_tau},
               {"certified_error", v.certified_error},
               {"e_tau_error", v.e_tau_error},
               {"K1", std::sqrt(2.0 * keys[i].p) / keys[i].beta},
               {"K2_integral_limit", k2_integral_limit(keys[i].p, keys[i].beta)}};
    results.push_back(std::move(r));
  }
  return results;
}

// ---------------------------------------------------------------------------
// comparison-bound

struct ComparisonInstance {
  Matrix cov0;
  Matrix cov1;
  std::vector<double> u;
};

inline Matrix random_correlation(int n, Rng& rng) {
  std::normal_distribution<double> gauss;
  std::vector<std::vector<double>> a(n, std::vector<double>(n + 1));
  for (auto& row : a)
    for (auto& v : row) v = gauss(rng);
  Matrix c(n, std::vector<double>(n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) c[i][j] = std::inner_product(a[i].begin(), a[i].end(), a[j].begin(), 0.0);
  Matrix out(n, std::vector<double>(n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      out[i][j] = i == j ? 1.0 : c[i][j] / std::sqrt(c[i][i] * c[j][j]);
  return out;
}

inline ComparisonInstance random_comparison_instance(int n, Rng& rng) {
  ComparisonInstance inst{random_correlation(n, rng), random_correlation(n, rng), {}};
  std::uniform_real_distribution<double> unif(-1.5, 1.5);
  for (int i = 0; i < n; ++i) inst.u.push_back(unif(rng));
  return inst;
}

inline Matrix cholesky(const Matrix& a) {
  const std::size_t n = a.size();
  Matrix L(n, std::vector<double>(n, 0.0));
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j][j];
    for (std::size_t k = 0; k < j; ++k) d -= L[j][k] * L[j][k];
    L[j][j] = std::sqrt(std::max(d, 0.0));
    for (std::size_t i = j + 1; i < n; ++i) {
      double v = a[i][j];
      for (std::size_t k = 0; k < j; ++k) v -= L[i][k] * L[j][k];
      L[i][j] = L[j][j] > 1e-14 ? v / L[j][j] : 0.0;
    }
  }
  return L;
}

struct OrthantDifference {
  double difference = 0.0;  // P(xi <= u) - P(mu <= u), xi ~ cov1, mu ~ cov0
  double sigma = 0.0;
};

/// Common-random-number estimate: both vectors are built from the same
/// standard normals.
inline OrthantDifference orthant_difference_mc(const ComparisonInstance& inst, std::size_t samples,
                                               Rng& rng) {
  const auto L0 = cholesky(inst.cov0);
  const auto L1 = cholesky(inst.cov1);
  const std::size_t n = inst.u.size();
  std::normal_distribution<double> gauss;
  std::vector<double> z(n);
  RunningStats diff;
  for (std::size_t s = 0; s < samples; ++s) {
    for (auto& v : z) v = gauss(rng);
    bool in0 = true, in1 = true;
    for (std::size_t i = 0; i < n; ++i) {
      double x0 = 0.0, x1 = 0.0;
      for (std::size_t k = 0; k <= i; ++k) {
        x0 += L0[i][k] * z[k];
        x1 += L1[i][k] * z[k];
      }
      in0 = in0 && x0 <= inst.u[i];
      in1 = in1 && x1 <= inst.u[i];
    }
    diff.push(static_cast<double>(in1) - static_cast<double>(in0));
  }
  return {diff.mean(), diff.std_error()};
}

inline std::vector<TrialResult> run_comparison_bound(const ExperimentConfig& cfg,
                                                     const RunOptions& opt = {}) {
  const ReplicateStreams streams(cfg.seed, cfg.name, 0);
  std::vector<TrialResult> results(cfg.instances);
  parallel_for(cfg.instances, opt.threads, [&](std::size_t i) {
    Rng rng = streams.stream(i, StreamRole::aux);
    std::uniform_int_distribution<int> pick_n(2, std::max(2, cfg.n_max));
    const int n = pick_n(rng);
    const auto inst = random_comparison_instance(n, rng);
    const double bound = normal_comparison_bound(inst.cov0, inst.cov1, inst.u);
    Rng mc = streams.stream(i, StreamRole::walk);
    const auto d = orthant_difference_mc(inst, cfg.mc_samples, mc);
    TrialResult r;
    r.experiment = cfg.name;
    r.params = {{"instance", i}, {"n", n}};
    r.estimate = d.difference;
    r.ci_lo = d.difference - 3.0 * d.sigma;
    r.ci_hi = d.difference + 3.0 * d.sigma;
    r.replicates = cfg.mc_samples;
    r.extra = {{"bound", bound},
               {"mc_sigma", d.sigma},
               {"holds", d.difference <= bound + 3.0 * d.sigma},
               {"bound_equal_inputs", normal_comparison_bound(inst.cov0, inst.cov0, inst.u)}};
    results[i] = std::move(r);
  });
  return results;
}

// ---------------------------------------------------------------------------
// bd-mixing and pair-counts

inline std::vector<TrialResult> run_bd_mixing(const ExperimentConfig& cfg,
                                              const RunOptions& opt = {}) {
  std::vector<TrialResult> results(cfg.N.size());
  parallel_for(cfg.N.size(), opt.threads, [&](std::size_t i) {
    const int N = cfg.N[i];
    const long long k = mixing_steps(N, cfg.mixing_K);
    const auto dist = bd_distribution(N, k, 0);
    const double dev = bd_mixing_deviation(N, k);
    TrialResult r;
    r.experiment = cfg.name;
    r.params = {{"N", N}, {"K", cfg.mixing_K}};
    r.estimate = r.ci_lo = r.ci_hi = dev;
    r.replicates = 1;
    r.extra = {{"steps", k}, {"mass_error", std::abs(dist.mass() - 1.0)},
               {"bound_2_pow_minus_4N", std::pow(2.0, -4.0 * N)}};
    results[i] = std::move(r);
  });
  return results;
}

inline std::vector<TrialResult> run_pair_counts(const ExperimentConfig& cfg,
                                                const RunOptions& opt = {}) {
  std::vector<TrialResult> results;
  for (const auto& m : model_grid(cfg)) {
    const auto sc = derive_scales(m);
    const ReplicateStreams streams(cfg.seed, cfg.name, model_hash(m));
    const std::size_t steps = cfg.steps > 0 ? cfg.steps : 4 * static_cast<std::size_t>(sc.nu);
    std::vector<std::vector<std::uint64_t>> same(cfg.replicates), cross(cfg.replicates);
    parallel_for(cfg.replicates, opt.threads, [&](std::size_t i) {
      Rng walk = streams.stream(i, StreamRole::walk);
      const auto traj = srw_trajectory(m.N, steps, walk);
      same[i] = pair_distance_histogram(traj, sc.nu, BlockMode::same_block);
      cross[i] = pair_distance_histogram(traj, sc.nu, BlockMode::cross_block);
    });
    std::vector<int> ds = cfg.distance;
    if (ds.empty())
      for (int d = 0; d <= m.N; ++d) ds.push_back(d);
    for (int d : ds) {
      if (d < 0 || d > m.N) throw InvalidParameter("pair-counts: distance out of range");
      for (int mode = 0; mode < 2; ++mode) {
        RunningStats st;
        for (std::size_t i = 0; i < cfg.replicates; ++i)
          st.push(static_cast<double>((mode == 0 ? same : cross)[i][d]));
        TrialResult r;
        r.experiment = cfg.name;
        r.params = model_json(m);
        r.params["d"] = d;
        r.params["mode"] = mode == 0 ? "same-block" : "cross-block";
        r.params["steps"] = steps;
        r.estimate = st.mean();
        const auto ci = st.interval();
        r.ci_lo = std::min(ci.lo, r.estimate);
        r.ci_hi = std::max(ci.hi, r.estimate);
        r.replicates = cfg.replicates;
        r.extra["nu"] = sc.nu;
        results.push_back(std::move(r));
      }
    }
  }
  return results;
}

// ---------------------------------------------------------------------------

/// Checks the parameters an experiment actually consumes, without running it.
inline void validate_config(const ExperimentConfig& cfg) {
  if (cfg.name == "sa-constants") {
    for (int p : cfg.p)
      if (p < 2) throw InvalidParameter("config: sa-constants needs p >= 2");
    for (double beta : cfg.beta)
      if (!(beta > 0.0)) throw InvalidParameter("config: sa-constants needs beta > 0");
    for (double a : cfg.alpha)
      if (!(a > 0.0 && a < 1.0)) throw InvalidParameter("config: sa-constants needs alpha in (0, 1)");
  } else if (cfg.name == "comparison-bound") {
    if (cfg.n_max < 2) throw InvalidParameter("config: comparison-bound needs n_max >= 2");
    if (cfg.mc_samples < 2) throw InvalidParameter("config: comparison-bound needs mc_samples >= 2");
  } else if (cfg.name == "bd-mixing") {
    for (int N : cfg.N)
      if (N < 1) throw InvalidParameter("config: bd-mixing needs N >= 1");
    if (!(cfg.mixing_K > 0.0)) throw InvalidParameter("config: bd-mixing needs mixing_K > 0");
  } else {
    model_grid(cfg);
  }
}

inline std::vector<TrialResult> run_experiment(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  if (cfg.name == "aging") return run_aging(cfg, opt);
  if (cfg.name == "fixed-time-law") return run_fixed_time_law(cfg, opt);
  if (cfg.name == "sup-distance") return run_sup_distance(cfg, opt);
  if (cfg.name == "block-exceedance") return run_block_exceedance(cfg, opt);
  if (cfg.name == "resample-exceedance") return run_resample_exceedance(cfg, opt);
  if (cfg.name == "poisson-blocks") return run_poisson_blocks(cfg, opt);
  if (cfg.name == "sa-constants") return run_sa_constants(cfg, opt);
  if (cfg.name == "comparison-bound") return run_comparison_bound(cfg, opt);
  if (cfg.name == "bd-mixing") return run_bd_mixing(cfg, opt);
  if (cfg.name == "pair-counts") return run_pair_counts(cfg, opt);
  throw InvalidParameter("unknown experiment '" + cfg.name + "'");
}

// ---------------------------------------------------------------------------
// Output.

inline std::string to_jsonl(const std::vector<TrialResult>& results) {
  std::string out;
  for (const auto& r : results) {
    out += r.to_json().dump();
    out += '\n';
  }
  return out;
}

namespace detail {

inline std::string csv_cell(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_null()) return "";
  return v.dump();
}

}  // namespace detail

// Columns: parameters, then estimate/ci/truncated/replicates, then scalar extras.
inline std::string to_csv(const std::vector<TrialResult>& results) {
  if (results.empty()) return {};
  std::vector<std::string> pcols, xcols;
  for (const auto& r : results) {
    for (const auto& [k, _] : r.params.items())
      if (std::find(pcols.begin(), pcols.end(), k) == pcols.end()) pcols.push_back(k);
    for (const auto& [k, v] : r.extra.items())
      if (v.is_primitive() && std::find(xcols.begin(), xcols.end(), k) == xcols.end())
        xcols.push_back(k);
  }
  std::ostringstream os;
  for (const auto& k : pcols) os << k << ',';
  os << "estimate,ci_lo,ci_hi,truncated_count,replicates";
  for (const auto& k : xcols) os << ',' << k;
  os << '\n';
  for (const auto& r : results) {
    for (const auto& k : pcols) os << (r.params.contains(k) ? detail::csv_cell(r.params[k]) : "") << ',';
    os << nlohmann::json(r.estimate).dump() << ',' << nlohmann::json(r.ci_lo).dump() << ','
       << nlohmann::json(r.ci_hi).dump() << ',' << r.truncated_count << ',' << r.replicates;
    for (const auto& k : xcols) os << ',' << (r.extra.contains(k) ? detail::csv_cell(r.extra[k]) : "");
    os << '\n';
  }
  return os.str();
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[i] = digits[v & 15];
  return s;
}

}  // namespace glassclock
