#pragma once

// Static model parameters and every scaling derived from them.
//
// Magnitudes that overflow a double at moderate N (t(N), clock values) are
// kept as natural logarithms; only alpha-powered quantities of order one are
// ever exponentiated.

#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "glassclock/errors.hpp"

namespace glassclock {

struct ModelParams {
  int N = 64;
  int p = 2;
  double beta = 1.0;
  double c = 0.3;
  double omega = 0.81;
  double epsilon_aging = 0.5;
  double theta = 1.0;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

struct DerivedScales {
  double alpha = 0.0;  // N^{-c}
  double log_t = 0.0;  // alpha * N = log t(N)
  double log_r = 0.0;
  double r = 0.0;      // number-of-jumps scale
  int nu = 1;          // floor(N^omega)
  double K = 0.0;      // 2 p / beta^2
  double K1 = 0.0;     // sqrt(2 p) / beta
  double d_N = 0.0;    // alpha sqrt(p) / beta
};

// Jump scale and limit constant for one energy model. The correlated models
// use (r, K); the REM needs alpha^2 fewer jumps to meet traps of depth t(N)
// and its limit constant is 1.
struct TimeScale {
  double alpha = 0.0;
  double log_t = 0.0;
  double r = 0.0;
  double K = 0.0;
};

/// Checks every invariant of ModelParams. Throws InvalidParameter naming the
/// violated invariant; returns non-fatal warnings.
inline std::vector<std::string> validate(const ModelParams& m) {
  auto fail = [](const std::string& what) { throw InvalidParameter(what); };
  if (m.N < 2) fail("N must be >= 2");
  if (m.p < 2) fail("p must be >= 2");
  if (!(m.beta > 0.0) || !std::isfinite(m.beta)) fail("beta must be > 0");
  if (!(m.c > 0.0 && m.c < 0.5)) fail("c must lie in (0, 1/2)");
  if (!(m.omega > 0.5 + m.c && m.omega < 1.0))
    fail("omega must lie in (1/2 + c, 1)");
  if (!(m.epsilon_aging > 0.0 && m.epsilon_aging < 1.0))
    fail("epsilon_aging must lie in (0, 1)");
  if (!(m.theta > 0.0) || !std::isfinite(m.theta)) fail("theta must be > 0");

  const double nu = std::floor(std::pow(static_cast<double>(m.N), m.omega));
  if (nu < 1.0 || nu > m.N - 1.0) fail("nu = floor(N^omega) must lie in [1, N-1]");
  if (!(m.p * (nu - 1.0) < m.N))
    fail("p (nu - 1) < N violated: block representation gamma1 would be imaginary");
  const double alpha = std::pow(static_cast<double>(m.N), -m.c);
  if (!(nu * alpha * alpha > 1.0)) fail("nu alpha_N^2 > 1 violated");

  const double log_r = -std::log(alpha) - std::log(m.beta) +
                       0.5 * std::log(2.0 * std::numbers::pi * m.N) +
                       alpha * alpha * m.N / (2.0 * m.beta * m.beta);
  if (!std::isfinite(std::exp(log_r))) fail("r(N) overflows a double");

  std::vector<std::string> warnings;
  if (m.p == 3 && m.c >= 0.25)
    warnings.emplace_back("p = 3 with c >= 1/4 lies outside the proven regime c in (0, 1/4)");
  return warnings;
}

inline DerivedScales derive_scales(const ModelParams& m) {
  validate(m);
  DerivedScales s;
  const double n = static_cast<double>(m.N);
  s.alpha = std::pow(n, -m.c);
  s.log_t = s.alpha * n;
  s.log_r = -std::log(s.alpha) - std::log(m.beta) +
            0.5 * std::log(2.0 * std::numbers::pi * n) +
            s.alpha * s.alpha * n / (2.0 * m.beta * m.beta);
  s.r = std::exp(s.log_r);
  s.nu = static_cast<int>(std::floor(std::pow(n, m.omega)));
  s.K = 2.0 * m.p / (m.beta * m.beta);
  s.K1 = std::sqrt(2.0 * m.p) / m.beta;
  s.d_N = s.alpha * std::sqrt(static_cast<double>(m.p)) / m.beta;
  return s;
}

inline TimeScale correlated_time_scale(const DerivedScales& s) {
  return {s.alpha, s.log_t, s.r, s.K};
}

inline TimeScale rem_time_scale(const DerivedScales& s) {
  return {s.alpha, s.log_t, s.alpha * s.alpha * s.r, 1.0};
}

// C_N(x): the energy level above which a mean holding time exceeds
// x^{1/alpha} t(N).
inline double threshold_level(const DerivedScales& s, int N, double beta, double x) {
  if (!(x > 0.0)) throw DomainError("threshold_level requires x > 0");
  const double sqrt_n = std::sqrt(static_cast<double>(N));
  return s.alpha * sqrt_n / beta + std::log(x) / (s.alpha * beta * sqrt_n);
}

inline double power_normalize(double log_y, double alpha) {
  if (log_y == -std::numeric_limits<double>::infinity()) return 0.0;
  return std::exp(alpha * log_y);
}

// JSON ingestion: exactly the ModelParams field names, unknown keys rejected.
// epsilon_aging and theta default when absent.
inline ModelParams params_from_json(const nlohmann::json& j) {
  static const char* const known[] = {"N", "p", "beta", "c", "omega", "epsilon_aging", "theta"};
  if (!j.is_object()) throw InvalidParameter("model parameters must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw InvalidParameter("unknown parameter key: " + key);
  }
  ModelParams m;
  try {
    m.N = j.at("N").get<int>();
    m.p = j.at("p").get<int>();
    m.beta = j.at("beta").get<double>();
    m.c = j.at("c").get<double>();
    m.omega = j.at("omega").get<double>();
    m.epsilon_aging = j.value("epsilon_aging", m.epsilon_aging);
    m.theta = j.value("theta", m.theta);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidParameter(std::string("bad model parameters: ") + e.what());
  }
  validate(m);
  return m;
}

inline nlohmann::json to_json(const ModelParams& m) {
  return {{"N", m.N},         {"p", m.p},     {"beta", m.beta},
          {"c", m.c},         {"omega", m.omega},
          {"epsilon_aging", m.epsilon_aging}, {"theta", m.theta}};
}

}  // namespace glassclock
