#pragma once

// Limit objects: the extremal process generated by G(x) = exp(-x^{-1/beta^2}),
// time-changed by K, and the first-passage series for a Gaussian walk with
// drift d_N (Sparre Andersen).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "glassclock/dynamics.hpp"
#include "glassclock/errors.hpp"
#include "glassclock/rng.hpp"
#include "glassclock/stats.hpp"

namespace glassclock {

struct ExtremalLaw {
  double beta = 1.0;
  double K = 4.0;

  ExtremalLaw(double beta_, double K_) : beta(beta_), K(K_) {
    if (!(beta > 0.0) || !(K > 0.0)) throw InvalidParameter("ExtremalLaw: beta and K must be > 0");
  }

  double tail_exponent() const noexcept { return 1.0 / (beta * beta); }
};

// P(Y(K t) <= x)
inline double fixed_time_cdf(const ExtremalLaw& law, double t, double x) {
  if (!(t >= 0.0)) throw InvalidParameter("fixed_time_cdf: t must be >= 0");
  if (t == 0.0) return 1.0;
  if (!(x > 0.0)) return 0.0;
  if (std::isinf(x)) return 1.0;
  return std::exp(-law.K * t * std::pow(x, -law.tail_exponent()));
}

// Inverse of fixed_time_cdf in x, for q in (0, 1).
inline double fixed_time_quantile(const ExtremalLaw& law, double t, double q) {
  if (!(q > 0.0 && q < 1.0)) throw InvalidParameter("fixed_time_quantile: q in (0,1)");
  return std::pow(law.K * t / -std::log(q), law.beta * law.beta);
}

/// P(Y(K t_1) <= x_1, ..., Y(K t_l) <= x_l) for nondecreasing times. Since
/// the process is nondecreasing, each x_k may be replaced by min_{j >= k} x_j,
/// after which the probability is a product over time increments.
inline double fdd_cdf(const ExtremalLaw& law, std::span<const double> times,
                      std::span<const double> xs) {
  if (times.size() != xs.size() || times.empty())
    throw InvalidParameter("fdd_cdf: times and xs must be nonempty and of equal length");
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (!(times[k] >= 0.0)) throw InvalidParameter("fdd_cdf: times must be >= 0");
    if (k > 0 && times[k] < times[k - 1]) throw InvalidParameter("fdd_cdf: times must be sorted");
  }
  std::vector<double> eff(xs.begin(), xs.end());
  for (std::size_t k = eff.size() - 1; k-- > 0;) eff[k] = std::min(eff[k], eff[k + 1]);
  double prob = 1.0;
  double prev = 0.0;
  for (std::size_t k = 0; k < times.size(); ++k) {
    prob *= fixed_time_cdf(law, times[k] - prev, eff[k]);
    prev = times[k];
  }
  return prob;
}

inline double range_gap_probability(const ExtremalLaw& law, double a, double b) {
  if (!(a > 0.0 && a <= b)) throw InvalidParameter("range_gap_probability: need 0 < a <= b");
  return std::pow(a / b, law.tail_exponent());
}

// (1 + theta)^{-1/beta^2}, i.e. the probability that the range skips (1, 1 + theta).
inline double aging_function(double beta, double theta) {
  if (!(theta >= 0.0)) throw InvalidParameter("aging_function: theta must be >= 0");
  return range_gap_probability(ExtremalLaw(beta, 1.0), 1.0, 1.0 + theta);
}

inline constexpr double kExtremalFloorBias = 1e-12;

/// Running max of a Poisson process on [0, T] x (floor_x0, inf) with
/// intensity K dt (1/beta^2) x^{-1-1/beta^2} dx. The path is 0 until the
/// first point; a floor that the true path would sit below with probability
/// above 1e-12 is rejected.
inline SteppedPath sample_extremal_path(const ExtremalLaw& law, double T, double floor_x0,
                                        Rng& rng) {
  if (!(T >= 0.0)) throw InvalidParameter("sample_extremal_path: T must be >= 0");
  if (!(floor_x0 > 0.0)) throw InvalidParameter("sample_extremal_path: floor must be > 0");
  const double mass = law.K * T * std::pow(floor_x0, -law.tail_exponent());
  if (T > 0.0 && std::exp(-mass) >= kExtremalFloorBias)
    throw BiasError("sample_extremal_path: floor too high, path below it with probability " +
                    std::to_string(std::exp(-mass)));
  std::poisson_distribution<long long> count(mass);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const long long n = T > 0.0 ? count(rng) : 0;
  std::vector<std::pair<double, double>> pts(static_cast<std::size_t>(n));
  for (auto& [t, x] : pts) {
    t = T * unif(rng);
    x = floor_x0 * std::pow(1.0 - unif(rng), -law.beta * law.beta);
  }
  std::sort(pts.begin(), pts.end());
  SteppedPath path;
  path.times.push_back(0.0);
  path.values.push_back(0.0);
  for (const auto& [t, x] : pts) {
    if (x > path.values.back()) {
      path.times.push_back(t);
      path.values.push_back(x);
    }
  }
  return path;
}

// Smallest floor with bias below 1e-12 for the given horizon, times a margin.
inline double default_extremal_floor(const ExtremalLaw& law, double T) {
  const double need = law.K * T / -std::log(kExtremalFloorBias);
  return 0.5 * std::pow(need, law.beta * law.beta);
}

// ---------------------------------------------------------------------------
// First passage below zero of V_k = Z_1 + ... + Z_k + k d_N.

inline double normal_sf(double y) { return 0.5 * std::erfc(y / std::numbers::sqrt2); }
inline double normal_pdf(double y) {
  return std::exp(-0.5 * y * y) / std::sqrt(2.0 * std::numbers::pi);
}

// Bound on sum_{k > cap} P(Z > d sqrt k) / k from P(Z > y) <= phi(y) / y and
// comparison with the integral from cap.
inline double sa_tail_bound(double d, std::uint64_t cap) {
  const double c = static_cast<double>(cap);
  return 2.0 * normal_pdf(d * std::sqrt(c)) / (d * d * d * c * std::sqrt(c));
}

// int_cap^inf P(Z > d sqrt x) dx in closed form; bounds sum_{k > cap} P(Z > d sqrt k).
inline double sa_second_tail(double d, std::uint64_t cap) {
  const double y = d * std::sqrt(static_cast<double>(cap));
  return ((1.0 - y * y) * normal_sf(y) + y * normal_pdf(y)) / (d * d);
}

struct SAParams {
  double d_N = 0.0;
  std::uint64_t series_cap = 0;
  double tail_tol = 1e-10;
};

inline std::uint64_t sa_cap_for(double d, double tail_tol) {
  if (!(d > 0.0)) throw InvalidParameter("SA series: d_N must be > 0");
  if (!(tail_tol > 0.0)) throw InvalidParameter("SA series: tail_tol must be > 0");
  std::uint64_t hi = 1;
  while (sa_tail_bound(d, hi) > tail_tol) {
    if (hi > (std::uint64_t{1} << 50))
      throw NumericalError("SA series: tail tolerance unattainable");
    hi *= 2;
  }
  std::uint64_t lo = hi / 2;
  while (hi - lo > 1) {
    const std::uint64_t mid = lo + (hi - lo) / 2;
    (sa_tail_bound(d, mid) > tail_tol ? lo : hi) = mid;
  }
  return hi;
}

inline SAParams make_sa_params(double d_N, double tail_tol = 1e-10) {
  return {d_N, sa_cap_for(d_N, tail_tol), tail_tol};
}

struct SASums {
  double first = 0.0;   // sum (s^k / k) P(Z > d sqrt k)
  double second = 0.0;  // sum k s^{k-1} (1/k) P(Z > d sqrt k), at s = 1 plain sum
  double first_tail = 0.0;
  double second_tail = 0.0;
};

namespace detail {

struct Neumaier {
  double sum = 0.0;
  double comp = 0.0;
  void add(double v) noexcept {
    const double t = sum + v;
    comp += std::abs(sum) >= std::abs(v) ? (sum - t) + v : (v - t) + sum;
    sum = t;
  }
  double value() const noexcept { return sum + comp; }
};

}  // namespace detail

inline SASums sa_sums(const SAParams& prm, double s = 1.0) {
  if (!(s >= 0.0 && s <= 1.0)) throw InvalidParameter("SA series: s must lie in [0, 1]");
  if (!(prm.d_N > 0.0)) throw InvalidParameter("SA series: d_N must be > 0");
  const double bound = sa_tail_bound(prm.d_N, prm.series_cap);
  if (bound > prm.tail_tol)
    throw NumericalError("SA series: tail bound " + std::to_string(bound) +
                         " exceeds tolerance at cap " + std::to_string(prm.series_cap));
  detail::Neumaier a;
  detail::Neumaier b;
  double sk = 1.0;  // s^{k-1}
  const double d = prm.d_N;
  for (std::uint64_t k = 1; k <= prm.series_cap; ++k) {
    const double q = normal_sf(d * std::sqrt(static_cast<double>(k)));
    b.add(sk * q);
    sk *= s;
    a.add(sk * q / static_cast<double>(k));
    if (sk == 0.0) break;
  }
  return {a.value(), b.value(), bound, sa_second_tail(d, prm.series_cap)};
}

struct SAValue {
  double value = 0.0;
  double error = 0.0;  // certified bound on the truncation error
};

// E[s^tau; tau < inf] = 1 - exp(-sum (s^k/k) P(Z > d sqrt k)).
inline SAValue sa_mgf(const SAParams& prm, double s) {
  if (s == 0.0) return {0.0, 0.0};
  const auto sums = sa_sums(prm, s);
  const double e = std::exp(-sums.first);
  return {1.0 - e, e * sums.first_tail};
}

inline SAValue sa_p_infinite(const SAParams& prm) {
  const auto sums = sa_sums(prm);
  const double e = std::exp(-sums.first);
  return {e, e * sums.first_tail};
}

// E[tau; tau < inf], the s-derivative of sa_mgf at s = 1.
inline SAValue sa_expected_finite(const SAParams& prm) {
  const auto sums = sa_sums(prm);
  const double e = std::exp(-sums.first);
  const double value = e * sums.second;
  return {value, e * sums.second_tail + value * sums.first_tail};
}

struct SAConstants {
  double alpha = 0.0;
  double d_N = 0.0;
  double p_inf = 0.0;
  double p_inf_over_alpha = 0.0;
  double e_tau_finite = 0.0;
  double alpha_times_e_tau = 0.0;
  double certified_error = 0.0;  // on p_inf
  double e_tau_error = 0.0;
};

inline SAConstants sa_constants(double alpha, int p, double beta, double tail_tol = 1e-10) {
  const double d = alpha * std::sqrt(static_cast<double>(p)) / beta;
  const auto prm = make_sa_params(d, tail_tol);
  const auto sums = sa_sums(prm);
  const double e = std::exp(-sums.first);
  SAConstants c;
  c.alpha = alpha;
  c.d_N = d;
  c.p_inf = e;
  c.p_inf_over_alpha = e / alpha;
  c.e_tau_finite = e * sums.second;
  c.alpha_times_e_tau = alpha * c.e_tau_finite;
  c.certified_error = e * sums.first_tail;
  c.e_tau_error = e * sums.second_tail + c.e_tau_finite * sums.first_tail;
  return c;
}

// Limit of alpha E[tau; tau < inf]: P(tau = inf) ~ K1 alpha and
// alpha^2 sum_k P(Z > d sqrt k) -> alpha^2 int_0^inf P(Z > d sqrt x) dx
// = alpha^2 / (2 d^2) = beta^2 / (2 p), so the product tends to beta / sqrt(2 p).
inline double k2_integral_limit(int p, double beta) {
  return beta / std::sqrt(2.0 * p);
}

// Extrapolates f(a) -> f(0) from two points assuming f(a) = f(0) + c a.
inline double richardson_linear(double a_coarse, double f_coarse, double a_fine, double f_fine) {
  return (a_coarse * f_fine - a_fine * f_coarse) / (a_coarse - a_fine);
}

struct FirstPassageMC {
  double survival = 0.0;
  double survival_lo = 0.0;
  double survival_hi = 0.0;
  double mean_tau_finite = 0.0;  // E[tau; tau < inf]
  double mean_tau_finite_se = 0.0;
  double allowance = 0.0;  // bound on probability misclassified by stopping rules
  std::size_t replicates = 0;
  std::size_t finite = 0;
};

/// Simulates the walk until it goes below zero, until step_cap, or until
/// V_k is so high that exp(-2 d V_k) (a martingale bound on ever returning
/// below zero) drops under 1e-12. Walks stopped without crossing count as
/// surviving; `allowance` bounds the probability this misclassifies.
inline FirstPassageMC mc_first_passage(double d_N, std::size_t replicates, std::uint64_t step_cap,
                                       Rng& rng) {
  if (!(d_N > 0.0)) throw InvalidParameter("mc_first_passage: d_N must be > 0");
  if (replicates < 1) throw InvalidParameter("mc_first_passage: replicates must be >= 1");
  const double escape = -std::log(1e-12) / (2.0 * d_N);
  std::normal_distribution<double> gauss;
  std::size_t survived = 0;
  RunningStats tau_finite;  // tau 1{tau < inf} per replicate
  for (std::size_t r = 0; r < replicates; ++r) {
    double v = 0.0;
    std::uint64_t k = 0;
    bool crossed = false;
    while (k < step_cap) {
      ++k;
      v += gauss(rng) + d_N;
      if (v < 0.0) {
        crossed = true;
        break;
      }
      if (v > escape) break;
    }
    if (crossed) {
      tau_finite.push(static_cast<double>(k));
    } else {
      tau_finite.push(0.0);
      ++survived;
    }
  }
  FirstPassageMC out;
  out.replicates = replicates;
  out.finite = replicates - survived;
  out.survival = static_cast<double>(survived) / static_cast<double>(replicates);
  const auto ci = wilson_interval(survived, replicates);
  out.survival_lo = ci.lo;
  out.survival_hi = ci.hi;
  out.mean_tau_finite = tau_finite.mean();
  out.mean_tau_finite_se = tau_finite.std_error();
  out.allowance = 1e-12 + std::min(1.0, sa_second_tail(d_N, step_cap));
  return out;
}

}  // namespace glassclock
