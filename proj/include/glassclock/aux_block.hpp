#pragma once

// Block-independent auxiliary Gaussian process: within a block of size nu,
// U_i = G_1 Z_1 + ... + G_i Z_i - G_{i+1} Z_{i+1} - ... - G_nu Z_nu, so that
// Cov(U_i, U_j) = 1 - 2 p |i - j| / N.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include "glassclock/dynamics.hpp"
#include "glassclock/errors.hpp"
#include "glassclock/rng.hpp"
#include "glassclock/scales.hpp"
#include "glassclock/stats.hpp"

namespace glassclock {

struct BlockSpec {
  int N = 0;
  int p = 0;
  int nu = 1;
  double gamma1 = 1.0;
  double gamma = 0.0;

  BlockSpec() = default;
  BlockSpec(int N_, int p_, int nu_) : N(N_), p(p_), nu(nu_) {
    if (N < 1 || p < 1 || nu < 1) throw InvalidParameter("BlockSpec: bad dimensions");
    const double g1sq = 1.0 - static_cast<double>(p) * (nu - 1) / N;
    if (!(g1sq > 0.0)) throw InvalidParameter("BlockSpec: p (nu - 1) < N violated");
    gamma1 = std::sqrt(g1sq);
    gamma = std::sqrt(static_cast<double>(p) / N);
    if (std::abs(sum_of_squares() - 1.0) > 1e-12)
      throw NumericalError("BlockSpec: squared coefficients do not sum to one");
  }

  double sum_of_squares() const noexcept { return gamma1 * gamma1 + (nu - 1) * gamma * gamma; }
  double covariance(int i, int j) const noexcept {
    return 1.0 - 2.0 * p * std::abs(i - j) / static_cast<double>(N);
  }
};

inline BlockSpec block_spec(const ModelParams& m) {
  return BlockSpec(m.N, m.p, derive_scales(m).nu);
}

/// Writes one block into `out` (size nu) in O(nu).
inline void sample_block(const BlockSpec& spec, Rng& rng, std::span<double> out) {
  std::normal_distribution<double> gauss;
  double total = 0.0;
  for (int i = 0; i < spec.nu; ++i) {
    const double w = (i == 0 ? spec.gamma1 : spec.gamma) * gauss(rng);
    out[i] = w;
    total += w;
  }
  double prefix = 0.0;
  for (int i = 0; i < spec.nu; ++i) {
    prefix += out[i];
    out[i] = 2.0 * prefix - total;
  }
}

inline std::vector<double> sample_block(const BlockSpec& spec, Rng& rng) {
  std::vector<double> u(static_cast<std::size_t>(spec.nu));
  sample_block(spec, rng, u);
  return u;
}

struct ExceedanceEstimate {
  double x = 0.0;
  double rho = 0.0;
  double estimate = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  std::size_t replicates = 0;
  std::size_t hits = 0;
};

inline double block_rate_scale(const DerivedScales& s) { return s.r / s.nu; }

namespace detail {

inline ExceedanceEstimate scaled_proportion(double x, double rho, std::size_t hits, std::size_t n,
                                            double scale) {
  const auto ci = wilson_interval(hits, n);
  return {x, rho, scale * static_cast<double>(hits) / static_cast<double>(n), scale * ci.lo,
          scale * ci.hi, n, hits};
}

}  // namespace detail

/// (r/nu) P(max_i U_i >= C_N(x)) for every x, all from the same blocks.
inline std::vector<ExceedanceEstimate> block_max_exceedance(const BlockSpec& spec,
                                                            const DerivedScales& s, double beta,
                                                            std::span<const double> xs,
                                                            std::size_t replicates, Rng& rng) {
  if (replicates < 1) throw InvalidParameter("block_max_exceedance: replicates must be >= 1");
  std::vector<double> levels;
  for (double x : xs) levels.push_back(threshold_level(s, spec.N, beta, x));
  std::vector<std::size_t> hits(xs.size(), 0);
  std::vector<double> u(static_cast<std::size_t>(spec.nu));
  for (std::size_t r = 0; r < replicates; ++r) {
    sample_block(spec, rng, u);
    const double mx = *std::max_element(u.begin(), u.end());
    for (std::size_t k = 0; k < levels.size(); ++k) hits[k] += mx >= levels[k];
  }
  std::vector<ExceedanceEstimate> out;
  for (std::size_t k = 0; k < xs.size(); ++k)
    out.push_back(detail::scaled_proportion(xs[k], 0.0, hits[k], replicates, block_rate_scale(s)));
  return out;
}

inline ExceedanceEstimate block_max_exceedance(const BlockSpec& spec, const DerivedScales& s,
                                               double beta, double x, std::size_t replicates,
                                               Rng& rng) {
  const double xs[] = {x};
  return block_max_exceedance(spec, s, beta, xs, replicates, rng).front();
}

struct ResampleMask {
  std::size_t length = 0;
  double density = 0.0;
  std::vector<std::size_t> indices;
};

inline double mask_density(double rho, double alpha) {
  const double d = rho * alpha * alpha;
  if (!(d >= 0.0)) throw InvalidParameter("resample mask: density must be >= 0");
  if (d > 1.0) throw InvalidParameter("resample mask: rho alpha^2 exceeds 1");
  return d;
}

inline ResampleMask resample_mask(std::size_t length, double rho, double alpha, Rng& rng) {
  ResampleMask m{length, mask_density(rho, alpha), {}};
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t i = 0; i < length; ++i)
    if (unif(rng) < m.density) m.indices.push_back(i);
  return m;
}

/// Max over masked indices only. Blocks come from `blocks`, mask uniforms
/// from `masks`; the mask for index i is u_i < rho alpha^2 with the same u_i
/// for every rho, so estimates are coupled across rho and with the unmasked
/// estimator run on a copy of `blocks`.
inline std::vector<ExceedanceEstimate> resampled_max_exceedance(
    const BlockSpec& spec, const DerivedScales& s, double beta, std::span<const double> xs,
    std::span<const double> rhos, std::size_t replicates, Rng& blocks, Rng& masks) {
  if (replicates < 1) throw InvalidParameter("resampled_max_exceedance: replicates must be >= 1");
  std::vector<double> dens;
  for (double rho : rhos) dens.push_back(mask_density(rho, s.alpha));
  std::vector<double> levels;
  for (double x : xs) levels.push_back(threshold_level(s, spec.N, beta, x));
  std::vector<std::size_t> hits(rhos.size() * xs.size(), 0);
  std::vector<double> u(static_cast<std::size_t>(spec.nu));
  std::vector<double> w(u.size());
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t r = 0; r < replicates; ++r) {
    sample_block(spec, blocks, u);
    for (auto& v : w) v = unif(masks);
    for (std::size_t a = 0; a < dens.size(); ++a) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < u.size(); ++i)
        if (w[i] < dens[a]) mx = std::max(mx, u[i]);
      for (std::size_t k = 0; k < levels.size(); ++k) hits[a * xs.size() + k] += mx >= levels[k];
    }
  }
  std::vector<ExceedanceEstimate> out;
  for (std::size_t a = 0; a < rhos.size(); ++a)
    for (std::size_t k = 0; k < xs.size(); ++k)
      out.push_back(detail::scaled_proportion(xs[k], rhos[a], hits[a * xs.size() + k], replicates,
                                              block_rate_scale(s)));
  return out;
}

struct Prop2Estimate {
  double x = 0.0;
  double rho = 0.0;
  double estimate = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  std::size_t replicates = 0;
  // #{i : U_i >= C_N(x)} among blocks whose max exceeds the level.
  double conditional_count = 0.0;
  double conditional_count_se = 0.0;
  std::size_t exceeding_blocks = 0;
};

/// (r/nu) E[1 - exp(-rho alpha^2 #{i : U_i >= C_N(x)})].
inline Prop2Estimate prop2_functional(const BlockSpec& spec, const DerivedScales& s, double beta,
                                      double x, double rho, std::size_t replicates, Rng& rng) {
  if (replicates < 1) throw InvalidParameter("prop2_functional: replicates must be >= 1");
  const double dens = mask_density(rho, s.alpha);
  const double level = threshold_level(s, spec.N, beta, x);
  RunningStats f;
  RunningStats count;
  std::vector<double> u(static_cast<std::size_t>(spec.nu));
  for (std::size_t r = 0; r < replicates; ++r) {
    sample_block(spec, rng, u);
    const auto n = std::count_if(u.begin(), u.end(), [&](double v) { return v >= level; });
    f.push(-std::expm1(-dens * static_cast<double>(n)));
    if (n > 0) count.push(static_cast<double>(n));
  }
  const double scale = block_rate_scale(s);
  const auto ci = f.interval();
  return {x,
          rho,
          scale * f.mean(),
          scale * std::max(0.0, ci.lo),
          scale * ci.hi,
          replicates,
          count.mean(),
          count.std_error(),
          count.count()};
}

// ---------------------------------------------------------------------------
// Normal comparison bound.

using Matrix = std::vector<std::vector<double>>;

namespace detail {

inline void check_correlation_matrix(const Matrix& a, std::size_t n, const char* name) {
  if (a.size() != n) throw DimensionMismatch(std::string(name) + ": wrong number of rows");
  for (std::size_t i = 0; i < n; ++i) {
    if (a[i].size() != n) throw DimensionMismatch(std::string(name) + ": matrix is not square");
    if (std::abs(a[i][i] - 1.0) > 1e-12)
      throw InvalidParameter(std::string(name) + ": diagonal must be one");
    for (std::size_t j = 0; j < i; ++j)
      if (std::abs(a[i][j] - a[j][i]) > 1e-12)
        throw InvalidParameter(std::string(name) + ": matrix is not symmetric");
  }
  // Semidefiniteness via Cholesky with a small tolerance.
  std::vector<std::vector<double>> L(n, std::vector<double>(n, 0.0));
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j][j];
    for (std::size_t k = 0; k < j; ++k) d -= L[j][k] * L[j][k];
    if (d < -1e-10) throw InvalidParameter(std::string(name) + ": matrix is not semidefinite");
    L[j][j] = std::sqrt(std::max(d, 0.0));
    for (std::size_t i = j + 1; i < n; ++i) {
      double v = a[i][j];
      for (std::size_t k = 0; k < j; ++k) v -= L[i][k] * L[j][k];
      L[i][j] = L[j][j] > 1e-12 ? v / L[j][j] : 0.0;
    }
  }
}

}  // namespace detail

/// (1 / 2 pi) sum_{i<j} (L1_ij - L0_ij)_+ int_0^1 (1 - l_h^2)^{-1/2}
///   exp(-(u_i^2 + u_j^2 - 2 l_h u_i u_j) / (2 (1 - l_h^2))) dh,
/// with l_h = h L1_ij + (1 - h) L0_ij. The integrand can blow up only at an
/// endpoint where |l_h| = 1, and there like (1 - h)^{-1/2} at worst; the
/// tanh-sinh rule handles such endpoint singularities.
inline double normal_comparison_bound(const Matrix& cov0, const Matrix& cov1,
                                      std::span<const double> u) {
  const std::size_t n = u.size();
  if (n > 12) throw InvalidParameter("normal_comparison_bound: n must be <= 12");
  detail::check_correlation_matrix(cov0, n, "cov0");
  detail::check_correlation_matrix(cov1, n, "cov1");
  boost::math::quadrature::tanh_sinh<double> integrator;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double diff = cov1[i][j] - cov0[i][j];
      if (!(diff > 0.0)) continue;
      const double a = cov0[i][j];
      const double ui = u[i];
      const double uj = u[j];
      auto f = [&](double h) {
        const double l = h * cov1[i][j] + (1.0 - h) * a;
        const double one_minus = (1.0 - l) * (1.0 + l);
        if (!(one_minus > 0.0)) return 0.0;
        const double q = (ui * ui + uj * uj - 2.0 * l * ui * uj) / (2.0 * one_minus);
        return std::exp(-q) / std::sqrt(one_minus);
      };
      double err = 0.0;
      const double integral = integrator.integrate(f, 0.0, 1.0, 1e-9, &err);
      if (!std::isfinite(integral))
        throw NumericalError("normal_comparison_bound: quadrature did not converge");
      total += diff * integral;
    }
  }
  return total / (2.0 * std::numbers::pi);
}

// ---------------------------------------------------------------------------
// Deep blocks: blocks of nu steps whose maximal energy reaches C_N(delta).

/// Times k nu / r of blocks k with k nu < ceil(T r) whose maximal energy is at
/// least C_N(delta), i.e. beta sqrt(N) X >= log t(N) + log(delta) / alpha.
inline std::vector<double> deep_block_process(const ClockRecord& rec, const TimeScale& ts, int nu,
                                              double delta, double T) {
  if (nu < 1) throw InvalidParameter("deep_block_process: nu must be >= 1");
  if (!(delta > 0.0)) throw DomainError("deep_block_process requires delta > 0");
  const std::size_t need = required_steps(ts, T);
  if (rec.steps() < need) throw RecordTooShort(need, rec.steps());
  const double level = ts.log_t + std::log(delta) / ts.alpha;
  const std::size_t unu = static_cast<std::size_t>(nu);
  std::vector<double> points;
  for (std::size_t start = 0; start < need; start += unu) {
    const std::size_t stop = std::min(start + unu, rec.steps());
    for (std::size_t i = start; i < stop; ++i) {
      if (rec.beta_sqrt_n * rec.energies[i] >= level) {
        points.push_back(static_cast<double>(start) / ts.r);
        break;
      }
    }
  }
  return points;
}

inline double deep_block_intensity(double K, double beta, double delta) {
  return K / std::pow(delta, 1.0 / (beta * beta));
}

}  // namespace glassclock
