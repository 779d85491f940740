#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "glassclock/errors.hpp"

namespace glassclock {

inline constexpr double kZ95 = 1.959963984540054;

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

inline Interval wilson_interval(std::size_t successes, std::size_t n, double z = kZ95) {
  if (n == 0) throw InvalidParameter("wilson_interval: n must be >= 1");
  if (successes > n) throw InvalidParameter("wilson_interval: successes exceed n");
  const double nn = static_cast<double>(n);
  const double phat = static_cast<double>(successes) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double centre = (phat + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(phat * (1.0 - phat) / nn + z2 / (4.0 * nn * nn)) / denom;
  Interval ci{std::max(0.0, centre - half), std::min(1.0, centre + half)};
  if (successes == 0) ci.lo = 0.0;
  if (successes == n) ci.hi = 1.0;
  return ci;
}

// Welford accumulator; merge() combines partial results from workers.
class RunningStats {
 public:
  void push(double x) noexcept {
    ++n_;
    const double d = x - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (x - mean_);
  }

  void merge(const RunningStats& o) noexcept {
    if (o.n_ == 0) return;
    const double n = static_cast<double>(n_ + o.n_);
    const double d = o.mean_ - mean_;
    mean_ += d * static_cast<double>(o.n_) / n;
    m2_ += o.m2_ + d * d * static_cast<double>(n_) * static_cast<double>(o.n_) / n;
    n_ += o.n_;
  }

  std::size_t count() const noexcept { return n_; }
  double mean() const noexcept { return mean_; }
  double variance() const noexcept { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
  double std_error() const noexcept {
    return n_ > 0 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0;
  }
  Interval interval(double z = kZ95) const noexcept {
    return {mean_ - z * std_error(), mean_ + z * std_error()};
  }

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

// P(K > lambda) for the Kolmogorov distribution.
inline double kolmogorov_sf(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 1.0) {
    // Small-lambda form: P(K <= l) = sqrt(2 pi)/l sum exp(-(2k-1)^2 pi^2 / (8 l^2)).
    const double a = std::numbers::pi * std::numbers::pi / (8.0 * lambda * lambda);
    double cdf = 0.0;
    for (int k = 1; k < 100; ++k) {
      const double term = std::exp(-(2.0 * k - 1.0) * (2.0 * k - 1.0) * a);
      cdf += term;
      if (term < 1e-16 * cdf) break;
    }
    cdf *= std::sqrt(2.0 * std::numbers::pi) / lambda;
    return std::clamp(1.0 - cdf, 0.0, 1.0);
  }
  double sum = 0.0;
  for (int k = 1; k < 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? term : -term);
    if (term < 1e-10) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

struct KSReport {
  double statistic = 0.0;
  std::size_t n = 0;
  double p_value = 1.0;
  std::string target;
};

inline double ks_pvalue(double statistic, double effective_n) {
  const double sn = std::sqrt(effective_n);
  return kolmogorov_sf((sn + 0.12 + 0.11 / sn) * statistic);
}

/// One-sample KS statistic sup |F_n - F| against a continuous target CDF.
inline KSReport ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf,
                             std::string target = {}) {
  if (samples.empty()) throw InvalidParameter("ks_statistic: need at least one sample");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return {d, samples.size(), ks_pvalue(d, n), std::move(target)};
}

inline KSReport ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw InvalidParameter("ks_two_sample: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return {d, a.size() + b.size(), ks_pvalue(d, na * nb / (na + nb)), "two-sample"};
}

class EmpiricalCdf {
 public:
  explicit EmpiricalCdf(std::vector<double> samples) : x_(std::move(samples)) {
    if (x_.empty()) throw InvalidParameter("EmpiricalCdf: need at least one sample");
    std::sort(x_.begin(), x_.end());
  }
  double operator()(double t) const {
    return static_cast<double>(std::upper_bound(x_.begin(), x_.end(), t) - x_.begin()) /
           static_cast<double>(x_.size());
  }

 private:
  std::vector<double> x_;
};

inline EmpiricalCdf empirical_cdf(std::vector<double> samples) {
  return EmpiricalCdf(std::move(samples));
}

// Upper tail of the chi-square distribution with k degrees of freedom.
inline double chi_square_sf(double x, double k) {
  if (x <= 0.0) return 1.0;
  return boost::math::gamma_q(k / 2.0, x / 2.0);
}

}  // namespace glassclock
