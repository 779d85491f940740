#pragma once

// Random Hopping Time dynamics: the clock S_N(k) = sum_{i<k} e_i exp(beta sqrt(N) X(i)),
// the maximal process m_N(k) = max_{i<k} exp(beta sqrt(N) X(i)), and the
// statistics read off them. Everything is stored as natural logarithms.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <random>
#include <vector>

#include "glassclock/errors.hpp"
#include "glassclock/hamiltonian.hpp"
#include "glassclock/hypercube.hpp"
#include "glassclock/rng.hpp"
#include "glassclock/scales.hpp"

namespace glassclock {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double log_add(double a, double b) noexcept {
  if (a < b) std::swap(a, b);
  if (b == kNegInf) return a;
  return a + std::log1p(std::exp(b - a));
}

struct ClockRecord {
  double beta_sqrt_n = 0.0;
  std::vector<double> energies;   // X(0..k-1)
  std::vector<double> holds;      // e_0..e_{k-1}
  std::vector<double> log_terms;  // log e_i + beta sqrt(N) X(i)
  std::vector<double> log_S{kNegInf};
  std::vector<double> log_m{kNegInf};

  std::size_t steps() const noexcept { return energies.size(); }

  void push(double energy, double hold) {
    const double level = beta_sqrt_n * energy;
    const double term = std::log(hold) + level;
    energies.push_back(energy);
    holds.push_back(hold);
    log_terms.push_back(term);
    log_S.push_back(log_add(log_S.back(), term));
    log_m.push_back(std::max(log_m.back(), level));
  }

  // Rows (k, X(k), log_S(k), log_m(k)); log_S(k) covers terms 0..k-1.
  void write_csv(std::ostream& os) const {
    os << "k,energy,log_S,log_m\n";
    os.precision(17);
    for (std::size_t k = 0; k < steps(); ++k)
      os << k << ',' << energies[k] << ',' << log_S[k] << ',' << log_m[k] << '\n';
  }
};

inline ClockRecord make_record(const std::vector<double>& energies, const std::vector<double>& holds,
                               double beta_sqrt_n) {
  if (energies.size() != holds.size())
    throw InvalidParameter("make_record: energies and holds differ in length");
  ClockRecord rec;
  rec.beta_sqrt_n = beta_sqrt_n;
  for (std::size_t i = 0; i < energies.size(); ++i) {
    if (!(holds[i] > 0.0)) throw InvalidParameter("make_record: holding variables must be > 0");
    rec.push(energies[i], holds[i]);
  }
  return rec;
}

/// Runs the dynamics along a given trajectory; energies come from `source`,
/// holding variables from `holds`.
inline ClockRecord run_rht(double beta_sqrt_n, EnergySource& source, const Trajectory& traj,
                           Rng& holds, std::size_t steps) {
  if (steps < 1) throw InvalidParameter("run_rht: steps must be >= 1");
  if (traj.length() + 1 < steps) throw RecordTooShort(steps - 1, traj.length());
  std::exponential_distribution<double> expo(1.0);
  ClockRecord rec;
  rec.beta_sqrt_n = beta_sqrt_n;
  rec.push(source.start(traj.start()), expo(holds));
  auto flips = traj.flips();
  for (std::size_t i = 1; i < steps; ++i) rec.push(source.advance(flips[i - 1]), expo(holds));
  return rec;
}

/// Lazily extended run: walk, holds and energies advance together, each
/// from its own stream.
class RhtRun {
 public:
  RhtRun(int N, double beta, EnergySource energy, Rng walk, Rng holds)
      : N_(N),
        start_(SpinConfig::all_up(N)),
        energy_(std::move(energy)),
        walk_(std::move(walk)),
        holds_(std::move(holds)) {
    rec_.beta_sqrt_n = beta * std::sqrt(static_cast<double>(N));
  }

  void extend(std::size_t steps) {
    for (std::size_t s = 0; s < steps; ++s) step();
  }

  // Extends until log_S exceeds log_target or the record holds max_steps.
  // Returns true when the target was reached.
  bool run_until(double log_target, std::size_t max_steps) {
    while (rec_.log_S.back() <= log_target) {
      if (rec_.steps() >= max_steps) return false;
      step();
    }
    return true;
  }

  const ClockRecord& record() const noexcept { return rec_; }
  Trajectory trajectory() const { return Trajectory(start_, flips_); }
  std::span<const std::uint32_t> flips() const noexcept { return flips_; }

 private:
  void step() {
    double x;
    if (rec_.steps() == 0) {
      x = energy_.start(start_);
    } else {
      const auto f = draw_flip(N_, walk_);
      flips_.push_back(f);
      x = energy_.advance(f);
    }
    rec_.push(x, expo_(holds_));
  }

  int N_;
  SpinConfig start_;
  EnergySource energy_;
  Rng walk_;
  Rng holds_;
  std::exponential_distribution<double> expo_{1.0};
  std::vector<std::uint32_t> flips_;
  ClockRecord rec_;
};

// ---------------------------------------------------------------------------

struct SteppedPath {
  std::vector<double> times;
  std::vector<double> values;

  // Right-continuous evaluation.
  double at(double t) const {
    auto it = std::upper_bound(times.begin(), times.end(), t);
    if (it == times.begin()) return 0.0;
    return values[static_cast<std::size_t>(it - times.begin()) - 1];
  }
};

enum class PathKind { clock, maximal };

inline std::size_t grid_end(const TimeScale& ts, double T) {
  return static_cast<std::size_t>(std::floor(T * ts.r));
}

inline std::size_t required_steps(const TimeScale& ts, double T) {
  return static_cast<std::size_t>(std::ceil(T * ts.r));
}

inline SteppedPath rescaled_path(const ClockRecord& rec, const TimeScale& ts, PathKind which,
                                 double T) {
  const std::size_t need = required_steps(ts, T);
  if (rec.steps() < need) throw RecordTooShort(need, rec.steps());
  const auto& logs = which == PathKind::clock ? rec.log_S : rec.log_m;
  const std::size_t last = grid_end(ts, T);
  SteppedPath path;
  path.times.reserve(last + 1);
  path.values.reserve(last + 1);
  for (std::size_t i = 0; i <= last; ++i) {
    path.times.push_back(static_cast<double>(i) / ts.r);
    path.values.push_back(power_normalize(logs[i] - ts.log_t, ts.alpha));
  }
  return path;
}

// Value of the powered path at time t, without materializing it.
inline double rescaled_value(const ClockRecord& rec, const TimeScale& ts, PathKind which, double t) {
  const std::size_t i = grid_end(ts, t);
  if (rec.log_S.size() <= i) throw RecordTooShort(i, rec.steps());
  const auto& logs = which == PathKind::clock ? rec.log_S : rec.log_m;
  return power_normalize(logs[i] - ts.log_t, ts.alpha);
}

struct CoarseClock {
  int nu = 1;
  std::vector<double> log_S;  // log_S(j nu), j = 0, 1, ...
  std::vector<double> log_m;
};

inline CoarseClock coarse_grain(const ClockRecord& rec, int nu) {
  if (nu < 1) throw InvalidParameter("coarse_grain: nu must be >= 1");
  CoarseClock out;
  out.nu = nu;
  for (std::size_t k = 0; k < rec.log_S.size(); k += static_cast<std::size_t>(nu)) {
    out.log_S.push_back(rec.log_S[k]);
    out.log_m.push_back(rec.log_m[k]);
  }
  return out;
}

struct InverseResult {
  std::size_t k = 0;
  bool truncated = false;
};

// Smallest k with log_S(k) > log_target.
inline InverseResult clock_inverse(const ClockRecord& rec, double log_target) {
  auto it = std::upper_bound(rec.log_S.begin(), rec.log_S.end(), log_target);
  if (it == rec.log_S.end()) return {rec.steps(), true};
  return {static_cast<std::size_t>(it - rec.log_S.begin()), false};
}

struct AgingOutcome {
  bool aged = false;
  bool truncated = false;
  std::size_t k1 = 0;
  std::size_t k2 = 0;
};

inline double log_second_time(const TimeScale& ts, double theta) {
  return ts.log_t + std::log1p(theta) / ts.alpha;
}

/// Whether at most N eps / 2 spins differ between the sites occupied at
/// times t(N) and t(N) (1 + theta)^{1/alpha}.
inline AgingOutcome aging_indicator(const ClockRecord& rec, const Trajectory& traj,
                                    const TimeScale& ts, double theta, double epsilon) {
  if (!(theta >= 0.0)) throw InvalidParameter("aging_indicator: theta must be >= 0");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw InvalidParameter("aging_indicator: epsilon in (0,1)");
  const auto a = clock_inverse(rec, ts.log_t);
  const auto b = clock_inverse(rec, log_second_time(ts, theta));
  AgingOutcome out{false, a.truncated || b.truncated, a.k, b.k};
  if (out.truncated) return out;
  if (traj.length() + 1 < b.k) throw RecordTooShort(b.k - 1, traj.length());
  // Distance between position(k1-1) and position(k2-1) from the flips between.
  std::vector<unsigned char> odd(static_cast<std::size_t>(traj.dimension()), 0);
  int d = 0;
  auto flips = traj.flips();
  for (std::size_t i = a.k - 1; i < b.k - 1; ++i) {
    auto& o = odd[flips[i]];
    o ^= 1;
    d += o ? 1 : -1;
  }
  out.aged = d <= traj.dimension() * epsilon / 2.0;
  return out;
}

inline double sup_power_distance(const ClockRecord& rec, const TimeScale& ts, double T) {
  const std::size_t need = required_steps(ts, T);
  if (rec.steps() < need) throw RecordTooShort(need, rec.steps());
  const std::size_t last = grid_end(ts, T);
  double worst = 0.0;
  for (std::size_t i = 0; i <= last; ++i) {
    const double s = power_normalize(rec.log_S[i] - ts.log_t, ts.alpha);
    const double m = power_normalize(rec.log_m[i] - ts.log_t, ts.alpha);
    worst = std::max(worst, std::abs(s - m));
  }
  return worst;
}

}  // namespace glassclock
