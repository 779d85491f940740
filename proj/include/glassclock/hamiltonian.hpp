#pragma once

// Energies H_N along a walk. Three interchangeable backends:
//   * exact: a sampled coupling tensor J over all ordered p-tuples,
//   * conditional: Gaussian sampling of X(i) given a window of earlier values
//     with covariance (1 - 2 dist / N)^p,
//   * rem: i.i.d. standard normal per distinct visited site.

#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "glassclock/errors.hpp"
#include "glassclock/hypercube.hpp"
#include "glassclock/rng.hpp"

namespace glassclock {

inline constexpr std::uint64_t kMaxCouplings = std::uint64_t{1} << 31;
inline constexpr std::uint64_t kExactBackendLimit = std::uint64_t{1} << 24;

inline std::uint64_t tuple_count(int N, int p) {
  std::uint64_t n = 1;
  for (int i = 0; i < p; ++i) {
    n *= static_cast<std::uint64_t>(N);
    if (n > kMaxCouplings * 64) break;
  }
  return n;
}

// J_{i1..ip} stored flat with the last index fastest. For p = 2 the matrix of
// pair sums J_kj + J_jk (zero diagonal) is kept alongside for O(N) flips.
class CouplingTensor {
 public:
  CouplingTensor(int N, int p, std::vector<double> couplings)
      : N_(N), p_(p), J_(std::move(couplings)) {
    if (N < 1 || p < 1) throw InvalidParameter("CouplingTensor: bad dimensions");
    if (J_.size() != tuple_count(N, p))
      throw InvalidParameter("CouplingTensor: length must be N^p");
    norm_ = std::pow(static_cast<double>(N), -0.5 * p);
    if (p == 2) {
      pairs_.assign(J_.size(), 0.0);
      for (int k = 0; k < N; ++k)
        for (int j = 0; j < N; ++j)
          if (j != k) pairs_[idx2(k, j)] = J_[idx2(k, j)] + J_[idx2(j, k)];
    }
  }

  int N() const noexcept { return N_; }
  int p() const noexcept { return p_; }
  double normalization() const noexcept { return norm_; }  // N^{-p/2}
  std::span<const double> couplings() const noexcept { return J_; }
  std::span<const double> pair_sums() const noexcept { return pairs_; }

 private:
  std::size_t idx2(int a, int b) const noexcept {
    return static_cast<std::size_t>(a) * static_cast<std::size_t>(N_) + static_cast<std::size_t>(b);
  }

  int N_;
  int p_;
  std::vector<double> J_;
  std::vector<double> pairs_;
  double norm_ = 1.0;
};

inline CouplingTensor sample_disorder(int N, int p, Rng& rng) {
  const auto n = tuple_count(N, p);
  if (n > kMaxCouplings)
    throw SizeBudgetExceeded("N^p = " + std::to_string(n) +
                             " couplings exceed the 2^31 budget; use the conditional backend");
  std::normal_distribution<double> gauss;
  std::vector<double> J(n);
  for (auto& v : J) v = gauss(rng);
  return CouplingTensor(N, p, std::move(J));
}

inline std::vector<double> spins_as_doubles(const SpinConfig& s) {
  std::vector<double> out(static_cast<std::size_t>(s.size()));
  for (int i = 0; i < s.size(); ++i) out[i] = s.spin(i);
  return out;
}

// Full O(N^p) evaluation by contracting the last index repeatedly.
inline double energy(const CouplingTensor& t, const SpinConfig& sigma) {
  if (t.N() != sigma.size()) throw DimensionMismatch("energy: tensor and configuration differ in N");
  const auto spins = spins_as_doubles(sigma);
  const std::size_t N = static_cast<std::size_t>(t.N());
  std::vector<double> cur(t.couplings().begin(), t.couplings().end());
  while (cur.size() > 1) {
    std::vector<double> next(cur.size() / N, 0.0);
    for (std::size_t a = 0; a < next.size(); ++a) {
      double acc = 0.0;
      const double* row = cur.data() + a * N;
      for (std::size_t i = 0; i < N; ++i) acc += row[i] * spins[i];
      next[a] = acc;
    }
    cur.swap(next);
  }
  return cur.front() * t.normalization();
}

struct EnergyState {
  SpinConfig config;
  std::vector<double> spins;  // +-1 as doubles, kept in step with config
  double energy = 0.0;
};

inline EnergyState make_energy_state(const CouplingTensor& t, SpinConfig config) {
  EnergyState s;
  s.energy = energy(t, config);
  s.spins = spins_as_doubles(config);
  s.config = std::move(config);
  return s;
}

namespace detail {

// Sum over tuples in which index k appears an odd number of times of
// J_t * prod_{positions not equal to k} sigma. Enumerates only tuples that
// contain k, O(p N^{p-1}).
inline void odd_field_rec(const CouplingTensor& t, std::span<const double> spins, int k, int pos,
                          std::size_t idx, double sign, int count, double& acc) {
  const int N = t.N();
  const int p = t.p();
  if (pos == p) {
    if (count & 1) acc += t.couplings()[idx] * sign;
    return;
  }
  for (int i = 0; i < N; ++i) {
    const std::size_t next = idx * static_cast<std::size_t>(N) + static_cast<std::size_t>(i);
    if (i == k) {
      odd_field_rec(t, spins, k, pos + 1, next, sign, count + 1, acc);
    } else if (count > 0 || pos < p - 1) {
      odd_field_rec(t, spins, k, pos + 1, next, sign * spins[i], count, acc);
    }
  }
}

}  // namespace detail

// Flipping spin k changes H by -2 sigma_k F_k N^{-p/2}, where F_k collects the
// tuples carrying k an odd number of times.
inline void flip_update(EnergyState& s, const CouplingTensor& t, int k) {
  if (k < 0 || k >= t.N()) throw InvalidParameter("flip_update: coordinate out of range");
  double field = 0.0;
  if (t.p() == 2) {
    const auto row = t.pair_sums().subspan(static_cast<std::size_t>(k) * t.N(), t.N());
    for (int j = 0; j < t.N(); ++j) field += row[j] * s.spins[j];
  } else {
    detail::odd_field_rec(t, s.spins, k, 0, 0, 1.0, 0, field);
  }
  s.energy += -2.0 * s.spins[k] * field * t.normalization();
  s.spins[k] = -s.spins[k];
  s.config.flip(k);
}

inline double kernel(int d, int N, int p) {
  if (d < 0 || d > N) throw InvalidParameter("kernel: distance out of range");
  return std::pow(1.0 - 2.0 * d / N, p);
}

inline std::vector<double> exact_energy_sequence(const CouplingTensor& t, const Trajectory& traj) {
  if (t.N() != traj.dimension()) throw DimensionMismatch("exact_energy_sequence: N differs");
  std::vector<double> out;
  out.reserve(traj.length() + 1);
  auto state = make_energy_state(t, traj.start());
  out.push_back(state.energy);
  for (auto f : traj.flips()) {
    flip_update(state, t, static_cast<int>(f));
    out.push_back(state.energy);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sequential conditional sampling over a sliding window.

inline constexpr double kConditionalJitter = 1e-10;
inline constexpr double kConditionalFailure = 1e-6;

/// Samples X(i) given the last `window` values, with covariances from
/// kernel(). Maintains the Cholesky factor L of the window covariance and the
/// whitened values z = L^{-1} x, so each step costs O(window^2): appending a
/// point adds one row; dropping the oldest point is a rank-one update of the
/// trailing block.
class TrajectoryGaussianState {
 public:
  TrajectoryGaussianState(int N, int p, std::size_t window) : N_(N), p_(p), window_(window) {
    if (window < 1) throw InvalidParameter("conditional sampler: window must be >= 1");
  }

  std::size_t window() const noexcept { return window_; }
  std::size_t size() const noexcept { return pos_.size(); }
  std::size_t jitter_count() const noexcept { return jitters_; }

  double sample_next(const SpinConfig& position, Rng& rng) {
    const std::size_t m = pos_.size();
    std::vector<double> v(m);
    for (std::size_t j = 0; j < m; ++j) v[j] = kernel(hamming_distance(position, pos_[j]), N_, p_);
    // Forward solve L v = c in place.
    double mean = 0.0;
    double explained = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      double acc = v[i];
      for (std::size_t j = 0; j < i; ++j) acc -= L_[i][j] * v[j];
      v[i] = acc / L_[i][i];
      mean += v[i] * z_[i];
      explained += v[i] * v[i];
    }
    double var = 1.0 - explained;
    if (var < kConditionalJitter) {
      if (var < -kConditionalFailure)
        throw NumericalError("conditional variance " + std::to_string(var) +
                             " is not positive; window covariance is ill-conditioned");
      var = kConditionalJitter;
      ++jitters_;
    }
    std::normal_distribution<double> gauss;
    const double g = gauss(rng);
    const double x = mean + std::sqrt(var) * g;

    v.push_back(std::sqrt(var));
    L_.push_back(std::move(v));
    z_.push_back(g);
    pos_.push_back(position);
    x_.push_back(x);
    if (pos_.size() > window_) drop_oldest();
    return x;
  }

 private:
  void drop_oldest() {
    const std::size_t m = L_.size() - 1;
    std::vector<double> u(m);
    for (std::size_t i = 0; i < m; ++i) u[i] = L_[i + 1][0];
    L_.erase(L_.begin());
    for (auto& row : L_) row.erase(row.begin());
    // L' L'^T = L22 L22^T + u u^T
    for (std::size_t k = 0; k < m; ++k) {
      const double lkk = L_[k][k];
      const double r = std::hypot(lkk, u[k]);
      const double c = r / lkk;
      const double s = u[k] / lkk;
      L_[k][k] = r;
      for (std::size_t i = k + 1; i < m; ++i) {
        L_[i][k] = (L_[i][k] + s * u[i]) / c;
        u[i] = c * u[i] - s * L_[i][k];
      }
    }
    pos_.pop_front();
    x_.pop_front();
    z_.assign(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      double acc = x_[i];
      for (std::size_t j = 0; j < i; ++j) acc -= L_[i][j] * z_[j];
      z_[i] = acc / L_[i][i];
    }
  }

  int N_;
  int p_;
  std::size_t window_;
  std::deque<SpinConfig> pos_;
  std::deque<double> x_;
  std::vector<std::vector<double>> L_;
  std::vector<double> z_;
  std::size_t jitters_ = 0;
};

inline constexpr std::size_t kFullWindow = std::numeric_limits<std::size_t>::max();

inline std::vector<double> conditional_energy_sequence(const Trajectory& traj, int p,
                                                       std::size_t window, Rng& rng) {
  TrajectoryGaussianState state(traj.dimension(), p, window);
  std::vector<double> out;
  out.reserve(traj.length() + 1);
  SpinConfig s = traj.start();
  out.push_back(state.sample_next(s, rng));
  for (auto f : traj.flips()) {
    s.flip(static_cast<int>(f));
    out.push_back(state.sample_next(s, rng));
  }
  return out;
}

// Revisited sites reuse their value.
inline std::vector<double> rem_energy_sequence(const Trajectory& traj, Rng& rng) {
  std::unordered_map<SpinConfig, double, SpinConfigHash> seen;
  std::normal_distribution<double> gauss;
  std::vector<double> out;
  out.reserve(traj.length() + 1);
  SpinConfig s = traj.start();
  auto lookup = [&](const SpinConfig& c) {
    auto [it, fresh] = seen.try_emplace(c, 0.0);
    if (fresh) it->second = gauss(rng);
    return it->second;
  };
  out.push_back(lookup(s));
  for (auto f : traj.flips()) {
    s.flip(static_cast<int>(f));
    out.push_back(lookup(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Backends behind one interface: start(config) then advance(flip index).

class ExactEnergy {
 public:
  explicit ExactEnergy(std::shared_ptr<const CouplingTensor> tensor) : tensor_(std::move(tensor)) {}

  double start(const SpinConfig& s) {
    state_ = make_energy_state(*tensor_, s);
    return state_.energy;
  }
  double advance(std::uint32_t k) {
    flip_update(state_, *tensor_, static_cast<int>(k));
    return state_.energy;
  }
  const EnergyState& state() const noexcept { return state_; }

 private:
  std::shared_ptr<const CouplingTensor> tensor_;
  EnergyState state_;
};

class ConditionalEnergy {
 public:
  ConditionalEnergy(int N, int p, std::size_t window, Rng rng)
      : sampler_(N, p, window), rng_(std::move(rng)) {}

  double start(const SpinConfig& s) {
    pos_ = s;
    return sampler_.sample_next(pos_, rng_);
  }
  double advance(std::uint32_t k) {
    pos_.flip(static_cast<int>(k));
    return sampler_.sample_next(pos_, rng_);
  }

 private:
  TrajectoryGaussianState sampler_;
  Rng rng_;
  SpinConfig pos_;
};

class RemEnergy {
 public:
  explicit RemEnergy(Rng rng) : rng_(std::move(rng)) {}

  double start(const SpinConfig& s) {
    seen_.clear();
    pos_ = s;
    return lookup();
  }
  double advance(std::uint32_t k) {
    pos_.flip(static_cast<int>(k));
    return lookup();
  }
  std::size_t distinct_sites() const noexcept { return seen_.size(); }

 private:
  double lookup() {
    auto [it, fresh] = seen_.try_emplace(pos_, 0.0);
    if (fresh) it->second = gauss_(rng_);
    return it->second;
  }

  Rng rng_;
  std::normal_distribution<double> gauss_;
  std::unordered_map<SpinConfig, double, SpinConfigHash> seen_;
  SpinConfig pos_;
};

enum class Backend { exact, conditional, rem };

inline Backend default_backend(int N, int p) {
  return tuple_count(N, p) <= kExactBackendLimit ? Backend::exact : Backend::conditional;
}

class EnergySource {
 public:
  template <class B>
  EnergySource(B backend) : impl_(std::move(backend)) {}  // NOLINT(google-explicit-constructor)

  double start(const SpinConfig& s) {
    return std::visit([&](auto& b) { return b.start(s); }, impl_);
  }
  double advance(std::uint32_t k) {
    return std::visit([&](auto& b) { return b.advance(k); }, impl_);
  }

 private:
  std::variant<ExactEnergy, ConditionalEnergy, RemEnergy> impl_;
};

// Builds a backend for one replicate from its disorder stream.
inline EnergySource make_energy_source(Backend backend, int N, int p, std::size_t window,
                                       Rng disorder) {
  switch (backend) {
    case Backend::exact:
      return ExactEnergy(std::make_shared<const CouplingTensor>(sample_disorder(N, p, disorder)));
    case Backend::conditional:
      return ConditionalEnergy(N, p, window, std::move(disorder));
    case Backend::rem:
      return RemEnergy(std::move(disorder));
  }
  throw InvalidParameter("unknown backend");
}

// Disorder snapshots are seed + parameters; tensors are regenerated.
struct DisorderSnapshot {
  int N = 0;
  int p = 0;
  std::uint64_t seed = 0;

  CouplingTensor regenerate() const {
    Rng rng = make_stream(seed);
    return sample_disorder(N, p, rng);
  }
  nlohmann::json to_json() const { return {{"N", N}, {"p", p}, {"seed", seed}}; }
  static DisorderSnapshot from_json(const nlohmann::json& j) {
    return {j.at("N").get<int>(), j.at("p").get<int>(), j.at("seed").get<std::uint64_t>()};
  }
};

}  // namespace glassclock
