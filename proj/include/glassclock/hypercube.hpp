#pragma once

// Simple random walk on {-1,+1}^N, its distance process, and the
// birth-death chain that the distance process follows.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "glassclock/errors.hpp"
#include "glassclock/rng.hpp"

namespace glassclock {

// Packed spins; a set bit means spin -1.
class SpinConfig {
 public:
  SpinConfig() = default;
  explicit SpinConfig(int n) : n_(n), words_((static_cast<std::size_t>(n) + 63) / 64, 0) {
    if (n < 1) throw InvalidParameter("SpinConfig needs at least one spin");
  }

  static SpinConfig all_up(int n) { return SpinConfig(n); }

  static SpinConfig random(int n, Rng& rng) {
    SpinConfig s(n);
    for (auto& w : s.words_) w = rng();
    s.mask_tail();
    return s;
  }

  int size() const noexcept { return n_; }

  int spin(int i) const noexcept { return bit(i) ? -1 : 1; }

  bool bit(int i) const noexcept {
    return (words_[static_cast<std::size_t>(i) >> 6] >> (i & 63)) & 1U;
  }

  void flip(int i) noexcept { words_[static_cast<std::size_t>(i) >> 6] ^= std::uint64_t{1} << (i & 63); }

  SpinConfig flipped_all() const {
    SpinConfig s = *this;
    for (auto& w : s.words_) w = ~w;
    s.mask_tail();
    return s;
  }

  std::span<const std::uint64_t> words() const noexcept { return words_; }
  std::span<std::uint64_t> words() noexcept { return words_; }

  std::uint64_t hash() const noexcept {
    std::uint64_t h = splitmix64(static_cast<std::uint64_t>(n_));
    for (auto w : words_) h = hash_combine(h, w);
    return h;
  }

  friend bool operator==(const SpinConfig&, const SpinConfig&) = default;

 private:
  void mask_tail() noexcept {
    const int rem = n_ & 63;
    if (rem != 0 && !words_.empty()) words_.back() &= (std::uint64_t{1} << rem) - 1;
  }

  int n_ = 0;
  std::vector<std::uint64_t> words_;
};

struct SpinConfigHash {
  std::size_t operator()(const SpinConfig& s) const noexcept { return s.hash(); }
};

inline int hamming_distance(const SpinConfig& a, const SpinConfig& b) {
  if (a.size() != b.size()) throw DimensionMismatch("hamming_distance: dimensions differ");
  int d = 0;
  auto wa = a.words();
  auto wb = b.words();
  for (std::size_t i = 0; i < wa.size(); ++i) d += std::popcount(wa[i] ^ wb[i]);
  return d;
}

// A walk stored as its start and flip sequence. Positions are rebuilt on
// demand from checkpoints kept every ceil(sqrt(length)) steps.
class Trajectory {
 public:
  Trajectory() = default;
  Trajectory(SpinConfig start, std::vector<std::uint32_t> flips)
      : start_(std::move(start)), flips_(std::move(flips)) {
    for (auto f : flips_)
      if (f >= static_cast<std::uint32_t>(start_.size()))
        throw InvalidParameter("Trajectory: flip index out of range");
    build_checkpoints();
  }

  int dimension() const noexcept { return start_.size(); }
  std::size_t length() const noexcept { return flips_.size(); }
  const SpinConfig& start() const noexcept { return start_; }
  std::span<const std::uint32_t> flips() const noexcept { return flips_; }

  SpinConfig position(std::size_t i) const {
    if (i > flips_.size()) throw std::out_of_range("Trajectory::position past end");
    const std::size_t c = i / stride_;
    SpinConfig s = checkpoints_[c];
    for (std::size_t k = c * stride_; k < i; ++k) s.flip(static_cast<int>(flips_[k]));
    return s;
  }

  std::vector<SpinConfig> positions() const {
    std::vector<SpinConfig> out;
    out.reserve(flips_.size() + 1);
    SpinConfig s = start_;
    out.push_back(s);
    for (auto f : flips_) {
      s.flip(static_cast<int>(f));
      out.push_back(s);
    }
    return out;
  }

  // Binary record: u32 N, u64 length, ceil(N/64) u64 start words, length u32
  // flip indices; all little-endian.
  void write(std::ostream& os) const {
    put_le(os, static_cast<std::uint32_t>(start_.size()));
    put_le(os, static_cast<std::uint64_t>(flips_.size()));
    for (auto w : start_.words()) put_le(os, w);
    for (auto f : flips_) put_le(os, f);
  }

  static Trajectory read(std::istream& is) {
    const auto n = get_le<std::uint32_t>(is);
    const auto len = get_le<std::uint64_t>(is);
    if (n == 0 || n > (1U << 24)) throw InvalidParameter("trajectory record: bad dimension");
    SpinConfig start(static_cast<int>(n));
    for (auto& w : start.words()) w = get_le<std::uint64_t>(is);
    std::vector<std::uint32_t> flips(len);
    for (auto& f : flips) f = get_le<std::uint32_t>(is);
    return Trajectory(std::move(start), std::move(flips));
  }

  friend bool operator==(const Trajectory& a, const Trajectory& b) {
    return a.start_ == b.start_ && a.flips_ == b.flips_;
  }

 private:
  template <class T>
  static void put_le(std::ostream& os, T v) {
    unsigned char buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(buf), sizeof(T));
  }

  template <class T>
  static T get_le(std::istream& is) {
    unsigned char buf[sizeof(T)];
    if (!is.read(reinterpret_cast<char*>(buf), sizeof(T)))
      throw InvalidParameter("trajectory record truncated");
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
    return v;
  }

  void build_checkpoints() {
    stride_ = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(flips_.size())))));
    checkpoints_.clear();
    SpinConfig s = start_;
    for (std::size_t k = 0; k <= flips_.size(); ++k) {
      if (k % stride_ == 0) checkpoints_.push_back(s);
      if (k < flips_.size()) s.flip(static_cast<int>(flips_[k]));
    }
  }

  SpinConfig start_;
  std::vector<std::uint32_t> flips_;
  std::size_t stride_ = 1;
  std::vector<SpinConfig> checkpoints_;
};

inline std::uint32_t draw_flip(int N, Rng& rng) {
  std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(N - 1));
  return pick(rng);
}

// The start is the all-up configuration; the walk law does not depend on it.
inline Trajectory srw_trajectory(int N, std::size_t steps, Rng& rng) {
  std::vector<std::uint32_t> flips(steps);
  for (auto& f : flips) f = draw_flip(N, rng);
  return Trajectory(SpinConfig::all_up(N), std::move(flips));
}

// ---------------------------------------------------------------------------
// Birth-death distance chain Q on {0..N}: down with probability d/N.

inline std::pair<double, double> bd_step_distribution(int N, int d) {
  if (d < 0 || d > N) throw InvalidParameter("bd_step_distribution: d out of range");
  const double down = static_cast<double>(d) / N;
  return {down, 1.0 - down};
}

struct DistanceChainState {
  int N = 0;
  std::vector<double> dist;  // index d = 0..N

  double mass() const {
    double m = 0.0;
    for (double v : dist) m += v;
    return m;
  }
};

inline DistanceChainState bd_advance(const DistanceChainState& s) {
  DistanceChainState out{s.N, std::vector<double>(s.dist.size(), 0.0)};
  const int N = s.N;
  for (int d = 0; d <= N; ++d) {
    const double m = s.dist[d];
    if (m == 0.0) continue;
    const double down = static_cast<double>(d) / N;
    if (d > 0) out.dist[d - 1] += m * down;
    if (d < N) out.dist[d + 1] += m * (1.0 - down);
  }
  return out;
}

inline DistanceChainState bd_distribution(int N, long long k, int d0) {
  if (N < 1) throw InvalidParameter("bd_distribution: N must be >= 1");
  if (d0 < 0 || d0 > N) throw InvalidParameter("bd_distribution: d0 out of range");
  if (k < 0) throw InvalidParameter("bd_distribution: k must be >= 0");
  DistanceChainState s{N, std::vector<double>(static_cast<std::size_t>(N) + 1, 0.0)};
  s.dist[d0] = 1.0;
  for (long long i = 0; i < k; ++i) s = bd_advance(s);
  return s;
}

// log( 2^{-N} C(N, d) )
inline double stationary_log_weight(int N, int d) {
  if (d < 0 || d > N) throw InvalidParameter("stationary_log_weight: d out of range");
  return std::lgamma(N + 1.0) - std::lgamma(d + 1.0) - std::lgamma(N - d + 1.0) -
         N * std::numbers::ln2;
}

// Mixing steps K N^2 log N; K is a knob because only its existence is known.
inline long long mixing_steps(int N, double K = 5.0) {
  return static_cast<long long>(std::ceil(K * N * N * std::log(static_cast<double>(N))));
}

// max_d | (p_k(d) + p_{k+1}(d)) / 2 - 2^{-N} C(N,d) |, chain started at 0.
// Averaging over two consecutive times cancels the parity of the chain.
inline double bd_mixing_deviation(int N, long long k) {
  const auto a = bd_distribution(N, k, 0);
  const auto b = bd_advance(a);
  double worst = 0.0;
  for (int d = 0; d <= N; ++d) {
    const double avg = 0.5 * (a.dist[d] + b.dist[d]);
    worst = std::max(worst, std::abs(avg - std::exp(stationary_log_weight(N, d))));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Pair-distance counting along a trajectory.

enum class BlockMode { same_block, cross_block, all };

// Histogram over d of ordered pairs i < j of positions with Hamming distance
// d, filtered on whether floor(i/nu) == floor(j/nu). O(L^2) with O(1) work per
// pair: the distance from position i is tracked while replaying the flips.
inline std::vector<std::uint64_t> pair_distance_histogram(const Trajectory& traj, int nu,
                                                          BlockMode mode) {
  if (nu < 1) throw InvalidParameter("pair_distance_histogram: nu must be >= 1");
  const int N = traj.dimension();
  std::vector<std::uint64_t> hist(static_cast<std::size_t>(N) + 1, 0);
  const std::size_t L = traj.length() + 1;  // number of positions
  auto flips = traj.flips();
  std::vector<unsigned char> diff(static_cast<std::size_t>(N));
  for (std::size_t i = 0; i + 1 < L; ++i) {
    std::fill(diff.begin(), diff.end(), 0);
    int d = 0;
    const std::size_t bi = i / static_cast<std::size_t>(nu);
    for (std::size_t j = i + 1; j < L; ++j) {
      const auto f = flips[j - 1];
      diff[f] ^= 1;
      d += diff[f] ? 1 : -1;
      const bool same = (j / static_cast<std::size_t>(nu)) == bi;
      if (mode == BlockMode::all || (mode == BlockMode::same_block) == same) ++hist[d];
    }
  }
  return hist;
}

inline std::uint64_t pair_distance_counts(const Trajectory& traj, int d, int nu, BlockMode mode) {
  if (d < 0 || d > traj.dimension()) return 0;
  return pair_distance_histogram(traj, nu, mode)[static_cast<std::size_t>(d)];
}

}  // namespace glassclock
