#pragma once

// Seeding and trial parallelism.
//
// Seed rule: the k-th derived seed of a master seed m is the k-th output
// (k = 0, 1, ...) of a SplitMix64 stream started at m, i.e.
//     z = m + (k + 1) * 0x9E3779B97F4A7C15, then the SplitMix64 finaliser.
// Every trial draws from its own generator seeded this way, so results do
// not depend on how trials are spread over threads.

#include "dac/core.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cstdint>
#include <exception>
#include <mutex>
#include <random>
#include <thread>
#include <vector>

namespace dac::synth {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t k) {
  return splitmix64_mix(master + (k + 1) * 0x9E3779B97F4A7C15ULL);
}

inline Rng make_rng(std::uint64_t master, std::uint64_t k) { return Rng(derive_seed(master, k)); }

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
inline double normal(Rng& rng, double sigma = 1.0) { return std::normal_distribution<double>(0.0, sigma)(rng); }

/// Uniformly distributed rotation (normalised Gaussian quaternion).
inline Mat3 random_rotation(Rng& rng) {
  Eigen::Quaterniond q(normal(rng), normal(rng), normal(rng), normal(rng));
  q.normalize();
  return q.toRotationMatrix();
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers. The first
/// exception thrown by any worker is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(threads, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace dac::synth
