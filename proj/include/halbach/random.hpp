#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>

namespace halbach {

using Rng = std::mt19937_64;

/// Vector of independent standard normal draws.
inline Eigen::VectorXd standard_normal(Rng& rng, Eigen::Index n) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Eigen::VectorXd xi(n);
  for (Eigen::Index k = 0; k < n; ++k) xi(k) = dist(rng);
  return xi;
}

/// Independent stream for a (seed, purpose) pair so that components seeded
/// from the same run seed do not share draws.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

}  // namespace halbach
