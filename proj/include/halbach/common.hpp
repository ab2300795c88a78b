#pragma once

#include <Eigen/Dense>

#include <numbers>
#include <stdexcept>
#include <string>

namespace halbach {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

/// Vacuum permeability in T·m/A.
inline constexpr double kMu0 = 4.0e-7 * std::numbers::pi;

inline constexpr int kBlocksPerRing = 16;

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid input data or a numerical failure inside a model (CLI exit code 1).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent configuration (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An observation point lies inside, or too close to, magnet material.
class RegionError : public DomainError {
 public:
  using DomainError::DomainError;
};

inline double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

}  // namespace halbach
