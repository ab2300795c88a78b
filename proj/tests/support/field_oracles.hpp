#pragma once

// Brute-force surface-charge integrals used as independent references for the
// closed-form field formulas. Everything here is plain adaptive quadrature of
// the Coulomb kernel; no antiderivatives are shared with the library.

#include "halbach/common.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

namespace oracle {

using halbach::Vec2;
using halbach::Vec3;

inline double integrate(const auto& f, double a, double b, double tol = 1e-12) {
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 12, tol);
}

/// H (A/m) of a 2D polygon with uniform magnetization M: edges carry charge
/// M·n and H = (1/2π) ∮ σ (r − r′)/|r − r′|² dl′.
inline Vec2 polygon_h_2d(const std::vector<Vec2>& v, const Vec2& M, const Vec2& r) {
  Vec2 h = Vec2::Zero();
  for (std::size_t k = 0; k < v.size(); ++k) {
    const Vec2 a = v[k];
    const Vec2 b = v[(k + 1) % v.size()];
    const Vec2 d = b - a;
    const double len = d.norm();
    const Vec2 n(d.y() / len, -d.x() / len);
    const double sigma = M.dot(n);
    for (int c = 0; c < 2; ++c) {
      const auto f = [&](double t) {
        const Vec2 w = r - (a + t * d);
        return w(c) / w.squaredNorm();
      };
      h(c) += sigma * len * integrate(f, 0.0, 1.0);
    }
  }
  return h / (2.0 * std::numbers::pi);
}

/// ∫∫ over the triangle (p0, p1, p2) of (r − r′)/|r − r′|³ dA′, by nested
/// adaptive quadrature in the coordinates r′ = p0 + u(p1 − p0) + v(p2 − p0).
inline Vec3 triangle_kernel(const Vec3& p0, const Vec3& p1, const Vec3& p2, const Vec3& r) {
  const Vec3 e1 = p1 - p0;
  const Vec3 e2 = p2 - p0;
  const double jac = e1.cross(e2).norm();
  Vec3 out;
  for (int c = 0; c < 3; ++c) {
    const auto outer = [&](double u) {
      const auto inner = [&](double v) {
        const Vec3 w = r - (p0 + u * e1 + v * e2);
        const double d = w.norm();
        return w(c) / (d * d * d);
      };
      return integrate(inner, 0.0, 1.0 - u, 1e-12);
    };
    out(c) = jac * integrate(outer, 0.0, 1.0, 1e-11);
  }
  return out;
}

/// H (A/m) of a planar convex polygon with unit surface charge, fan-triangulated.
inline Vec3 charged_polygon_h(const std::vector<Vec3>& v, const Vec3& r) {
  Vec3 h = Vec3::Zero();
  for (std::size_t k = 1; k + 1 < v.size(); ++k) h += triangle_kernel(v[0], v[k], v[k + 1], r);
  return h / (4.0 * std::numbers::pi);
}

/// H (A/m) of a uniformly magnetized prism polygon × [z0, z1] with convex
/// cross-section, summing side facets (charge M·n) and end caps (±M_z).
inline Vec3 prism_h(const std::vector<Vec2>& v, double z0, double z1, const Vec3& M, const Vec3& r) {
  Vec3 h = Vec3::Zero();
  const std::size_t n = v.size();
  for (std::size_t k = 0; k < n; ++k) {
    const Vec2 a = v[k];
    const Vec2 b = v[(k + 1) % n];
    const Vec2 d = (b - a).normalized();
    const double sigma = M.x() * d.y() - M.y() * d.x();
    const std::vector<Vec3> facet{{a.x(), a.y(), z0}, {b.x(), b.y(), z0}, {b.x(), b.y(), z1}, {a.x(), a.y(), z1}};
    h += sigma * charged_polygon_h(facet, r);
  }
  std::vector<Vec3> top;
  std::vector<Vec3> bottom;
  for (const auto& p : v) {
    top.emplace_back(p.x(), p.y(), z1);
    bottom.emplace_back(p.x(), p.y(), z0);
  }
  h += M.z() * charged_polygon_h(top, r);
  h -= M.z() * charged_polygon_h(bottom, r);
  return h;
}

}  // namespace oracle
