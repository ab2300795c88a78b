#include "halbach/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

namespace halbach {

namespace {

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

double segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  double t = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

int orientation(const Vec2& a, const Vec2& b, const Vec2& c) {
  const double v = cross(b - a, c - a);
  if (v > 0.0) return 1;
  if (v < 0.0) return -1;
  return 0;
}

bool on_segment(const Vec2& a, const Vec2& b, const Vec2& p) {
  return std::min(a.x(), b.x()) <= p.x() && p.x() <= std::max(a.x(), b.x()) &&
         std::min(a.y(), b.y()) <= p.y() && p.y() <= std::max(a.y(), b.y());
}

bool segments_intersect(const Vec2& p1, const Vec2& p2, const Vec2& q1, const Vec2& q2) {
  const int o1 = orientation(p1, p2, q1);
  const int o2 = orientation(p1, p2, q2);
  const int o3 = orientation(q1, q2, p1);
  const int o4 = orientation(q1, q2, p2);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(p1, p2, q1)) return true;
  if (o2 == 0 && on_segment(p1, p2, q2)) return true;
  if (o3 == 0 && on_segment(q1, q2, p1)) return true;
  if (o4 == 0 && on_segment(q1, q2, p2)) return true;
  return false;
}

}  // namespace

double polygon_signed_area(const std::vector<Vec2>& v) {
  double a = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) {
    a += cross(v[k], v[(k + 1) % v.size()]);
  }
  return 0.5 * a;
}

bool polygon_is_simple(const std::vector<Vec2>& v) {
  const std::size_t n = v.size();
  if (n < 3) return false;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      const bool adjacent = (b == a + 1) || (a == 0 && b == n - 1);
      if (adjacent) continue;
      if (segments_intersect(v[a], v[(a + 1) % n], v[b], v[(b + 1) % n])) return false;
    }
  }
  return true;
}

BlockPolygon::BlockPolygon(std::vector<Vec2> vertices, int block_index)
    : vertices_(std::move(vertices)), block_index_(block_index) {
  if (vertices_.size() < 3) {
    throw DomainError(fmt::format("block {}: polygon needs at least 3 vertices", block_index));
  }
  for (const auto& p : vertices_) {
    if (!p.allFinite()) throw DomainError(fmt::format("block {}: non-finite vertex", block_index));
  }
  if (!polygon_is_simple(vertices_)) {
    throw DomainError(fmt::format("block {}: polygon is self-intersecting", block_index));
  }
  if (polygon_signed_area(vertices_) <= 0.0) {
    throw DomainError(
        fmt::format("block {}: polygon must be counter-clockwise with positive area", block_index));
  }
}

double BlockPolygon::signed_area() const { return polygon_signed_area(vertices_); }

Vec2 BlockPolygon::centroid() const {
  Vec2 c = Vec2::Zero();
  double a = 0.0;
  for (std::size_t k = 0; k < vertices_.size(); ++k) {
    const Vec2& p = vertices_[k];
    const Vec2& q = vertices_[(k + 1) % vertices_.size()];
    const double w = cross(p, q);
    a += w;
    c += w * (p + q);
  }
  return c / (3.0 * a);
}

bool BlockPolygon::contains(const Vec2& p) const {
  bool inside = false;
  const std::size_t n = vertices_.size();
  for (std::size_t k = 0, l = n - 1; k < n; l = k++) {
    const Vec2& a = vertices_[k];
    const Vec2& b = vertices_[l];
    if ((a.y() > p.y()) != (b.y() > p.y())) {
      const double x = (b.x() - a.x()) * (p.y() - a.y()) / (b.y() - a.y()) + a.x();
      if (p.x() < x) inside = !inside;
    }
  }
  return inside;
}

double BlockPolygon::distance_to_boundary(const Vec2& p) const {
  double d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < vertices_.size(); ++k) {
    d = std::min(d, segment_distance(p, vertices_[k], vertices_[(k + 1) % vertices_.size()]));
  }
  return d;
}

Vec2 BlockPolygon::edge_normal(std::size_t k) const {
  const Vec2 t = (vertices_[(k + 1) % vertices_.size()] - vertices_[k]).normalized();
  return {t.y(), -t.x()};
}

HalbachArray::HalbachArray(ArrayConfig config, std::vector<BlockPolygon> blocks)
    : config_(std::move(config)), blocks_(std::move(blocks)) {}

HalbachArray HalbachArray::build(const ArrayConfig& c) {
  if (!(c.inner_radius > 0.0) || !(c.outer_radius > c.inner_radius)) {
    throw ConfigError(fmt::format("inconsistent radii: need 0 < inner ({}) < outer ({})",
                                  c.inner_radius, c.outer_radius));
  }
  if (c.n_rings < 12 || c.n_rings > 18) {
    throw ConfigError(fmt::format("n_rings = {} outside the supported range 12..18", c.n_rings));
  }
  if (!(c.ring_length > 0.0) || c.ring_gap < 0.0) {
    throw ConfigError("ring_length must be positive and ring_gap non-negative");
  }
  if (!(c.mu_r > 0.0) || !std::isfinite(c.nominal_moment)) {
    throw ConfigError("mu_r must be positive and nominal_moment finite");
  }
  if (c.iron_inner.has_value() != c.iron_outer.has_value()) {
    throw ConfigError("iron_inner and iron_outer must be given together");
  }
  if (c.iron_inner && !(c.outer_radius <= *c.iron_inner && *c.iron_inner < *c.iron_outer)) {
    throw ConfigError(fmt::format("inconsistent iron radii: need outer ({}) <= iron_inner ({}) < iron_outer ({})",
                                  c.outer_radius, *c.iron_inner, *c.iron_outer));
  }

  // Trapezoids whose inner chord touches the inner radius at its midpoint and
  // whose outer corners sit on the outer radius, so every block lies in the annulus.
  const double half = deg2rad(360.0 / kBlocksPerRing / 2.0);
  const double r_in = c.inner_radius / std::cos(half);
  if (!(r_in < c.outer_radius)) {
    throw ConfigError("annulus too thin for 16 trapezoidal blocks");
  }
  std::vector<BlockPolygon> blocks;
  blocks.reserve(kBlocksPerRing);
  for (int i = 1; i <= kBlocksPerRing; ++i) {
    const double centre = deg2rad((i - 1) * 360.0 / kBlocksPerRing);
    const double a0 = centre - half;
    const double a1 = centre + half;
    blocks.emplace_back(std::vector<Vec2>{{r_in * std::cos(a0), r_in * std::sin(a0)},
                                          {c.outer_radius * std::cos(a0), c.outer_radius * std::sin(a0)},
                                          {c.outer_radius * std::cos(a1), c.outer_radius * std::sin(a1)},
                                          {r_in * std::cos(a1), r_in * std::sin(a1)}},
                        i);
  }
  return HalbachArray(c, std::move(blocks));
}

const BlockPolygon& HalbachArray::block(int i) const {
  if (i < 1 || i > static_cast<int>(blocks_.size())) {
    throw DomainError(fmt::format("block index {} out of range 1..{}", i, blocks_.size()));
  }
  return blocks_[static_cast<std::size_t>(i - 1)];
}

double HalbachArray::block_volume(int i) const { return block(i).area() * config_.ring_length; }

double HalbachArray::total_length() const {
  return config_.n_rings * config_.ring_length + (config_.n_rings - 1) * config_.ring_gap;
}

std::pair<double, double> HalbachArray::ring_extent(int j) const {
  if (j < 1 || j > config_.n_rings) {
    throw DomainError(fmt::format("ring index {} out of range 1..{}", j, config_.n_rings));
  }
  const double z0 = -half_length() + (j - 1) * (config_.ring_length + config_.ring_gap);
  return {z0, z0 + config_.ring_length};
}

bool HalbachArray::inside_magnet_2d(const Vec2& p, double tol) const {
  const double r = p.norm();
  if (r + tol < config_.inner_radius || r - tol > config_.outer_radius) return false;
  for (const auto& b : blocks_) {
    if (b.contains(p) || b.distance_to_boundary(p) <= tol) return true;
  }
  return false;
}

bool HalbachArray::inside_magnet(const Vec3& p, double tol) const {
  bool in_ring = false;
  for (int j = 1; j <= config_.n_rings && !in_ring; ++j) {
    const auto [z0, z1] = ring_extent(j);
    in_ring = p.z() >= z0 - tol && p.z() <= z1 + tol;
  }
  return in_ring && inside_magnet_2d(p.head<2>(), tol);
}

double nominal_angle(int i) {
  if (i < 1 || i > kBlocksPerRing) {
    throw DomainError(fmt::format("block index {} out of range 1..16", i));
  }
  const double a = std::fmod(180.0 + 2.0 * (i - 1) * 22.5, 360.0);
  return a < 0.0 ? a + 360.0 : a;
}

Vec3 nominal_magnetization(double nominal_moment, double volume, int i) {
  if (!(volume > 0.0)) throw DomainError(fmt::format("block {} has non-positive volume", i));
  const double a = deg2rad(nominal_angle(i));
  const double m = nominal_moment / volume;
  return {m * std::cos(a), m * std::sin(a), 0.0};
}

Vec3 nominal_magnetization(const HalbachArray& array, int i) {
  return nominal_magnetization(array.config().nominal_moment, array.block_volume(i), i);
}

ParameterLayout::ParameterLayout(int n_rings, int n_components, int n_blocks)
    : n_blocks_(n_blocks), n_rings_(n_rings), n_components_(n_components) {
  if (n_blocks < 1 || n_rings < 1 || (n_components != 2 && n_components != 3)) {
    throw DomainError(fmt::format("invalid parameter layout {}x{}x{}", n_blocks, n_rings, n_components));
  }
}

Eigen::Index ParameterLayout::index(int block, int ring, int component) const {
  if (block < 1 || block > n_blocks_ || ring < 1 || ring > n_rings_ || component < 0 ||
      component >= n_components_) {
    throw DomainError(fmt::format("parameter index ({},{},{}) out of range", block, ring, component));
  }
  return (static_cast<Eigen::Index>(block - 1) * n_rings_ + (ring - 1)) * n_components_ + component;
}

std::array<int, 3> ParameterLayout::unflatten(Eigen::Index k) const {
  if (k < 0 || k >= dimension()) throw DomainError(fmt::format("flat index {} out of range", k));
  const int c = static_cast<int>(k % n_components_);
  const Eigen::Index rest = k / n_components_;
  const int j = static_cast<int>(rest % n_rings_) + 1;
  const int i = static_cast<int>(rest / n_rings_) + 1;
  return {i, j, c};
}

std::string ParameterLayout::label(Eigen::Index k) const {
  static constexpr const char* kComp[] = {"x", "y", "z"};
  const auto [i, j, c] = unflatten(k);
  return fmt::format("M{}_{}_{}", kComp[c], i, j);
}

std::vector<std::string> ParameterLayout::labels() const {
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(dimension()));
  for (Eigen::Index k = 0; k < dimension(); ++k) out.push_back(label(k));
  return out;
}

std::vector<Eigen::Index> ParameterLayout::ring_indices(int ring) const {
  std::vector<Eigen::Index> out;
  for (int i = 1; i <= n_blocks_; ++i) {
    for (int c = 0; c < n_components_; ++c) out.push_back(index(i, ring, c));
  }
  return out;
}

ParameterVector::ParameterVector(Eigen::VectorXd v, ParameterLayout l)
    : values(std::move(v)), layout(l) {
  if (values.size() != layout.dimension()) {
    throw DomainError(fmt::format("parameter vector length {} does not match layout dimension {}",
                                  values.size(), layout.dimension()));
  }
  if (!values.allFinite()) throw DomainError("parameter vector has non-finite entries");
}

ParameterVector::ParameterVector(ParameterLayout l)
    : values(Eigen::VectorXd::Zero(l.dimension())), layout(l) {}

ParameterVector nominal_parameter_vector(const HalbachArray& array, const ParameterLayout& layout) {
  if (layout.n_blocks() != static_cast<int>(array.blocks().size())) {
    throw DomainError("layout block count does not match the array");
  }
  if (layout.n_components() == 3 && layout.n_rings() != array.n_rings()) {
    throw DomainError(fmt::format("3D layout has {} rings but the array has {}", layout.n_rings(),
                                  array.n_rings()));
  }
  ParameterVector p(layout);
  for (int i = 1; i <= layout.n_blocks(); ++i) {
    const Vec3 m = nominal_magnetization(array, i);
    for (int j = 1; j <= layout.n_rings(); ++j) {
      for (int c = 0; c < layout.n_components(); ++c) p.at(i, j, c) = m(c);
    }
  }
  return p;
}

nlohmann::json geometry_to_json(const HalbachArray& array) {
  const auto& c = array.config();
  nlohmann::json j;
  j["inner_radius_m"] = c.inner_radius;
  j["outer_radius_m"] = c.outer_radius;
  j["ring_length_m"] = c.ring_length;
  j["ring_gap_m"] = c.ring_gap;
  j["n_rings"] = c.n_rings;
  j["nominal_moment_Am2"] = c.nominal_moment;
  j["mu_r"] = c.mu_r;
  if (c.iron_inner) {
    j["iron_inner_m"] = *c.iron_inner;
    j["iron_outer_m"] = *c.iron_outer;
  }
  auto& blocks = j["blocks"] = nlohmann::json::array();
  for (const auto& b : array.blocks()) {
    nlohmann::json bj;
    bj["block_index"] = b.block_index();
    bj["nominal_angle_deg"] = nominal_angle(b.block_index());
    bj["area_m2"] = b.area();
    auto& verts = bj["vertices_m"] = nlohmann::json::array();
    for (const auto& v : b.vertices()) verts.push_back({v.x(), v.y()});
    blocks.push_back(std::move(bj));
  }
  auto& rings = j["rings"] = nlohmann::json::array();
  for (int r = 1; r <= array.n_rings(); ++r) {
    const auto [z0, z1] = array.ring_extent(r);
    rings.push_back({{"ring_index", r}, {"z0_m", z0}, {"z1_m", z1}});
  }
  return j;
}

}  // namespace halbach
