#pragma once

#include "halbach/common.hpp"

#include <json.hpp>

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace halbach {

/// Cross-section of one permanent-magnet block. Vertices are stored
/// counter-clockwise and the polygon is simple; both are checked on
/// construction.
class BlockPolygon {
 public:
  BlockPolygon(std::vector<Vec2> vertices, int block_index);

  const std::vector<Vec2>& vertices() const { return vertices_; }
  int block_index() const { return block_index_; }
  std::size_t size() const { return vertices_.size(); }

  double signed_area() const;
  double area() const { return signed_area(); }
  Vec2 centroid() const;

  bool contains(const Vec2& p) const;
  double distance_to_boundary(const Vec2& p) const;

  /// Outward unit normal of edge k (from vertex k to vertex k+1).
  Vec2 edge_normal(std::size_t k) const;

 private:
  std::vector<Vec2> vertices_;
  int block_index_;
};

/// Shoelace signed area; positive for counter-clockwise vertex order.
double polygon_signed_area(const std::vector<Vec2>& vertices);
bool polygon_is_simple(const std::vector<Vec2>& vertices);

struct ArrayConfig {
  double inner_radius = 0.1;
  double outer_radius = 0.2;
  double ring_length = 0.1;
  double ring_gap = 0.0;
  int n_rings = 12;
  double nominal_moment = 330.0;  // A·m²
  double mu_r = 1.0;
  std::optional<double> iron_inner;
  std::optional<double> iron_outer;
};

/// One Halbach dipole: 16 wedge blocks per ring, a stack of identical rings
/// centred on z = 0, and an optional annular iron yoke.
class HalbachArray {
 public:
  static HalbachArray build(const ArrayConfig& config);

  const ArrayConfig& config() const { return config_; }
  const std::vector<BlockPolygon>& blocks() const { return blocks_; }
  const BlockPolygon& block(int i) const;  // 1-based

  int n_rings() const { return config_.n_rings; }
  double inner_radius() const { return config_.inner_radius; }
  double outer_radius() const { return config_.outer_radius; }
  bool has_iron() const { return config_.iron_inner.has_value(); }
  double iron_inner() const { return config_.iron_inner.value_or(0.0); }
  double iron_outer() const { return config_.iron_outer.value_or(0.0); }

  double block_volume(int i) const;
  double total_length() const;
  double half_length() const { return 0.5 * total_length(); }
  /// Axial extent [z0, z1] of ring j (1-based).
  std::pair<double, double> ring_extent(int j) const;

  /// True if the 3D point lies inside (or within `tol` of) any block prism.
  bool inside_magnet(const Vec3& p, double tol = 0.0) const;
  /// True if the 2D point lies inside (or within `tol` of) any block cross-section.
  bool inside_magnet_2d(const Vec2& p, double tol = 0.0) const;

 private:
  HalbachArray(ArrayConfig config, std::vector<BlockPolygon> blocks);

  ArrayConfig config_;
  std::vector<BlockPolygon> blocks_;
};

/// Nominal magnetization orientation of block i (1..16) in degrees, [0, 360).
double nominal_angle(int i);

/// Nominal magnetization of block i in A/m: moment / volume along the
/// nominal orientation.
Vec3 nominal_magnetization(const HalbachArray& array, int i);
Vec3 nominal_magnetization(double nominal_moment, double volume, int i);

/// Flat indexing of (block, ring, component). Blocks and rings are 1-based,
/// components 0-based (x, y[, z]); the component index varies fastest.
class ParameterLayout {
 public:
  ParameterLayout(int n_rings, int n_components, int n_blocks = kBlocksPerRing);

  int n_blocks() const { return n_blocks_; }
  int n_rings() const { return n_rings_; }
  int n_components() const { return n_components_; }
  Eigen::Index dimension() const {
    return static_cast<Eigen::Index>(n_blocks_) * n_rings_ * n_components_;
  }

  Eigen::Index index(int block, int ring, int component) const;
  std::array<int, 3> unflatten(Eigen::Index k) const;
  std::string label(Eigen::Index k) const;
  std::vector<std::string> labels() const;

  /// Indices belonging to ring j.
  std::vector<Eigen::Index> ring_indices(int ring) const;

  bool operator==(const ParameterLayout&) const = default;

 private:
  int n_blocks_;
  int n_rings_;
  int n_components_;
};

struct ParameterVector {
  Eigen::VectorXd values;
  ParameterLayout layout;

  ParameterVector(Eigen::VectorXd v, ParameterLayout l);
  explicit ParameterVector(ParameterLayout l);

  double& at(int block, int ring, int component) {
    return values(layout.index(block, ring, component));
  }
  double at(int block, int ring, int component) const {
    return values(layout.index(block, ring, component));
  }
};

ParameterVector nominal_parameter_vector(const HalbachArray& array, const ParameterLayout& layout);

nlohmann::json geometry_to_json(const HalbachArray& array);

}  // namespace halbach
