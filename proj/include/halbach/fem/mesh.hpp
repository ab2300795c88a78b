#pragma once

#include "halbach/common.hpp"
#include "halbach/geometry.hpp"
#include "halbach/observables.hpp"

#include <json.hpp>

#include <array>
#include <string>
#include <vector>

namespace halbach::fem {

/// Triangle region tags: 0 is air, 1..16 the magnet block with that index.
inline constexpr int kAirTag = 0;
inline constexpr int kIronTag = 17;

Region region_of_tag(int tag);

/// Region-conforming P1 triangulation of the truncated cross-section.
struct Mesh2D {
  std::vector<Vec2> nodes;                     // m
  std::vector<std::array<int, 3>> triangles;   // counter-clockwise
  std::vector<int> tags;                       // per triangle
  std::vector<char> boundary;                  // per node, 1 on the truncation circle
  double truncation_radius = 0.0;

  std::size_t n_nodes() const { return nodes.size(); }
  std::size_t n_triangles() const { return triangles.size(); }
  double area(std::size_t t) const;
  Vec2 centroid(std::size_t t) const;

  /// Total area of triangles carrying `tag`.
  double region_area(int tag) const;

  /// Index of a triangle containing p (closed), or -1.
  long locate(const Vec2& p) const;

  /// Checks positivity, tag consistency with `array` and boundary placement.
  void validate(const HalbachArray& array) const;
};

/// Mesh with target edge length `h` inside the magnet/iron annulus and the
/// bore, growing linearly to 7h at the truncation radius.
Mesh2D generate_mesh(const HalbachArray& array, double h, double truncation_radius);

/// Default truncation radius: three times the outermost material radius.
double default_truncation_radius(const HalbachArray& array);

nlohmann::json mesh_to_json(const Mesh2D& mesh);
Mesh2D mesh_from_json(const nlohmann::json& j);

}  // namespace halbach::fem
