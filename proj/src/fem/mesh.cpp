#include "halbach/fem/mesh.hpp"

#include "halbach/fem/delaunay.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

namespace halbach::fem {

namespace {

double segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 d = b - a;
  const double t = std::clamp((p - a).dot(d) / d.squaredNorm(), 0.0, 1.0);
  return (p - (a + t * d)).norm();
}

double material_radius(const HalbachArray& array) {
  return array.has_iron() ? array.iron_outer() : array.outer_radius();
}

struct ConstraintSet {
  std::vector<Vec2> points;
  std::vector<std::pair<int, int>> segments;
  std::vector<char> on_truncation;
  std::map<std::pair<long long, long long>, int> lookup;

  int add_point(const Vec2& p, bool truncation) {
    const double q = 1e-9;
    const long long kx = std::llround(p.x() / q);
    const long long ky = std::llround(p.y() / q);
    for (long long dx = -1; dx <= 1; ++dx) {
      for (long long dy = -1; dy <= 1; ++dy) {
        const auto it = lookup.find({kx + dx, ky + dy});
        if (it != lookup.end() && (points[it->second] - p).norm() < q) return it->second;
      }
    }
    const int idx = static_cast<int>(points.size());
    points.push_back(p);
    on_truncation.push_back(truncation ? 1 : 0);
    lookup[{kx, ky}] = idx;
    return idx;
  }

  void add_polyline(const Vec2& a, const Vec2& b, int pieces, bool truncation) {
    int prev = add_point(a, truncation);
    for (int k = 1; k <= pieces; ++k) {
      const Vec2 p = k == pieces ? b : Vec2(a + (b - a) * (static_cast<double>(k) / pieces));
      const int cur = add_point(p, truncation);
      if (cur != prev) segments.emplace_back(prev, cur);
      prev = cur;
    }
  }

  void add_circle(double r, int pieces, bool truncation) {
    std::vector<int> idx;
    for (int k = 0; k < pieces; ++k) {
      const double t = 2 * std::numbers::pi * k / pieces;
      idx.push_back(add_point(Vec2(r * std::cos(t), r * std::sin(t)), truncation));
    }
    for (int k = 0; k < pieces; ++k) segments.emplace_back(idx[k], idx[(k + 1) % pieces]);
  }
};

}  // namespace

Region region_of_tag(int tag) {
  if (tag == kAirTag) return Region::air;
  if (tag == kIronTag) return Region::iron;
  if (tag >= 1 && tag <= kBlocksPerRing) return Region::magnet;
  throw DomainError(fmt::format("unknown region tag {}", tag));
}

double Mesh2D::area(std::size_t t) const {
  const auto& tri = triangles[t];
  const Vec2 a = nodes[tri[1]] - nodes[tri[0]];
  const Vec2 b = nodes[tri[2]] - nodes[tri[0]];
  return 0.5 * (a.x() * b.y() - a.y() * b.x());
}

Vec2 Mesh2D::centroid(std::size_t t) const {
  const auto& tri = triangles[t];
  return (nodes[tri[0]] + nodes[tri[1]] + nodes[tri[2]]) / 3.0;
}

double Mesh2D::region_area(int tag) const {
  double total = 0.0;
  for (std::size_t t = 0; t < triangles.size(); ++t) {
    if (tags[t] == tag) total += area(t);
  }
  return total;
}

long Mesh2D::locate(const Vec2& p) const {
  const double tol = 1e-12;
  for (std::size_t t = 0; t < triangles.size(); ++t) {
    const auto& tri = triangles[t];
    const double a2 = 2.0 * area(t);
    bool inside = true;
    for (int k = 0; k < 3 && inside; ++k) {
      const Vec2& a = nodes[tri[(k + 1) % 3]];
      const Vec2& b = nodes[tri[(k + 2) % 3]];
      const double o = (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
      inside = o >= -tol * a2;
    }
    if (inside) return static_cast<long>(t);
  }
  return -1;
}

void Mesh2D::validate(const HalbachArray& array) const {
  if (tags.size() != triangles.size()) throw DomainError("mesh tag count does not match triangles");
  if (boundary.size() != nodes.size()) throw DomainError("mesh boundary flags do not match nodes");
  const double tol = 1e-9;
  for (std::size_t t = 0; t < triangles.size(); ++t) {
    for (int v : triangles[t]) {
      if (v < 0 || static_cast<std::size_t>(v) >= nodes.size()) throw DomainError("triangle references a missing node");
    }
    if (!(area(t) > 0.0)) throw DomainError(fmt::format("triangle {} has non-positive area", t));
    const int tag = tags[t];
    const Region region = region_of_tag(tag);
    for (int v : triangles[t]) {
      const Vec2& p = nodes[v];
      if (region == Region::magnet) {
        const auto& poly = array.block(tag);
        if (!poly.contains(p) && poly.distance_to_boundary(p) > tol) {
          throw DomainError(fmt::format("triangle {} leaves block {}", t, tag));
        }
      } else if (region == Region::iron) {
        if (!array.has_iron()) throw DomainError("iron triangle in a geometry without iron");
        const double r = p.norm();
        if (r < array.iron_inner() - tol || r > array.iron_outer() + tol) {
          throw DomainError(fmt::format("triangle {} leaves the iron ring", t));
        }
      }
    }
  }
  // Hull edges appear in exactly one triangle; they must join boundary nodes.
  std::map<std::pair<int, int>, int> edge_count;
  for (const auto& tri : triangles) {
    for (int k = 0; k < 3; ++k) {
      const int a = tri[k];
      const int b = tri[(k + 1) % 3];
      ++edge_count[{std::min(a, b), std::max(a, b)}];
    }
  }
  std::vector<char> on_hull(nodes.size(), 0);
  for (const auto& [e, n] : edge_count) {
    if (n > 2) throw DomainError("non-manifold mesh edge");
    if (n == 1) {
      on_hull[e.first] = 1;
      on_hull[e.second] = 1;
    }
  }
  for (std::size_t v = 0; v < nodes.size(); ++v) {
    if (on_hull[v] != boundary[v]) {
      throw DomainError(fmt::format("node {} boundary flag disagrees with the mesh hull", v));
    }
  }
}

double default_truncation_radius(const HalbachArray& array) { return 3.0 * material_radius(array); }

Mesh2D generate_mesh(const HalbachArray& array, double h, double truncation_radius) {
  if (!(h > 0.0)) throw DomainError("mesh size h must be positive");
  const double r_core = material_radius(array);
  if (!(truncation_radius > r_core)) {
    throw DomainError(fmt::format("truncation radius {} must exceed the material radius {}", truncation_radius, r_core));
  }
  const auto h_at = [&](double r) { return r <= r_core ? h : h * (1.0 + 3.0 * (r - r_core) / r_core); };

  ConstraintSet cs;
  for (const auto& block : array.blocks()) {
    const auto& v = block.vertices();
    for (std::size_t k = 0; k < v.size(); ++k) {
      const Vec2& a = v[k];
      const Vec2& b = v[(k + 1) % v.size()];
      cs.add_polyline(a, b, std::max(1, static_cast<int>(std::ceil((b - a).norm() / h - 1e-9))), false);
    }
  }
  std::vector<double> circles;
  if (array.has_iron()) {
    circles = {array.iron_inner(), array.iron_outer()};
    for (double r : circles) cs.add_circle(r, static_cast<int>(std::ceil(2 * std::numbers::pi * r / h)), false);
  }
  const double h_trunc = h_at(truncation_radius);
  cs.add_circle(truncation_radius, std::max(16, static_cast<int>(std::ceil(2 * std::numbers::pi * truncation_radius / h_trunc))),
                true);

  std::vector<std::pair<Vec2, Vec2>> edges;
  for (const auto& block : array.blocks()) {
    const auto& v = block.vertices();
    for (std::size_t k = 0; k < v.size(); ++k) edges.emplace_back(v[k], v[(k + 1) % v.size()]);
  }
  const auto clearance = [&](const Vec2& p) {
    double d = truncation_radius - p.norm();
    const double r = p.norm();
    for (double rc : circles) d = std::min(d, std::abs(r - rc));
    if (r > array.inner_radius() * 0.9 && r < array.outer_radius() * 1.1) {
      for (const auto& [a, b] : edges) d = std::min(d, segment_distance(p, a, b));
    }
    return d;
  };

  DelaunayTriangulator dt(Vec2::Zero(), truncation_radius);
  std::vector<char> boundary;
  const auto flag = [&](int idx, char value) {
    if (static_cast<std::size_t>(idx) >= boundary.size()) boundary.resize(idx + 1, 0);
    boundary[idx] = static_cast<char>(boundary[idx] | value);
  };
  std::vector<int> map(cs.points.size());
  for (std::size_t k = 0; k < cs.points.size(); ++k) {
    map[k] = dt.insert(cs.points[k]);
    flag(map[k], cs.on_truncation[k]);
  }

  // Concentric rows of seeds, staggered between rows.
  flag(dt.insert(Vec2::Zero()), 0);
  int row = 0;
  for (double r = h_at(0.0) * 0.866; r < truncation_radius; r += 0.866 * h_at(r), ++row) {
    const double hl = h_at(r);
    const int n = std::max(6, static_cast<int>(std::lround(2 * std::numbers::pi * r / hl)));
    const double offset = (row % 2 == 0 ? 0.0 : 0.5) + 0.137 * row;
    for (int k = 0; k < n; ++k) {
      const double t = 2 * std::numbers::pi * (k + offset) / n;
      const Vec2 p(r * std::cos(t), r * std::sin(t));
      if (clearance(p) < 0.6 * hl) continue;
      flag(dt.insert(p), 0);
    }
  }

  std::vector<std::pair<int, int>> segments;
  for (const auto& [a, b] : cs.segments) segments.emplace_back(map[a], map[b]);
  dt.recover_segments(segments, [&](int m, std::size_t s) {
    const auto [a, b] = segments[s];
    flag(m, static_cast<char>(boundary[a] && boundary[b]));
  });

  Mesh2D mesh;
  mesh.nodes = dt.points();
  mesh.triangles = dt.triangles();
  mesh.truncation_radius = truncation_radius;
  boundary.resize(mesh.nodes.size(), 0);
  mesh.boundary = boundary;
  mesh.tags.resize(mesh.triangles.size(), kAirTag);
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const Vec2 c = mesh.centroid(t);
    const double r = c.norm();
    if (array.has_iron() && r > array.iron_inner() && r < array.iron_outer()) {
      mesh.tags[t] = kIronTag;
      continue;
    }
    if (r < array.inner_radius() || r > array.outer_radius()) continue;
    for (const auto& block : array.blocks()) {
      if (block.contains(c)) {
        mesh.tags[t] = block.block_index();
        break;
      }
    }
  }
  mesh.validate(array);
  return mesh;
}

nlohmann::json mesh_to_json(const Mesh2D& mesh) {
  nlohmann::json j;
  j["truncation_radius_m"] = mesh.truncation_radius;
  auto& nodes = j["nodes_m"] = nlohmann::json::array();
  for (const auto& p : mesh.nodes) nodes.push_back({p.x(), p.y()});
  auto& tris = j["triangles"] = nlohmann::json::array();
  for (const auto& t : mesh.triangles) tris.push_back({t[0], t[1], t[2]});
  j["tags"] = mesh.tags;
  auto& bnd = j["boundary_nodes"] = nlohmann::json::array();
  for (std::size_t v = 0; v < mesh.boundary.size(); ++v) {
    if (mesh.boundary[v]) bnd.push_back(v);
  }
  return j;
}

Mesh2D mesh_from_json(const nlohmann::json& j) {
  try {
    Mesh2D mesh;
    mesh.truncation_radius = j.at("truncation_radius_m").get<double>();
    for (const auto& p : j.at("nodes_m")) mesh.nodes.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
    for (const auto& t : j.at("triangles")) mesh.triangles.push_back({t.at(0).get<int>(), t.at(1).get<int>(), t.at(2).get<int>()});
    mesh.tags = j.at("tags").get<std::vector<int>>();
    mesh.boundary.assign(mesh.nodes.size(), 0);
    for (const auto& v : j.at("boundary_nodes")) {
      const auto idx = v.get<std::size_t>();
      if (idx >= mesh.nodes.size()) throw DomainError("boundary node index out of range");
      mesh.boundary[idx] = 1;
    }
    if (mesh.tags.size() != mesh.triangles.size()) throw DomainError("mesh tag count does not match triangles");
    return mesh;
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(fmt::format("malformed mesh JSON: {}", e.what()));
  }
}

}  // namespace halbach::fem
