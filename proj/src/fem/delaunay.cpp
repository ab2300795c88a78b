#include "halbach/fem/delaunay.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <unordered_map>

namespace halbach::fem {

namespace {

double orient(const Vec2& a, const Vec2& b, const Vec2& c) {
  return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

// Orientation of p against the directed edge (ia, ib), evaluated in a fixed
// vertex order so both triangles sharing the edge see the same sign.
double orient_edge(const std::vector<Vec2>& pts, int ia, int ib, const Vec2& p) {
  return ia < ib ? orient(pts[ia], pts[ib], p) : -orient(pts[ib], pts[ia], p);
}

}  // namespace

DelaunayTriangulator::DelaunayTriangulator(const Vec2& center, double radius) : scale_(radius) {
  if (!(radius > 0.0)) throw DomainError("triangulation radius must be positive");
  for (int k = 0; k < 3; ++k) {
    const double a = std::numbers::pi / 2 + 2 * std::numbers::pi * k / 3;
    pts_.push_back(center + 20.0 * radius * Vec2(std::cos(a), std::sin(a)));
  }
  tris_.push_back({{0, 1, 2}, {-1, -1, -1}, true});
}

double DelaunayTriangulator::incircle(const Tri& t, const Vec2& p) const {
  using ld = long double;
  const ld ax = static_cast<ld>(pts_[t.v[0]].x()) - p.x();
  const ld ay = static_cast<ld>(pts_[t.v[0]].y()) - p.y();
  const ld bx = static_cast<ld>(pts_[t.v[1]].x()) - p.x();
  const ld by = static_cast<ld>(pts_[t.v[1]].y()) - p.y();
  const ld cx = static_cast<ld>(pts_[t.v[2]].x()) - p.x();
  const ld cy = static_cast<ld>(pts_[t.v[2]].y()) - p.y();
  const ld a2 = ax * ax + ay * ay;
  const ld b2 = bx * bx + by * by;
  const ld c2 = cx * cx + cy * cy;
  return static_cast<double>(ax * (by * c2 - b2 * cy) - ay * (bx * c2 - b2 * cx) + a2 * (bx * cy - by * cx));
}

int DelaunayTriangulator::locate(const Vec2& p) const {
  int t = last_;
  if (!tris_[t].alive) {
    t = 0;
    while (!tris_[t].alive) ++t;
  }
  const std::size_t limit = 4 * tris_.size() + 16;
  std::uint32_t state = 0x9e3779b9u;
  for (std::size_t step = 0; step < limit; ++step) {
    const Tri& tri = tris_[t];
    bool moved = false;
    state ^= state << 13;
    state ^= state >> 17;
    state ^= state << 5;
    const int rot = static_cast<int>(state % 3);
    for (int kk = 0; kk < 3; ++kk) {
      const int k = (kk + rot) % 3;
      if (orient_edge(pts_, tri.v[(k + 1) % 3], tri.v[(k + 2) % 3], p) < 0.0) {
        if (tri.nb[k] < 0) throw DomainError("point lies outside the triangulation bounds");
        t = tri.nb[k];
        moved = true;
        break;
      }
    }
    if (!moved) {
      last_ = t;
      return t;
    }
  }
  throw DomainError("point location did not terminate");
}

int DelaunayTriangulator::insert(const Vec2& p) {
  if (!p.allFinite()) throw DomainError("non-finite point");
  const int root = locate(p);
  const double dup_tol = 1e-12 * scale_;
  for (int k = 0; k < 3; ++k) {
    const int v = tris_[root].v[k];
    if ((pts_[v] - p).norm() <= dup_tol) return v - 3;
  }

  const int idx = static_cast<int>(pts_.size());
  pts_.push_back(p);
  if (mark_.size() < tris_.size()) mark_.resize(tris_.size() * 2, 0);
  ++stamp_;

  // Gather the cavity of triangles whose circumcircle contains p.
  std::vector<int> cavity{root};
  std::vector<char> forced;
  mark_[root] = stamp_;
  const double edge_tol = 1e-13 * scale_ * scale_;
  for (int k = 0; k < 3; ++k) {
    const Tri& t = tris_[root];
    const int n = t.nb[k];
    if (n >= 0 && std::abs(orient_edge(pts_, t.v[(k + 1) % 3], t.v[(k + 2) % 3], p)) <= edge_tol) {
      mark_[n] = stamp_;
      cavity.push_back(n);
    }
  }
  const std::size_t n_roots = cavity.size();
  for (std::size_t c = 0; c < cavity.size(); ++c) {
    const Tri& t = tris_[cavity[c]];
    for (int k = 0; k < 3; ++k) {
      const int n = t.nb[k];
      if (n < 0 || mark_[n] == stamp_) continue;
      if (incircle(tris_[n], p) > 0.0) {
        mark_[n] = stamp_;
        cavity.push_back(n);
      }
    }
  }

  // Keep the cavity star-shaped with respect to p.
  for (bool repaired = true; repaired;) {
    repaired = false;
    for (std::size_t c = n_roots; c < cavity.size(); ++c) {
      const Tri& t = tris_[cavity[c]];
      for (int k = 0; k < 3; ++k) {
        const int n = t.nb[k];
        if (n >= 0 && mark_[n] == stamp_) continue;
        if (orient_edge(pts_, t.v[(k + 1) % 3], t.v[(k + 2) % 3], p) <= 0.0) {
          mark_[cavity[c]] = 0;
          cavity.erase(cavity.begin() + static_cast<std::ptrdiff_t>(c));
          repaired = true;
          break;
        }
      }
      if (repaired) break;
    }
  }

  struct Edge {
    int a, b, outside;
  };
  std::vector<Edge> boundary;
  for (int c : cavity) {
    const Tri& t = tris_[c];
    for (int k = 0; k < 3; ++k) {
      const int n = t.nb[k];
      if (n >= 0 && mark_[n] == stamp_) continue;
      boundary.push_back({t.v[(k + 1) % 3], t.v[(k + 2) % 3], n});
    }
  }
  for (int c : cavity) {
    tris_[c].alive = false;
    free_.push_back(c);
  }

  std::unordered_map<int, int> by_first;
  std::unordered_map<int, int> by_second;
  std::vector<int> created;
  created.reserve(boundary.size());
  for (const Edge& e : boundary) {
    int slot;
    if (!free_.empty()) {
      slot = free_.back();
      free_.pop_back();
    } else {
      slot = static_cast<int>(tris_.size());
      tris_.emplace_back();
    }
    tris_[slot] = {{e.a, e.b, idx}, {-1, -1, e.outside}, true};
    if (e.outside >= 0) {
      Tri& o = tris_[e.outside];
      for (int k = 0; k < 3; ++k) {
        const int oa = o.v[(k + 1) % 3];
        const int ob = o.v[(k + 2) % 3];
        if (oa == e.b && ob == e.a) o.nb[k] = slot;
      }
    }
    by_first[e.a] = slot;
    by_second[e.b] = slot;
    created.push_back(slot);
  }
  for (int slot : created) {
    Tri& t = tris_[slot];
    const auto f = by_first.find(t.v[1]);
    const auto s = by_second.find(t.v[0]);
    if (f == by_first.end() || s == by_second.end()) throw DomainError("inconsistent Delaunay cavity");
    t.nb[0] = f->second;
    t.nb[1] = s->second;
  }
  if (mark_.size() < tris_.size()) mark_.resize(tris_.size() * 2, 0);
  last_ = created.front();
  return idx - 3;
}

bool DelaunayTriangulator::has_edge(int a, int b) const {
  const int ga = a + 3;
  const int gb = b + 3;
  // Walk the fan around a starting from any triangle that contains it.
  int start = locate(pts_[ga]);
  const Tri* t = &tris_[start];
  int k0 = -1;
  for (int k = 0; k < 3; ++k) {
    if (t->v[k] == ga) k0 = k;
  }
  if (k0 < 0) {
    for (std::size_t i = 0; i < tris_.size(); ++i) {
      if (!tris_[i].alive) continue;
      for (int k = 0; k < 3; ++k) {
        if (tris_[i].v[k] == ga) {
          start = static_cast<int>(i);
          k0 = k;
        }
      }
      if (k0 >= 0) break;
    }
    if (k0 < 0) return false;
  }
  // Rotate counter-clockwise, then clockwise if the fan hits the hull.
  for (int dir = 0; dir < 2; ++dir) {
    int cur = start;
    for (std::size_t guard = 0; guard < 256; ++guard) {
      const Tri& tri = tris_[cur];
      int k = 0;
      while (tri.v[k] != ga) ++k;
      if (tri.v[(k + 1) % 3] == gb || tri.v[(k + 2) % 3] == gb) return true;
      const int next = dir == 0 ? tri.nb[(k + 2) % 3] : tri.nb[(k + 1) % 3];
      if (next < 0) break;
      if (next == start) return false;
      cur = next;
    }
  }
  return false;
}

std::vector<Vec2> DelaunayTriangulator::points() const { return {pts_.begin() + 3, pts_.end()}; }

std::vector<std::array<int, 3>> DelaunayTriangulator::triangles() const {
  std::vector<std::array<int, 3>> out;
  for (const Tri& t : tris_) {
    if (!t.alive || t.v[0] < 3 || t.v[1] < 3 || t.v[2] < 3) continue;
    out.push_back({t.v[0] - 3, t.v[1] - 3, t.v[2] - 3});
  }
  return out;
}

}  // namespace halbach::fem
