#pragma once

#include "halbach/common.hpp"

#include <array>
#include <utility>
#include <vector>

namespace halbach::fem {

/// Incremental Bowyer–Watson triangulation inside a bounding disk.
///
/// Points are inserted one at a time; constraint segments are recovered by
/// splitting them at their midpoints until every piece is a mesh edge.
class DelaunayTriangulator {
 public:
  DelaunayTriangulator(const Vec2& center, double radius);

  /// Inserts p and returns its vertex index. A point that coincides with an
  /// existing vertex returns that vertex instead.
  int insert(const Vec2& p);

  /// Splits missing segments until each is an edge of the triangulation.
  /// `segments` is rewritten in place with the split pieces. Points created
  /// on a segment are passed to `on_split(new_index, segment_slot)`.
  template <class OnSplit>
  void recover_segments(std::vector<std::pair<int, int>>& segments, OnSplit on_split);

  /// Vertices, excluding the enclosing super-triangle.
  std::vector<Vec2> points() const;
  /// Counter-clockwise triangles indexing `points()`.
  std::vector<std::array<int, 3>> triangles() const;

  bool has_edge(int a, int b) const;

 private:
  struct Tri {
    std::array<int, 3> v;
    std::array<int, 3> nb;  // neighbour opposite v[k], -1 on the hull
    bool alive = true;
  };

  int locate(const Vec2& p) const;
  double incircle(const Tri& t, const Vec2& p) const;
  std::vector<std::pair<int, int>> missing_segments(const std::vector<std::pair<int, int>>& segments) const;

  std::vector<Vec2> pts_;
  std::vector<Tri> tris_;
  std::vector<int> free_;
  mutable int last_ = 0;
  double scale_ = 1.0;
  std::vector<int> mark_;
  int stamp_ = 0;
};

template <class OnSplit>
void DelaunayTriangulator::recover_segments(std::vector<std::pair<int, int>>& segments, OnSplit on_split) {
  for (int round = 0; round < 60; ++round) {
    bool changed = false;
    std::vector<std::pair<int, int>> next;
    next.reserve(segments.size());
    for (std::size_t s = 0; s < segments.size(); ++s) {
      const auto [a, b] = segments[s];
      if (has_edge(a, b)) {
        next.push_back(segments[s]);
        continue;
      }
      const Vec2 mid = 0.5 * (pts_[a + 3] + pts_[b + 3]);
      const int m = insert(mid);
      on_split(m, s);
      next.emplace_back(a, m);
      next.emplace_back(m, b);
      changed = true;
    }
    segments = std::move(next);
    if (!changed) return;
  }
  throw DomainError("segment recovery did not converge");
}

}  // namespace halbach::fem
