#include "halbach/field_analytic.hpp"

#include "halbach/parallel.hpp"

#include <fmt/format.h>

#include <array>
#include <cmath>

namespace halbach {

namespace {

constexpr double kInv2Pi = 0.5 / std::numbers::pi;
constexpr double kInv4Pi = 0.25 / std::numbers::pi;

// H per unit magnetization of a 2D polygon: H = T·M.
Eigen::Matrix2d h_tensor_2d(const BlockPolygon& poly, const Vec2& r) {
  Eigen::Matrix2d t_sum = Eigen::Matrix2d::Zero();
  const auto& v = poly.vertices();
  const std::size_t n = v.size();
  for (std::size_t k = 0; k < n; ++k) {
    const Vec2& a = v[k];
    const Vec2& b = v[(k + 1) % n];
    const Vec2 d = b - a;
    const double len = d.norm();
    const Vec2 t = d / len;
    const Vec2 e(t.y(), -t.x());  // outward normal
    const Vec2 w = r - a;
    const double u = w.dot(t);
    const double h = w.dot(e);
    const double ra = w.norm();
    const double rb = (r - b).norm();
    const double angle = std::atan2(len * h, h * h + u * (u - len));
    const Vec2 g = kInv2Pi * (std::log(ra / rb) * t + angle * e);
    t_sum += g * e.transpose();
  }
  return t_sum;
}

void check_region_2d(const BlockPolygon& poly, const FieldPoint& point) {
  const Vec2 r = point.position.head<2>();
  if (poly.distance_to_boundary(r) <= kFacetClearance) {
    throw RegionError(fmt::format("point ({}, {}) is on the boundary of block {}", r.x(), r.y(),
                                  poly.block_index()));
  }
  const bool inside = poly.contains(r);
  if (point.region == Region::air && inside) {
    throw RegionError(fmt::format("air point ({}, {}) lies inside block {}", r.x(), r.y(), poly.block_index()));
  }
  if (point.region == Region::magnet && !inside) {
    throw RegionError(fmt::format("magnet-tagged point ({}, {}) lies outside block {}", r.x(), r.y(),
                                  poly.block_index()));
  }
  if (point.region == Region::iron) throw RegionError("the analytic model has no iron region");
}

void check_region_3d(const BlockPolygon& poly, double z0, double z1, const FieldPoint& point) {
  if (point.region != Region::air) throw RegionError("3D analytic evaluation requires air points");
  const Vec3& r = point.position;
  if (r.z() < z0 - kFacetClearance || r.z() > z1 + kFacetClearance) return;
  const Vec2 r2 = r.head<2>();
  if (poly.contains(r2) || poly.distance_to_boundary(r2) <= kFacetClearance) {
    throw RegionError(fmt::format("point ({}, {}, {}) is inside or on block {} prism", r.x(), r.y(), r.z(),
                                  poly.block_index()));
  }
}

// Integral of 1/|r - r'| along the straight edge a→b, evaluated in a form
// free of cancellation on either side of the foot point.
double edge_log_integral(const Vec3& a, const Vec3& b, const Vec3& r) {
  const Vec3 d = b - a;
  const double len = d.norm();
  const Vec3 t = d / len;
  const Vec3 wa = a - r;
  const Vec3 wb = b - r;
  const double s1 = wa.dot(t);
  const double s2 = wb.dot(t);
  const double ra = wa.norm();
  const double rb = wb.norm();
  if (s2 < 0.0) return std::log((ra - s1) / (rb - s2));
  if (s1 > 0.0) return std::log((rb + s2) / (ra + s1));
  const double dist2 = wa.cross(t).squaredNorm();
  return std::log((rb + s2) * (ra - s1) / dist2);
}

}  // namespace

Vec3 charged_polygon_field(std::span<const Vec3> v, const Vec3& r) {
  const std::size_t n = v.size();
  if (n < 3) throw DomainError("charged polygon needs at least 3 vertices");
  Vec3 normal = Vec3::Zero();
  for (std::size_t k = 0; k < n; ++k) normal += v[k].cross(v[(k + 1) % n]);
  const double area2 = normal.norm();
  if (!(area2 > 0.0)) throw DomainError("degenerate charged polygon");
  normal /= area2;

  Vec3 in_plane = Vec3::Zero();
  for (std::size_t k = 0; k < n; ++k) {
    const Vec3& a = v[k];
    const Vec3& b = v[(k + 1) % n];
    const Vec3 t = (b - a).normalized();
    in_plane += t.cross(normal) * edge_log_integral(a, b, r);
  }

  double solid = 0.0;
  const Vec3 r1 = v[0] - r;
  const double l1 = r1.norm();
  for (std::size_t k = 1; k + 1 < n; ++k) {
    const Vec3 r2 = v[k] - r;
    const Vec3 r3 = v[k + 1] - r;
    const double l2 = r2.norm();
    const double l3 = r3.norm();
    const double num = r1.dot(r2.cross(r3));
    const double den = l1 * l2 * l3 + r1.dot(r2) * l3 + r1.dot(r3) * l2 + r2.dot(r3) * l1;
    solid -= 2.0 * std::atan2(num, den);
  }
  return kInv4Pi * (in_plane + solid * normal);
}

Eigen::Matrix2d field_2d_block_tensor(const BlockPolygon& polygon, const FieldPoint& point) {
  check_region_2d(polygon, point);
  Eigen::Matrix2d t = h_tensor_2d(polygon, point.position.head<2>());
  if (point.region == Region::magnet) t += Eigen::Matrix2d::Identity();
  return kMu0 * t;
}

Vec2 field_2d_block(const BlockPolygon& polygon, const Vec2& M, const FieldPoint& point) {
  return field_2d_block_tensor(polygon, point) * M;
}

Eigen::Matrix3d field_3d_block_tensor(const BlockPolygon& polygon, double z0, double z1,
                                      const FieldPoint& point) {
  if (!(z1 > z0)) throw DomainError("prism needs z1 > z0");
  check_region_3d(polygon, z0, z1, point);
  const Vec3& r = point.position;
  const auto& v = polygon.vertices();
  const std::size_t n = v.size();
  Eigen::Matrix3d t = Eigen::Matrix3d::Zero();

  for (std::size_t k = 0; k < n; ++k) {
    const Vec2& a = v[k];
    const Vec2& b = v[(k + 1) % n];
    const std::array<Vec3, 4> facet{Vec3(a.x(), a.y(), z0), Vec3(b.x(), b.y(), z0), Vec3(b.x(), b.y(), z1),
                                    Vec3(a.x(), a.y(), z1)};
    const Vec2 n2 = polygon.edge_normal(k);
    t += charged_polygon_field(facet, r) * Vec3(n2.x(), n2.y(), 0.0).transpose();
  }

  std::vector<Vec3> top(n);
  std::vector<Vec3> bottom(n);
  for (std::size_t k = 0; k < n; ++k) {
    top[k] = Vec3(v[k].x(), v[k].y(), z1);
    bottom[n - 1 - k] = Vec3(v[k].x(), v[k].y(), z0);
  }
  t += charged_polygon_field(top, r) * Vec3::UnitZ().transpose();
  t -= charged_polygon_field(bottom, r) * Vec3::UnitZ().transpose();
  return kMu0 * t;
}

Vec3 field_3d_block(const BlockPolygon& polygon, double z0, double z1, const Vec3& M, const FieldPoint& point) {
  return field_3d_block_tensor(polygon, z0, z1, point) * M;
}

Vec3 array_field(const HalbachArray& array, const ParameterVector& p, const FieldPoint& point) {
  const auto& layout = p.layout;
  Vec3 b = Vec3::Zero();
  if (layout.n_components() == 2) {
    if (layout.n_rings() != 1) throw DomainError("2D field evaluation needs a single-ring layout");
    for (int i = 1; i <= layout.n_blocks(); ++i) {
      const Vec2 m(p.at(i, 1, 0), p.at(i, 1, 1));
      b.head<2>() += field_2d_block(array.block(i), m, point);
    }
    return b;
  }
  if (layout.n_rings() != array.n_rings()) throw DomainError("3D layout ring count does not match the array");
  for (int j = 1; j <= layout.n_rings(); ++j) {
    const auto [z0, z1] = array.ring_extent(j);
    for (int i = 1; i <= layout.n_blocks(); ++i) {
      const Vec3 m(p.at(i, j, 0), p.at(i, j, 1), p.at(i, j, 2));
      b += field_3d_block(array.block(i), z0, z1, m, point);
    }
  }
  return b;
}

FieldEvaluator analytic_evaluator(const HalbachArray& array, const ParameterVector& p) {
  return [array, p](const FieldPoint& point) { return array_field(array, p, point); };
}

LinearOperator::LinearOperator(Eigen::MatrixXd matrix, ParameterLayout layout, std::vector<std::string> row_labels)
    : matrix_(std::move(matrix)), layout_(layout), row_labels_(std::move(row_labels)) {
  if (matrix_.cols() != layout_.dimension()) {
    throw DomainError(fmt::format("operator has {} columns but the layout dimension is {}", matrix_.cols(),
                                  layout_.dimension()));
  }
  if (static_cast<Eigen::Index>(row_labels_.size()) != matrix_.rows()) {
    throw DomainError("operator row label count does not match its rows");
  }
  if (!matrix_.allFinite()) throw DomainError("operator has non-finite entries");
}

Eigen::VectorXd LinearOperator::apply(const ParameterVector& p) const {
  if (!(p.layout == layout_)) throw DomainError("parameter layout does not match the operator");
  return matrix_ * p.values;
}

Eigen::VectorXd LinearOperator::apply(const Eigen::VectorXd& p) const {
  if (p.size() != matrix_.cols()) {
    throw DomainError(fmt::format("parameter length {} does not match operator width {}", p.size(), matrix_.cols()));
  }
  return matrix_ * p;
}

LinearOperator assemble_linear_operator(const HalbachArray& array, const ObservableSpec& spec,
                                        const ParameterLayout& layout) {
  if (spec.n_components() != layout.n_components()) {
    throw DomainError("observable and parameter layout disagree on 2D/3D");
  }
  if (layout.n_blocks() != kBlocksPerRing) throw DomainError("layout must cover 16 blocks");
  if (layout.n_components() == 2 && layout.n_rings() != 1) {
    throw DomainError("2D operator needs a single-ring layout");
  }
  if (layout.n_components() == 3 && layout.n_rings() != array.n_rings()) {
    throw DomainError("3D layout ring count does not match the array");
  }
  spec.validate(array);

  const std::vector<FieldPoint> points = spec.sample_points();
  const int nc = layout.n_components();
  Eigen::MatrixXd h(spec.dimension(), layout.dimension());
  const std::size_t n_cells = static_cast<std::size_t>(layout.n_blocks()) * static_cast<std::size_t>(layout.n_rings());

  parallel_for(n_cells, [&](std::size_t cell) {
    const int i = static_cast<int>(cell) / layout.n_rings() + 1;
    const int j = static_cast<int>(cell) % layout.n_rings() + 1;
    std::vector<Eigen::Matrix3d> tensors(points.size(), Eigen::Matrix3d::Zero());
    for (std::size_t k = 0; k < points.size(); ++k) {
      if (nc == 2) {
        tensors[k].topLeftCorner<2, 2>() = field_2d_block_tensor(array.block(i), points[k]);
      } else {
        const auto [z0, z1] = array.ring_extent(j);
        tensors[k] = field_3d_block_tensor(array.block(i), z0, z1, points[k]);
      }
    }
    std::vector<Vec3> field(points.size());
    for (int c = 0; c < nc; ++c) {
      for (std::size_t k = 0; k < points.size(); ++k) field[k] = tensors[k].col(c);
      h.col(layout.index(i, j, c)) = spec.reduce(field);
    }
  });
  return {std::move(h), layout, spec.row_labels()};
}

Eigen::VectorXd gateaux_linear(const LinearOperator& op, const ParameterVector& delta) {
  return op.apply(delta);
}

}  // namespace halbach
