#pragma once

#include "halbach/common.hpp"
#include "halbach/geometry.hpp"
#include "halbach/observables.hpp"

#include <span>
#include <string>
#include <vector>

namespace halbach {

/// Minimum distance between an evaluation point and magnet material.
inline constexpr double kFacetClearance = 1e-9;

/// B (T) of a uniformly magnetized, infinitely long block with cross-section
/// `polygon` and in-plane magnetization M (A/m), from the equivalent surface
/// charge M·n on its edges. Points must be tagged `air` and lie outside the
/// polygon; a point tagged `magnet` that lies inside returns μ0(H + M).
Vec2 field_2d_block(const BlockPolygon& polygon, const Vec2& M, const FieldPoint& point);

/// 2×2 map from M to B for `field_2d_block`.
Eigen::Matrix2d field_2d_block_tensor(const BlockPolygon& polygon, const FieldPoint& point);

/// B (T) of the prism `polygon` × [z0, z1] with uniform magnetization M (A/m).
Vec3 field_3d_block(const BlockPolygon& polygon, double z0, double z1, const Vec3& M,
                    const FieldPoint& point);

/// 3×3 map from M to B for `field_3d_block`.
Eigen::Matrix3d field_3d_block_tensor(const BlockPolygon& polygon, double z0, double z1,
                                      const FieldPoint& point);

/// H (A/m) of a planar polygon carrying unit surface charge density. The
/// polygon normal follows the right-hand rule on the vertex order.
Vec3 charged_polygon_field(std::span<const Vec3> vertices, const Vec3& point);

/// Field of a whole array for a given parameter vector, by superposition.
/// 2-component layouts use the 2D model, 3-component layouts the 3D one.
Vec3 array_field(const HalbachArray& array, const ParameterVector& p, const FieldPoint& point);

/// Evaluator closure over `array_field`; copies the array and parameters.
FieldEvaluator analytic_evaluator(const HalbachArray& array, const ParameterVector& p);

/// Dense observable-by-parameter matrix with labels.
class LinearOperator {
 public:
  LinearOperator(Eigen::MatrixXd matrix, ParameterLayout layout, std::vector<std::string> row_labels);

  const Eigen::MatrixXd& matrix() const { return matrix_; }
  const ParameterLayout& layout() const { return layout_; }
  const std::vector<std::string>& row_labels() const { return row_labels_; }
  std::vector<std::string> col_labels() const { return layout_.labels(); }
  Eigen::Index rows() const { return matrix_.rows(); }
  Eigen::Index cols() const { return matrix_.cols(); }

  Eigen::VectorXd apply(const ParameterVector& p) const;
  Eigen::VectorXd apply(const Eigen::VectorXd& p) const;

 private:
  Eigen::MatrixXd matrix_;
  ParameterLayout layout_;
  std::vector<std::string> row_labels_;
};

/// Column (i, j, c) holds the observable produced by unit magnetization e_c
/// on block (i, j). Iron is neglected and μ_r is taken as 1 in the blocks.
/// Two-component layouts must have a single ring (2D cross-section model).
LinearOperator assemble_linear_operator(const HalbachArray& array, const ObservableSpec& spec,
                                        const ParameterLayout& layout);

/// Directional derivative of the linear model: H·ΔM.
Eigen::VectorXd gateaux_linear(const LinearOperator& op, const ParameterVector& delta);

}  // namespace halbach
