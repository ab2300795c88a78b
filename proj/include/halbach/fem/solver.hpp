#pragma once

#include "halbach/common.hpp"
#include "halbach/fem/material.hpp"
#include "halbach/fem/mesh.hpp"
#include "halbach/geometry.hpp"
#include "halbach/observables.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace halbach::fem {

struct SolverOptions {
  double tolerance = 1e-8;   // relative residual ‖K(A)A − f‖/‖f‖
  int max_iterations = 200;
  double relaxation = 0.7;   // Picard under-relaxation on the iron reluctivity
};

/// Nodal A_z (T·m) with the convergence record of the solve.
struct FemSolution {
  Eigen::VectorXd A;
  int iterations = 0;
  double residual = 0.0;
  std::vector<double> residual_history;
};

/// Raised when the nonlinear iteration does not reach the tolerance.
class ConvergenceError : public DomainError {
 public:
  ConvergenceError(const std::string& what, std::vector<double> history)
      : DomainError(what), history_(std::move(history)) {}
  const std::vector<double>& residual_history() const { return history_; }

 private:
  std::vector<double> history_;
};

/// Assembled P1 A_z problem on a fixed mesh. Holds the sparsity pattern, the
/// symbolic factorization and cached observation maps, so repeated solves
/// only refactor numerically. Not shareable between threads during a solve;
/// independent contexts may run concurrently.
class FemContext {
 public:
  FemContext(Mesh2D mesh, Materials materials, SolverOptions options = {});
  FemContext(const FemContext& other);
  FemContext& operator=(const FemContext&) = delete;
  ~FemContext();

  const Mesh2D& mesh() const { return mesh_; }
  const Materials& materials() const { return materials_; }
  const SolverOptions& options() const { return options_; }
  /// True if ν does not depend on the solution (linear curve or no iron).
  bool is_linear() const { return linear_; }

  /// Nonlinear solve. Starts from the warm-start solution if one is set,
  /// otherwise from zero.
  FemSolution solve(const ParameterVector& p);
  FemSolution solve(const ParameterVector& p, const Eigen::VectorXd& initial);

  /// Caches the solution for `p` as the starting point of later solves.
  void set_warm_start(const ParameterVector& p);

  /// A′ of the problem linearized at `base` (differential reluctivity in iron)
  /// with source ΔM.
  FemSolution solve_sensitivity(const FemSolution& base, const ParameterVector& delta);

  /// Piecewise-constant B per triangle.
  std::vector<Vec2> element_B(const FemSolution& solution) const;

  /// B at arbitrary points; with `recover`, nodal patch averages within one
  /// region are interpolated where available.
  std::vector<Vec2> evaluate_B(const FemSolution& solution, std::span<const Vec2> points,
                               bool recover = true) const;

  /// Observable vector for a 2D spec, using a cached point-location map.
  Eigen::VectorXd observe(const FemSolution& solution, const ObservableSpec& spec);

 private:
  struct PointMap {
    Eigen::SparseMatrix<double, Eigen::RowMajor> bx;
    Eigen::SparseMatrix<double, Eigen::RowMajor> by;
  };

  void check_parameters(const ParameterVector& p) const;
  Eigen::VectorXd source(const ParameterVector& p) const;
  std::vector<double> iron_nu(const Eigen::VectorXd& A) const;
  void assemble(const Eigen::VectorXd& A, bool tangent, const std::vector<double>* nu_iron = nullptr);
  Eigen::VectorXd solve_free(const Eigen::VectorXd& rhs);
  PointMap build_point_map(std::span<const Vec2> points, std::span<const Region> regions, bool recover) const;

  Mesh2D mesh_;
  Materials materials_;
  SolverOptions options_;
  bool linear_ = true;

  std::vector<std::array<Vec2, 3>> grads_;
  std::vector<double> areas_;
  std::vector<int> dof_;
  int n_free_ = 0;
  std::vector<std::array<int, 9>> slots_;
  std::vector<char> pure_node_;  // node touches a single region
  Eigen::SparseMatrix<double> K_;
  std::unique_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> ldlt_;
  bool analyzed_ = false;
  bool linear_factorized_ = false;
  std::optional<Eigen::VectorXd> warm_;
  std::map<std::string, PointMap> point_maps_;
};

/// One-shot solve on a fresh context.
FemSolution solve_magnetostatic(const Mesh2D& mesh, const Materials& materials, const ParameterVector& p,
                                const SolverOptions& options = {});

std::vector<Vec2> evaluate_B(const Mesh2D& mesh, const FemSolution& solution, std::span<const Vec2> points,
                             bool recover = true);

FemSolution solve_sensitivity(const Mesh2D& mesh, const FemSolution& base, const Materials& materials,
                              const ParameterVector& delta, const SolverOptions& options = {});

/// Observable of the FE model for a 2D spec.
Eigen::VectorXd fem_forward(const ParameterVector& p, const ObservableSpec& spec, FemContext& context);

}  // namespace halbach::fem
