#include "halbach/fem/solver.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace halbach::fem {

namespace {

// B = curl(A ẑ) = (∂A/∂y, −∂A/∂x) for a P1 gradient.
Vec2 curl_of(const Vec2& grad) { return {grad.y(), -grad.x()}; }

}  // namespace

FemContext::FemContext(Mesh2D mesh, Materials materials, SolverOptions options)
    : mesh_(std::move(mesh)), materials_(std::move(materials)), options_(options) {
  if (mesh_.triangles.empty()) throw DomainError("mesh has no triangles");
  if (!(options_.tolerance > 0.0) || options_.max_iterations < 1 || !(options_.relaxation > 0.0) ||
      options_.relaxation > 1.0) {
    throw DomainError("invalid FE solver options");
  }
  const bool has_iron = std::find(mesh_.tags.begin(), mesh_.tags.end(), kIronTag) != mesh_.tags.end();
  linear_ = materials_.is_linear() || !has_iron;

  const std::size_t nt = mesh_.n_triangles();
  grads_.resize(nt);
  areas_.resize(nt);
  for (std::size_t t = 0; t < nt; ++t) {
    const auto& tri = mesh_.triangles[t];
    const double a = mesh_.area(t);
    if (!(a > 0.0)) throw DomainError(fmt::format("triangle {} has non-positive area", t));
    areas_[t] = a;
    for (int k = 0; k < 3; ++k) {
      const Vec2& p1 = mesh_.nodes[tri[(k + 1) % 3]];
      const Vec2& p2 = mesh_.nodes[tri[(k + 2) % 3]];
      grads_[t][k] = Vec2(p1.y() - p2.y(), p2.x() - p1.x()) / (2.0 * a);
    }
  }

  dof_.assign(mesh_.n_nodes(), -1);
  for (std::size_t v = 0; v < mesh_.n_nodes(); ++v) {
    if (!mesh_.boundary[v]) dof_[v] = n_free_++;
  }
  if (n_free_ == 0) throw DomainError("mesh has no interior nodes");

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(nt * 9);
  for (const auto& tri : mesh_.triangles) {
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        const int r = dof_[tri[i]];
        const int c = dof_[tri[j]];
        if (r >= 0 && c >= 0) trip.emplace_back(r, c, 0.0);
      }
    }
  }
  K_.resize(n_free_, n_free_);
  K_.setFromTriplets(trip.begin(), trip.end());
  K_.makeCompressed();
  slots_.resize(nt);
  for (std::size_t t = 0; t < nt; ++t) {
    const auto& tri = mesh_.triangles[t];
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        const int r = dof_[tri[i]];
        const int c = dof_[tri[j]];
        int slot = -1;
        if (r >= 0 && c >= 0) {
          const int* begin = K_.innerIndexPtr() + K_.outerIndexPtr()[c];
          const int* end = K_.innerIndexPtr() + K_.outerIndexPtr()[c + 1];
          slot = static_cast<int>(std::lower_bound(begin, end, r) - K_.innerIndexPtr());
        }
        slots_[t][3 * i + j] = slot;
      }
    }
  }

  std::vector<int> first_tag(mesh_.n_nodes(), -1);
  pure_node_.assign(mesh_.n_nodes(), 1);
  for (std::size_t t = 0; t < nt; ++t) {
    for (int v : mesh_.triangles[t]) {
      if (first_tag[v] < 0) {
        first_tag[v] = mesh_.tags[t];
      } else if (first_tag[v] != mesh_.tags[t]) {
        pure_node_[v] = 0;
      }
    }
  }
  ldlt_ = std::make_unique<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>();
}

FemContext::FemContext(const FemContext& other)
    : mesh_(other.mesh_),
      materials_(other.materials_),
      options_(other.options_),
      linear_(other.linear_),
      grads_(other.grads_),
      areas_(other.areas_),
      dof_(other.dof_),
      n_free_(other.n_free_),
      slots_(other.slots_),
      pure_node_(other.pure_node_),
      K_(other.K_),
      ldlt_(std::make_unique<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>()),
      warm_(other.warm_),
      point_maps_(other.point_maps_) {}

FemContext::~FemContext() = default;

void FemContext::check_parameters(const ParameterVector& p) const {
  const auto& l = p.layout;
  if (l.n_components() != 2 || l.n_rings() != 1 || l.n_blocks() != kBlocksPerRing) {
    throw DomainError("the FE model needs a 2-component single-ring parameter layout");
  }
}

Eigen::VectorXd FemContext::source(const ParameterVector& p) const {
  check_parameters(p);
  Eigen::VectorXd f = Eigen::VectorXd::Zero(n_free_);
  for (std::size_t t = 0; t < mesh_.n_triangles(); ++t) {
    const int tag = mesh_.tags[t];
    if (tag < 1 || tag > kBlocksPerRing) continue;
    const Vec2 m(p.at(tag, 1, 0), p.at(tag, 1, 1));
    const auto& tri = mesh_.triangles[t];
    for (int k = 0; k < 3; ++k) {
      const int r = dof_[tri[k]];
      if (r >= 0) f(r) += areas_[t] * m.dot(curl_of(grads_[t][k]));
    }
  }
  return f;
}

std::vector<double> FemContext::iron_nu(const Eigen::VectorXd& A) const {
  std::vector<double> nu(mesh_.n_triangles(), 0.0);
  for (std::size_t t = 0; t < mesh_.n_triangles(); ++t) {
    if (mesh_.tags[t] != kIronTag) continue;
    const auto& tri = mesh_.triangles[t];
    const auto& g = grads_[t];
    nu[t] = materials_.iron.nu((A(tri[0]) * g[0] + A(tri[1]) * g[1] + A(tri[2]) * g[2]).norm());
  }
  return nu;
}

void FemContext::assemble(const Eigen::VectorXd& A, bool tangent, const std::vector<double>* nu_iron) {
  std::fill(K_.valuePtr(), K_.valuePtr() + K_.nonZeros(), 0.0);
  const double nu_air = 1.0 / kMu0;
  const double nu_mag = materials_.magnet_nu();
  for (std::size_t t = 0; t < mesh_.n_triangles(); ++t) {
    const auto& g = grads_[t];
    const auto& tri = mesh_.triangles[t];
    const int tag = mesh_.tags[t];
    Eigen::Matrix2d D = Eigen::Matrix2d::Identity();
    if (tag == kAirTag) {
      D *= nu_air;
    } else if (tag == kIronTag && nu_iron) {
      D *= (*nu_iron)[t];
    } else if (tag == kIronTag) {
      const Vec2 grad = A(tri[0]) * g[0] + A(tri[1]) * g[1] + A(tri[2]) * g[2];
      const double s = grad.norm();
      D *= materials_.iron.nu(s);
      if (tangent && s > 0.0) D += (materials_.iron.dnu(s) / s) * grad * grad.transpose();
    } else {
      D *= nu_mag;
    }
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        const int slot = slots_[t][3 * i + j];
        if (slot >= 0) K_.valuePtr()[slot] += areas_[t] * g[i].dot(D * g[j]);
      }
    }
  }
}

Eigen::VectorXd FemContext::solve_free(const Eigen::VectorXd& rhs) {
  if (!linear_factorized_) {
    if (!analyzed_) {
      ldlt_->analyzePattern(K_);
      analyzed_ = true;
    }
    ldlt_->factorize(K_);
    if (ldlt_->info() != Eigen::Success) throw DomainError("FE system matrix is singular");
    if (linear_) linear_factorized_ = true;
  }
  Eigen::VectorXd x = ldlt_->solve(rhs);
  if (ldlt_->info() != Eigen::Success || !x.allFinite()) throw DomainError("FE linear solve failed");
  return x;
}

FemSolution FemContext::solve(const ParameterVector& p) {
  if (warm_) return solve(p, *warm_);
  return solve(p, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mesh_.n_nodes())));
}

FemSolution FemContext::solve(const ParameterVector& p, const Eigen::VectorXd& initial) {
  if (initial.size() != static_cast<Eigen::Index>(mesh_.n_nodes())) throw DomainError("initial A has the wrong length");
  const Eigen::VectorXd f = source(p);
  FemSolution sol;
  sol.A = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mesh_.n_nodes()));
  const double fnorm = f.norm();
  if (fnorm == 0.0) {
    sol.residual_history.push_back(0.0);
    return sol;
  }

  const auto scatter = [&](const Eigen::VectorXd& x) {
    for (std::size_t v = 0; v < mesh_.n_nodes(); ++v) sol.A(static_cast<Eigen::Index>(v)) = dof_[v] >= 0 ? x(dof_[v]) : 0.0;
  };

  if (linear_) {
    if (!linear_factorized_) assemble(sol.A, false);
    const Eigen::VectorXd x = solve_free(f);
    scatter(x);
    sol.iterations = 1;
    sol.residual = (K_ * x - f).norm() / fnorm;
    sol.residual_history.push_back(sol.residual);
    return sol;
  }

  Eigen::VectorXd x(n_free_);
  for (std::size_t v = 0; v < mesh_.n_nodes(); ++v) {
    if (dof_[v] >= 0) x(dof_[v]) = initial(static_cast<Eigen::Index>(v));
  }
  // Fixed point on the iron reluctivity, relaxed between iterations. The
  // relaxation factor is halved whenever the residual grows.
  std::vector<double> nu;
  double omega = options_.relaxation;
  for (int it = 0; it <= options_.max_iterations; ++it) {
    scatter(x);
    const std::vector<double> nu_now = iron_nu(sol.A);
    assemble(sol.A, false, &nu_now);
    const double r = (K_ * x - f).norm() / fnorm;
    sol.residual_history.push_back(r);
    sol.residual = r;
    sol.iterations = it;
    if (r < options_.tolerance) return sol;
    if (it == options_.max_iterations) break;
    if (it == 0) {
      nu = nu_now;
    } else {
      if (r > sol.residual_history[static_cast<std::size_t>(it) - 1]) omega = std::max(0.5 * omega, 1.0 / 1024);
      for (std::size_t t = 0; t < nu.size(); ++t) nu[t] = (1.0 - omega) * nu[t] + omega * nu_now[t];
      assemble(sol.A, false, &nu);
    }
    x = solve_free(f);
  }
  throw ConvergenceError(fmt::format("Picard iteration stalled at relative residual {:.3e} after {} iterations",
                                     sol.residual, options_.max_iterations),
                         sol.residual_history);
}

void FemContext::set_warm_start(const ParameterVector& p) {
  warm_.reset();
  warm_ = solve(p).A;
}

FemSolution FemContext::solve_sensitivity(const FemSolution& base, const ParameterVector& delta) {
  if (base.A.size() != static_cast<Eigen::Index>(mesh_.n_nodes())) throw DomainError("base solution does not fit the mesh");
  if (!(base.residual < options_.tolerance) && !linear_) {
    throw DomainError("sensitivity needs a converged base solution");
  }
  const Eigen::VectorXd f = source(delta);
  FemSolution sol;
  sol.A = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mesh_.n_nodes()));
  sol.iterations = 1;
  if (f.norm() == 0.0) return sol;
  if (!linear_ || !linear_factorized_) assemble(base.A, true);
  const Eigen::VectorXd x = solve_free(f);
  for (std::size_t v = 0; v < mesh_.n_nodes(); ++v) {
    if (dof_[v] >= 0) sol.A(static_cast<Eigen::Index>(v)) = x(dof_[v]);
  }
  sol.residual = (K_ * x - f).norm() / f.norm();
  sol.residual_history.push_back(sol.residual);
  return sol;
}

std::vector<Vec2> FemContext::element_B(const FemSolution& solution) const {
  if (solution.A.size() != static_cast<Eigen::Index>(mesh_.n_nodes())) throw DomainError("solution does not fit the mesh");
  std::vector<Vec2> b(mesh_.n_triangles());
  for (std::size_t t = 0; t < mesh_.n_triangles(); ++t) {
    const auto& tri = mesh_.triangles[t];
    const auto& g = grads_[t];
    b[t] = curl_of(solution.A(tri[0]) * g[0] + solution.A(tri[1]) * g[1] + solution.A(tri[2]) * g[2]);
  }
  return b;
}

FemContext::PointMap FemContext::build_point_map(std::span<const Vec2> points, std::span<const Region> regions,
                                                 bool recover) const {
  std::vector<std::vector<int>> node_tris;
  if (recover) {
    node_tris.resize(mesh_.n_nodes());
    for (std::size_t t = 0; t < mesh_.n_triangles(); ++t) {
      for (int v : mesh_.triangles[t]) node_tris[v].push_back(static_cast<int>(t));
    }
  }
  std::vector<Eigen::Triplet<double>> tx;
  std::vector<Eigen::Triplet<double>> ty;
  for (std::size_t k = 0; k < points.size(); ++k) {
    const Vec2& p = points[k];
    const long t = mesh_.locate(p);
    if (t < 0) throw DomainError(fmt::format("point ({}, {}) lies outside the FE mesh", p.x(), p.y()));
    if (!regions.empty() && regions[k] == Region::air && mesh_.tags[t] != kAirTag) {
      throw RegionError(fmt::format("air point ({}, {}) lies in material", p.x(), p.y()));
    }
    const auto& tri = mesh_.triangles[t];
    const auto add_element = [&](int e, double w) {
      for (int m = 0; m < 3; ++m) {
        const Vec2 c = curl_of(grads_[e][m]);
        tx.emplace_back(static_cast<int>(k), mesh_.triangles[e][m], w * c.x());
        ty.emplace_back(static_cast<int>(k), mesh_.triangles[e][m], w * c.y());
      }
    };
    const bool use_patch = recover && pure_node_[tri[0]] && pure_node_[tri[1]] && pure_node_[tri[2]];
    if (!use_patch) {
      add_element(static_cast<int>(t), 1.0);
      continue;
    }
    const double a2 = 2.0 * areas_[t];
    for (int i = 0; i < 3; ++i) {
      const Vec2& q1 = mesh_.nodes[tri[(i + 1) % 3]];
      const Vec2& q2 = mesh_.nodes[tri[(i + 2) % 3]];
      const double lambda = ((q1.x() - p.x()) * (q2.y() - p.y()) - (q1.y() - p.y()) * (q2.x() - p.x())) / a2;
      double wsum = 0.0;
      for (int e : node_tris[tri[i]]) wsum += areas_[e];
      for (int e : node_tris[tri[i]]) add_element(e, lambda * areas_[e] / wsum);
    }
  }
  PointMap map;
  const auto rows = static_cast<Eigen::Index>(points.size());
  const auto cols = static_cast<Eigen::Index>(mesh_.n_nodes());
  map.bx.resize(rows, cols);
  map.by.resize(rows, cols);
  map.bx.setFromTriplets(tx.begin(), tx.end());
  map.by.setFromTriplets(ty.begin(), ty.end());
  return map;
}

std::vector<Vec2> FemContext::evaluate_B(const FemSolution& solution, std::span<const Vec2> points, bool recover) const {
  if (solution.A.size() != static_cast<Eigen::Index>(mesh_.n_nodes())) throw DomainError("solution does not fit the mesh");
  const PointMap map = build_point_map(points, {}, recover);
  const Eigen::VectorXd bx = map.bx * solution.A;
  const Eigen::VectorXd by = map.by * solution.A;
  std::vector<Vec2> out(points.size());
  for (std::size_t k = 0; k < points.size(); ++k) out[k] = Vec2(bx(static_cast<Eigen::Index>(k)), by(static_cast<Eigen::Index>(k)));
  return out;
}

Eigen::VectorXd FemContext::observe(const FemSolution& solution, const ObservableSpec& spec) {
  if (spec.n_components() != 2) throw DomainError("the FE model only provides 2D observables");
  if (solution.A.size() != static_cast<Eigen::Index>(mesh_.n_nodes())) throw DomainError("solution does not fit the mesh");
  const std::string key = spec.to_json().dump();
  auto it = point_maps_.find(key);
  if (it == point_maps_.end()) {
    const auto pts = spec.sample_points();
    std::vector<Vec2> xy;
    std::vector<Region> regions;
    for (const auto& p : pts) {
      xy.push_back(p.position.head<2>());
      regions.push_back(p.region);
    }
    it = point_maps_.emplace(key, build_point_map(xy, regions, true)).first;
  }
  const Eigen::VectorXd bx = it->second.bx * solution.A;
  const Eigen::VectorXd by = it->second.by * solution.A;
  std::vector<Vec3> field(static_cast<std::size_t>(bx.size()));
  for (Eigen::Index k = 0; k < bx.size(); ++k) field[static_cast<std::size_t>(k)] = Vec3(bx(k), by(k), 0.0);
  return spec.reduce(field);
}

FemSolution solve_magnetostatic(const Mesh2D& mesh, const Materials& materials, const ParameterVector& p,
                                const SolverOptions& options) {
  FemContext ctx(mesh, materials, options);
  return ctx.solve(p);
}

std::vector<Vec2> evaluate_B(const Mesh2D& mesh, const FemSolution& solution, std::span<const Vec2> points,
                             bool recover) {
  const FemContext ctx(mesh, Materials{});
  return ctx.evaluate_B(solution, points, recover);
}

FemSolution solve_sensitivity(const Mesh2D& mesh, const FemSolution& base, const Materials& materials,
                              const ParameterVector& delta, const SolverOptions& options) {
  FemContext ctx(mesh, materials, options);
  return ctx.solve_sensitivity(base, delta);
}

Eigen::VectorXd fem_forward(const ParameterVector& p, const ObservableSpec& spec, FemContext& context) {
  return context.observe(context.solve(p), spec);
}

}  // namespace halbach::fem
