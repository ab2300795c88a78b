#include "halbach/fem/material.hpp"
#include "halbach/fem/mesh.hpp"
#include "halbach/fem/solver.hpp"
#include "halbach/field_analytic.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

using namespace halbach;
using namespace halbach::fem;

namespace {

HalbachArray iron_array() {
  ArrayConfig cfg;
  cfg.iron_inner = 0.21;
  cfg.iron_outer = 0.25;
  return HalbachArray::build(cfg);
}

// Iron whose reluctivity rises steeply at the few-10 mT levels reached in the yoke.
Materials soft_iron() {
  Materials m;
  m.iron = HBCurve::brauer(5000.0, 500.0, 388.33);
  return m;
}

Materials linear_materials() {
  Materials m;
  m.iron = HBCurve::linear(1.0);
  m.magnet_mu_r = 1.0;
  return m;
}

ParameterVector nominal_2d(const HalbachArray& array) { return nominal_parameter_vector(array, ParameterLayout(1, 2)); }

ParameterVector random_delta(std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  ParameterVector d(ParameterLayout(1, 2));
  for (Eigen::Index k = 0; k < d.values.size(); ++k) d.values(k) = n(rng);
  return d;
}

std::vector<Vec2> circle_points(double r, int n) {
  std::vector<Vec2> pts;
  for (int k = 0; k < n; ++k) {
    const double t = 2 * std::numbers::pi * k / n;
    pts.emplace_back(r * std::cos(t), r * std::sin(t));
  }
  return pts;
}

ObservableSpec bore_spec(double r, int n) {
  std::vector<FieldPoint> fp;
  for (const auto& p : circle_points(r, n)) fp.push_back({Vec3(p.x(), p.y(), 0.0), Region::air});
  return ObservableSpec::point_field(fp, 2);
}

Eigen::VectorXd flatten(const std::vector<Vec2>& b) {
  Eigen::VectorXd v(2 * static_cast<Eigen::Index>(b.size()));
  for (std::size_t k = 0; k < b.size(); ++k) v.segment<2>(2 * static_cast<Eigen::Index>(k)) = b[k];
  return v;
}

}  // namespace

TEST_CASE("mesh generation") {
  const auto array = HalbachArray::build({});
  const double R = default_truncation_radius(array);
  CHECK(R == doctest::Approx(0.6));
  const Mesh2D coarse = generate_mesh(array, array.inner_radius() / 5, R);
  const Mesh2D mid = generate_mesh(array, array.inner_radius() / 10, R);
  const Mesh2D fine = generate_mesh(array, array.inner_radius() / 20, R);

  SUBCASE("halving h roughly quadruples the triangle count") {
    const std::array<const Mesh2D*, 3> levels{&coarse, &mid, &fine};
    for (std::size_t k = 1; k < levels.size(); ++k) {
      const double ratio =
          static_cast<double>(levels[k]->n_triangles()) / static_cast<double>(levels[k - 1]->n_triangles());
      CHECK(ratio >= 3.0);
      CHECK(ratio <= 5.0);
    }
  }

  SUBCASE("block regions reproduce the polygon areas") {
    for (const Mesh2D* m : {&coarse, &fine}) {
      for (int i = 1; i <= kBlocksPerRing; ++i) {
        CHECK(m->region_area(i) == doctest::Approx(array.block(i).area()).epsilon(0.01));
      }
    }
  }

  SUBCASE("boundary nodes lie on the truncation circle only") {
    for (std::size_t v = 0; v < fine.n_nodes(); ++v) {
      const double r = fine.nodes[v].norm();
      if (fine.boundary[v]) CHECK(r == doctest::Approx(R).epsilon(1e-9));
      else CHECK(r < R * (1 - 1e-9));
    }
  }

  SUBCASE("triangles are positive and the disk area is covered") {
    double total = 0.0;
    for (std::size_t t = 0; t < fine.n_triangles(); ++t) {
      CHECK(fine.area(t) > 0.0);
      total += fine.area(t);
    }
    CHECK(total == doctest::Approx(std::numbers::pi * R * R).epsilon(0.01));
    CHECK_NOTHROW(fine.validate(array));
  }

  SUBCASE("JSON round trip") {
    const Mesh2D back = mesh_from_json(mesh_to_json(coarse));
    CHECK(back.nodes == coarse.nodes);
    CHECK(back.triangles == coarse.triangles);
    CHECK(back.tags == coarse.tags);
    CHECK(back.boundary == coarse.boundary);
    CHECK(back.truncation_radius == coarse.truncation_radius);
  }

  SUBCASE("invalid arguments") {
    CHECK_THROWS_AS(generate_mesh(array, 0.0, R), DomainError);
    CHECK_THROWS_AS(generate_mesh(array, 0.01, 0.15), DomainError);
  }
}

TEST_CASE("iron mesh carries an annular iron region") {
  const auto array = iron_array();
  const double R = default_truncation_radius(array);
  CHECK(R == doctest::Approx(0.75));
  const Mesh2D mesh = generate_mesh(array, array.inner_radius() / 10, R);
  const double annulus = std::numbers::pi * (0.25 * 0.25 - 0.21 * 0.21);
  CHECK(mesh.region_area(kIronTag) == doctest::Approx(annulus).epsilon(0.01));
  CHECK_NOTHROW(mesh.validate(array));
  CHECK(region_of_tag(kIronTag) == Region::iron);
  CHECK(region_of_tag(kAirTag) == Region::air);
  CHECK(region_of_tag(5) == Region::magnet);
  CHECK_THROWS_AS(region_of_tag(18), DomainError);
}

TEST_CASE("H(B) curves") {
  SUBCASE("Brauer curve") {
    const HBCurve c = HBCurve::brauer();
    CHECK(c.H(0.0) == 0.0);
    CHECK(c.nu(0.0) == doctest::Approx(0.3774 + 388.33));
    double prev = 0.0;
    for (double b = 0.05; b < 2.5; b += 0.05) {
      CHECK(c.H(b) > prev);
      prev = c.H(b);
      CHECK(c.nu(b) > 0.0);
      const double fd = (c.nu(b + 1e-6) - c.nu(b - 1e-6)) / 2e-6;
      CHECK(c.dnu(b) == doctest::Approx(fd).epsilon(1e-6));
    }
  }

  SUBCASE("linear curve") {
    const HBCurve c = HBCurve::linear(1000.0);
    CHECK(c.nu(1.3) == doctest::Approx(1.0 / (kMu0 * 1000.0)));
    CHECK(c.dnu(1.3) == 0.0);
    CHECK_THROWS_AS(HBCurve::linear(0.0), DomainError);
  }

  SUBCASE("sampled curve interpolates monotonically") {
    const std::vector<double> b{0.5, 1.0, 1.5, 1.8, 2.0};
    const std::vector<double> h{100.0, 250.0, 1500.0, 10000.0, 40000.0};
    const HBCurve c = HBCurve::sampled(b, h);
    CHECK(c.H(0.0) == 0.0);
    for (std::size_t k = 0; k < b.size(); ++k) CHECK(c.H(b[k]) == doctest::Approx(h[k]).epsilon(1e-12));
    double prev = 0.0;
    for (double x = 0.01; x < 2.0; x += 0.01) {
      CHECK(c.H(x) > prev);
      prev = c.H(x);
      CHECK(std::isfinite(c.nu(x)));
    }
    CHECK(c.nu(0.0) > 0.0);
    CHECK(std::isfinite(c.nu(0.0)));
    CHECK(c.H(2.5) - c.H(2.0) == doctest::Approx(0.5 / kMu0));
    for (double x : {0.3, 0.8, 1.2, 1.7, 1.9}) {
      const double fd = (c.nu(x + 1e-7) - c.nu(x - 1e-7)) / 2e-7;
      CHECK(c.dnu(x) == doctest::Approx(fd).epsilon(1e-5));
    }
  }

  SUBCASE("sampled curve rejects non-monotone data") {
    CHECK_THROWS_AS(HBCurve::sampled({0.5, 0.4}, {100.0, 200.0}), DomainError);
    CHECK_THROWS_AS(HBCurve::sampled({0.5, 1.0}, {100.0, 50.0}), DomainError);
    CHECK_THROWS_AS(HBCurve::sampled({0.5}, {100.0, 50.0}), DomainError);
  }

  SUBCASE("CSV loading") {
    const auto dir = std::filesystem::temp_directory_path();
    const auto good = dir / "halbach_test_hb_good.csv";
    const auto bad = dir / "halbach_test_hb_bad.csv";
    {
      std::ofstream out(good);
      out << "B_T,H_A_per_m\n0.5,100\n1.0,250\n1.5,1500\n";
      std::ofstream out2(bad);
      out2 << "B_T,H_A_per_m\n0.5,100\n1.0,abc\n";
    }
    const HBCurve c = HBCurve::from_csv(good.string());
    CHECK(c.H(1.0) == doctest::Approx(250.0));
    try {
      HBCurve::from_csv(bad.string());
      FAIL("expected a parse error");
    } catch (const DomainError& e) {
      CHECK(std::string(e.what()).find(":3") != std::string::npos);
    }
    CHECK_THROWS_AS(HBCurve::from_csv((dir / "halbach_missing_curve.csv").string()), ConfigError);
    std::filesystem::remove(good);
    std::filesystem::remove(bad);
  }
}

TEST_CASE("linear FE solves") {
  const auto array = HalbachArray::build({});
  const double R = default_truncation_radius(array);
  FemContext ctx(generate_mesh(array, array.inner_radius() / 10, R), linear_materials());
  CHECK(ctx.is_linear());
  const auto p = nominal_2d(array);

  SUBCASE("zero source gives zero potential") {
    const auto sol = ctx.solve(ParameterVector(ParameterLayout(1, 2)));
    CHECK(sol.A.cwiseAbs().maxCoeff() == 0.0);
    const auto spec = bore_spec(0.075, 16);
    CHECK(fem_forward(ParameterVector(ParameterLayout(1, 2)), spec, ctx).norm() == 0.0);
  }

  SUBCASE("solution is linear in the source") {
    const auto a1 = ctx.solve(p).A;
    ParameterVector scaled = p;
    scaled.values *= -2.75;
    const auto a2 = ctx.solve(scaled).A;
    CHECK((a2 + 2.75 * a1).norm() <= 1e-10 * a2.norm());
    const auto d = random_delta(3, 1e4);
    ParameterVector sum = p;
    sum.values += d.values;
    const auto a3 = ctx.solve(sum).A;
    CHECK((a3 - a1 - ctx.solve(d).A).norm() <= 1e-10 * a3.norm());
  }

  SUBCASE("boundary nodes carry zero potential") {
    const auto sol = ctx.solve(p);
    for (std::size_t v = 0; v < ctx.mesh().n_nodes(); ++v) {
      if (ctx.mesh().boundary[v]) CHECK(sol.A(static_cast<Eigen::Index>(v)) == 0.0);
    }
    CHECK(sol.residual < 1e-8);
  }

  SUBCASE("interpolated A = c y gives B = (c, 0)") {
    const double c = 0.37;
    FemSolution s;
    s.A.resize(static_cast<Eigen::Index>(ctx.mesh().n_nodes()));
    for (std::size_t v = 0; v < ctx.mesh().n_nodes(); ++v) s.A(static_cast<Eigen::Index>(v)) = c * ctx.mesh().nodes[v].y();
    for (const Vec2& b : ctx.element_B(s)) CHECK((b - Vec2(c, 0.0)).norm() < 1e-12);
    const auto pts = circle_points(0.15, 40);
    for (bool recover : {false, true}) {
      for (const Vec2& b : ctx.evaluate_B(s, pts, recover)) CHECK((b - Vec2(c, 0.0)).norm() < 1e-12);
    }
    FemSolution zero;
    zero.A = Eigen::VectorXd::Zero(s.A.size());
    for (const Vec2& b : evaluate_B(ctx.mesh(), zero, pts)) CHECK(b.norm() == 0.0);
  }

  SUBCASE("point errors") {
    const auto sol = ctx.solve(p);
    const std::vector<Vec2> outside{Vec2(0.7, 0.0)};
    CHECK_THROWS_AS(ctx.evaluate_B(sol, outside), DomainError);
    const std::vector<FieldPoint> in_magnet{{Vec3(0.15, 0.0, 0.0), Region::air}};
    CHECK_THROWS_AS(ctx.observe(sol, ObservableSpec::point_field(in_magnet, 2)), RegionError);
    ParameterVector p3(ParameterLayout(1, 3));
    CHECK_THROWS_AS(ctx.solve(p3), DomainError);
  }

  SUBCASE("sensitivity of the linear problem is the problem itself") {
    const auto base = ctx.solve(p);
    const auto d = random_delta(11, 2e4);
    const auto sens = ctx.solve_sensitivity(base, d);
    const auto direct = ctx.solve(d);
    CHECK((sens.A - direct.A).norm() <= 1e-10 * direct.A.norm());
    const auto zero = ctx.solve_sensitivity(base, ParameterVector(ParameterLayout(1, 2)));
    CHECK(zero.A.norm() == 0.0);
    const auto one_shot = solve_sensitivity(ctx.mesh(), base, linear_materials(), d);
    CHECK((one_shot.A - direct.A).norm() <= 1e-10 * direct.A.norm());
  }
}

TEST_CASE("linear FE converges to the analytic model") {
  const auto array = HalbachArray::build({});
  const auto p = nominal_2d(array);
  const auto spec = bore_spec(0.075, 60);
  const Eigen::VectorXd exact = assemble_linear_operator(array, spec, p.layout).apply(p);
  std::vector<double> errors;
  for (int div : {5, 10, 20, 40}) {
    FemContext ctx(generate_mesh(array, array.inner_radius() / div, default_truncation_radius(array)),
                   linear_materials());
    const Eigen::VectorXd q = fem_forward(p, spec, ctx);
    errors.push_back((q - exact).norm() / exact.norm());
    if (div == 20) CHECK(errors.back() <= 0.02);
  }
  for (std::size_t k = 1; k < errors.size(); ++k) CHECK(errors[k] < errors[k - 1]);
}

TEST_CASE("nonlinear FE with an iron yoke") {
  const auto array = iron_array();
  const double R = default_truncation_radius(array);
  FemContext ctx(generate_mesh(array, array.inner_radius() / 10, R), Materials{});
  CHECK_FALSE(ctx.is_linear());
  FemContext soft(ctx.mesh(), soft_iron());
  const auto p = nominal_2d(array);
  const auto base = ctx.solve(p);
  const auto soft_base = soft.solve(p);

  SUBCASE("Picard residual converges and decreases monotonically after five iterations") {
    for (const FemSolution* sol : {&base, &soft_base}) {
      CHECK(sol->residual < 1e-8);
      const auto& h = sol->residual_history;
      for (std::size_t k = 6; k < h.size(); ++k) CHECK(h[k] <= h[k - 1]);
    }
    CHECK(soft_base.iterations > 10);
  }

  SUBCASE("iteration cap raises a convergence error with the residual history") {
    FemContext capped(ctx.mesh(), soft_iron(), SolverOptions{1e-8, 2, 0.7});
    try {
      capped.solve(p);
      FAIL("expected a convergence error");
    } catch (const ConvergenceError& e) {
      CHECK(e.residual_history().size() == 3);
    }
  }

  SUBCASE("forward model is deterministic") {
    const auto spec = ObservableSpec::fourier_circle(0.075, 8, 60, {0.0}, 2);
    const Eigen::VectorXd q1 = fem_forward(p, spec, ctx);
    FemContext copy(ctx);
    const Eigen::VectorXd q2 = fem_forward(p, spec, copy);
    const Eigen::VectorXd q3 = fem_forward(p, spec, ctx);
    CHECK(q1 == q2);
    CHECK(q1 == q3);
  }

  SUBCASE("nominal bore field is dipole dominated") {
    const auto spec = ObservableSpec::fourier_circle(0.075, 8, 60, {0.0}, 2);
    const Eigen::VectorXd q = fem_forward(p, spec, ctx);
    const double b1 = q(8);
    CHECK(b1 < 0.0);
    CHECK(std::abs(b1) == doctest::Approx(0.58).epsilon(0.15));
    for (Eigen::Index k = 0; k < 16; ++k) {
      if (k != 8) CHECK(std::abs(q(k)) < 0.05 * std::abs(b1));
    }
  }

  SUBCASE("sensitivity matches central finite differences") {
    const auto d = random_delta(5, 2e4);
    const auto pts = circle_points(0.075, 48);
    // Step sizes keep the O(h²) difference error of each curve below the tolerance.
    for (auto [c, h] : {std::pair{&ctx, 0.5}, std::pair{&soft, 0.02}}) {
      const FemSolution& b0 = c == &ctx ? base : soft_base;
      ParameterVector plus = p;
      ParameterVector minus = p;
      plus.values += h * d.values;
      minus.values -= h * d.values;
      const Eigen::VectorXd b_sens = flatten(c->evaluate_B(c->solve_sensitivity(b0, d), pts));
      const Eigen::VectorXd bp = flatten(c->evaluate_B(c->solve(plus, b0.A), pts));
      const Eigen::VectorXd bm = flatten(c->evaluate_B(c->solve(minus, b0.A), pts));
      const Eigen::VectorXd fd = (bp - bm) / (2 * h);
      CHECK((b_sens - fd).norm() <= 1e-3 * fd.norm());
    }
    // The soft-iron derivative depends on the linearization point.
    ParameterVector scaled = p;
    scaled.values *= 1.2;
    const Eigen::VectorXd s1 = flatten(soft.evaluate_B(soft.solve_sensitivity(soft_base, d), pts));
    const Eigen::VectorXd s2 = flatten(soft.evaluate_B(soft.solve_sensitivity(soft.solve(scaled), d), pts));
    CHECK((s2 - s1).norm() > 1e-2 * s1.norm());
  }

  SUBCASE("block 13 perturbation peaks in the nearest sector") {
    const auto pts = circle_points(0.075, 720);
    for (int c = 0; c < 2; ++c) {
      ParameterVector d(ParameterLayout(1, 2));
      d.at(13, 1, c) = 1e4;
      const auto b = ctx.evaluate_B(ctx.solve_sensitivity(base, d), pts);
      std::size_t best = 0;
      for (std::size_t k = 1; k < b.size(); ++k) {
        if (b[k].norm() > b[best].norm()) best = k;
      }
      const double angle = 360.0 * static_cast<double>(best) / static_cast<double>(b.size());
      CHECK(angle >= 258.75);
      CHECK(angle <= 281.25);
    }
  }

  SUBCASE("unconverged base is rejected") {
    FemSolution bad = base;
    bad.residual = 1.0;
    CHECK_THROWS_AS(ctx.solve_sensitivity(bad, random_delta(1, 1.0)), DomainError);
  }
}
