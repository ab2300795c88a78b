#include "halbach/harness.hpp"

#include "stats_oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace halbach;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("ground truth draws") {
  const auto array = HalbachArray::build({});
  const ParameterLayout layout(1, 2);
  const auto prior = build_synthetic_prior(array, layout, {});

  SUBCASE("zero covariance returns the mean") {
    const GaussianDensity flat(prior.mean(), Eigen::MatrixXd::Zero(32, 32));
    CHECK(draw_ground_truth(flat, 3) == prior.mean());
  }

  SUBCASE("fixed seed reproduces the draw") {
    CHECK(draw_ground_truth(prior, 5) == draw_ground_truth(prior, 5));
    CHECK(draw_ground_truth(prior, 5) != draw_ground_truth(prior, 6));
  }

  SUBCASE("sample covariance of 1e4 draws") {
    const int n = 10000;
    const auto sample_cov = [&](const GaussianDensity& g) {
      const auto d = g.dimension();
      Eigen::MatrixXd x(d, n);
      for (int k = 0; k < n; ++k) x.col(k) = draw_ground_truth(g, static_cast<std::uint64_t>(k));
      const Eigen::VectorXd mean = x.rowwise().mean();
      const Eigen::MatrixXd c = x.colwise() - mean;
      return Eigen::MatrixXd(c * c.transpose() / (n - 1));
    };
    // One block type: three dimensions.
    const auto prior3 = build_synthetic_prior(array, ParameterLayout(1, 3), {});
    const GaussianDensity block(prior3.mean().head(3), prior3.covariance().topLeftCorner(3, 3));
    CHECK((sample_cov(block) - block.covariance()).norm() / block.covariance().norm() < 0.05);
    // The full 32-dimensional prior, against the expected error
    // E‖Ĉ − C‖²_F ≈ (‖C‖²_F + tr(C)²)/n of a Gaussian sample covariance.
    const auto& c = prior.covariance();
    const double expected = std::sqrt((c.squaredNorm() + c.trace() * c.trace()) / n) / c.norm();
    CHECK((sample_cov(prior) - c).norm() / c.norm() < 1.5 * expected);
  }
}

TEST_CASE("synthetic observations") {
  const auto array = HalbachArray::build({});
  const ParameterLayout layout(1, 2);
  const auto prior = build_synthetic_prior(array, layout, {});
  const auto spec = field_observable(array, {}, 2);
  LinearForward forward(assemble_linear_operator(array, spec, layout));
  const auto truth = draw_ground_truth(prior, 1);

  SUBCASE("zero noise returns the model output") {
    const auto obs = make_observation(forward, spec, truth, 0.0, 1);
    CHECK(obs.values == forward.evaluate(truth));
    CHECK(obs.noise_var.isZero(0.0));
  }

  SUBCASE("standardized residuals are standard normal") {
    std::vector<double> r;
    for (std::uint64_t seed = 0; r.size() < 1000; ++seed) {
      const auto obs = make_observation(forward, spec, truth, 1e-4, seed);
      const Eigen::VectorXd z = (obs.values - forward.evaluate(truth)) / 1e-4;
      r.insert(r.end(), z.data(), z.data() + z.size());
    }
    r.resize(1000);
    CHECK(oracle::ks_pvalue(oracle::ks_statistic(r, 0.0, 1.0), r.size()) > 0.01);
  }

  SUBCASE("noise profile raises σ only in the fringe") {
    ArrayConfig cfg;
    const auto arr3 = HalbachArray::build(cfg);
    const std::vector<double> z{-0.7, -0.55, 0.0, 0.3, 0.52, 0.65};
    const auto profile = build_sigma_profile(z, arr3.half_length(), 0.1);
    const auto fspec = fourier_observable(arr3, {}, z, 3);
    const ParameterLayout layout3(arr3.n_rings(), 3);
    LinearForward f3(assemble_linear_operator(arr3, fspec, layout3));
    const Eigen::VectorXd p = nominal_parameter_vector(arr3, layout3).values;
    const auto obs = make_observation(f3, fspec, p, profile.row_sigma(fspec), 2);
    const Eigen::VectorXd rz = fspec.row_z();
    for (Eigen::Index k = 0; k < rz.size(); ++k) {
      const bool fringe = std::abs(rz(k)) > arr3.half_length() - 0.1;
      CHECK(std::sqrt(obs.noise_var(k)) == doctest::Approx(fringe ? 5e-3 : 5e-5));
    }
  }

  CHECK_THROWS_AS(make_observation(forward, spec, truth, -1.0, 1), DomainError);
}

TEST_CASE("sigma profile") {
  SUBCASE("centre positions are homogeneous") {
    const auto p = build_sigma_profile({0.0, 0.0, 0.0}, 0.6, 0.1);
    for (int k = 0; k < 3; ++k) {
      CHECK(p.fringe[static_cast<std::size_t>(k)] == 0);
      CHECK(p.sigma(k) == 5e-5);
    }
  }

  SUBCASE("beyond the magnet end is fringe") {
    const auto p = build_sigma_profile({0.7, -0.8}, 0.6, 0.0);
    CHECK(p.fringe[0] == 1);
    CHECK(p.fringe[1] == 1);
    CHECK(p.sigma(0) == 5e-3);
  }

  SUBCASE("mixed positions follow the rule") {
    const std::vector<double> z{-0.65, -0.5, -0.49, 0.0, 0.49, 0.5, 0.51};
    const auto p = build_sigma_profile(z, 0.6, 0.1, 1e-5, 2e-3);
    for (std::size_t k = 0; k < z.size(); ++k) {
      const bool fringe = std::abs(z[k]) > 0.5;
      CHECK(p.fringe[k] == (fringe ? 1 : 0));
      CHECK(p.sigma(static_cast<Eigen::Index>(k)) == (fringe ? 2e-3 : 1e-5));
    }
  }

  CHECK_THROWS_AS(build_sigma_profile({0.0}, 0.6, -0.1), DomainError);
}

TEST_CASE("reduction metric") {
  const ParameterLayout layout(1, 3, 1);
  const Eigen::Vector3d truth(1.0, 2.0, 3.0);
  const Eigen::Vector3d prior(5.0, 2.0, 3.0);
  CHECK(reduction_metric(prior, truth, truth, layout).overall == 100.0);
  CHECK(reduction_metric(prior, prior, truth, layout).overall == 0.0);
  CHECK(reduction_metric(prior, Eigen::Vector3d(1.0, 4.0, 2.0), truth, layout).overall == doctest::Approx(50.0));
  CHECK_THROWS_AS(reduction_metric(truth, prior, truth, layout), DomainError);

  SUBCASE("per-ring values restrict the indices") {
    const ParameterLayout two(2, 2, 1);
    const Eigen::Vector4d t(0.0, 0.0, 0.0, 0.0);
    const Eigen::Vector4d p0(1.0, 4.0, 2.0, 2.0);
    const Eigen::Vector4d p1(0.5, 1.0, 2.0, 0.0);
    const auto r = reduction_metric(p0, p1, t, two);
    const auto i0 = two.ring_indices(1);
    double d0 = 0.0;
    double d1 = 0.0;
    for (auto k : i0) {
      d0 = std::max(d0, std::abs(p0(k)));
      d1 = std::max(d1, std::abs(p1(k)));
    }
    CHECK(r.per_ring[0] == doctest::Approx(100.0 * (1.0 - d1 / d0)));
    CHECK(r.overall == doctest::Approx(50.0));
  }
}

TEST_CASE("relative error profile") {
  const Eigen::VectorXd meas(Eigen::Vector4d(0.5, -0.4, 0.3, 0.2));
  CHECK(relative_error_profile(meas, meas).e_rel.isZero(0.0));
  const auto e = relative_error_profile(meas, 1.1 * meas);
  for (int k = 0; k < 4; ++k) CHECK(e.e_rel(k) == doctest::Approx(0.1));

  SUBCASE("points below the floor are masked") {
    Eigen::VectorXd b(5);
    b << 0.2, 0.1, 0.0, -0.1, -0.2;
    const auto m = relative_error_profile(b, b * 1.05);
    CHECK(m.masked == std::vector<char>{0, 0, 1, 0, 0});
    CHECK(std::isnan(m.e_rel(2)));
    CHECK(m.e_rel(3) == doctest::Approx(0.05));
  }

  CHECK_THROWS_AS(relative_error_profile(Eigen::Vector2d(1e-8, 0.0), Eigen::Vector2d(1.0, 1.0)), DomainError);
}

TEST_CASE("linear validation") {
  const ValidationConfig cfg;

  SUBCASE("exact data recovers an observable truth") {
    // A uniform azimuthal magnetization of a ring has no field, so only the
    // part of the deviation seen by the observable can be recovered.
    const auto array = HalbachArray::build(cfg.array);
    const ParameterLayout layout(array.n_rings(), 3);
    const auto prior = build_synthetic_prior(array, layout, cfg.prior);
    const auto spec = field_observable(array, cfg.field, 3);
    const auto op = assemble_linear_operator(array, spec, layout);
    const Eigen::VectorXd deviation = draw_ground_truth(prior, 3) - prior.mean();
    const Eigen::MatrixXd& l0 = prior.cholesky();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(op.matrix() * l0, Eigen::ComputeThinV);
    svd.setThreshold(1e-8);
    CHECK(svd.rank() == layout.dimension() - array.n_rings());
    const Eigen::MatrixXd v = svd.matrixV().leftCols(svd.rank());
    const Eigen::VectorXd xi = l0.triangularView<Eigen::Lower>().solve(deviation);
    const Eigen::VectorXd truth = prior.mean() + l0 * (v * (v.transpose() * xi));
    LinearForward forward(op);
    const auto obs = make_observation(forward, spec, truth, 1e-7, 3);
    const auto post = conjugate_update(op, obs.noise_var, obs.values, prior);
    CHECK(reduction_metric(prior.mean(), post.mean(), truth, layout).overall > 99.0);
  }

  SUBCASE("posterior beats the prior and contracts") {
    int better_field = 0;
    int better_fourier = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto r = run_linear_validation(cfg, seed);
      CHECK(r.field.variance_contracted);
      CHECK(r.fourier.variance_contracted);
      CHECK(r.field.layout.dimension() == 576);
      if (r.field.reduction > 0.0) ++better_field;
      if (r.fourier.reduction > 0.0) ++better_fourier;
    }
    // One-sided sign test at the 5% level needs at least 9 of 10.
    CHECK(better_field >= 9);
    CHECK(better_fourier >= 9);
  }

  SUBCASE("reports are a function of config and seed") {
    const auto a = run_linear_validation(cfg, 11);
    const auto b = run_linear_validation(cfg, 11);
    CHECK(a.field.posterior_mean == b.field.posterior_mean);
    CHECK(a.fourier.posterior_var == b.fourier.posterior_var);
    CHECK(report_to_json(a.field).dump() == report_to_json(b.field).dump());
  }
}

TEST_CASE("pCN validation") {
  const ValidationConfig cfg;
  const auto a = run_pcn_validation(cfg, 2);
  CHECK(a.report.acceptance_rate > 0.05);
  CHECK(a.report.acceptance_rate < 0.95);
  CHECK(a.chain.n_states() == cfg.pcn.n_steps + 1);
  CHECK(a.summary.burn_in == (cfg.pcn.n_steps + 1) / 10);
  const auto b = run_pcn_validation(cfg, 2);
  CHECK(a.chain.states == b.chain.states);
  CHECK(report_to_json(a.report).dump() == report_to_json(b.report).dump());
}

TEST_CASE("application-style run") {
  const ValidationConfig cfg;
  const auto r = run_application(cfg, 0);
  CHECK(r.profile.z.size() == 40);
  const auto array = HalbachArray::build(cfg.array);
  for (Eigen::Index k = 0; k < r.profile.z.size(); ++k) {
    CHECK(r.profile.fringe[static_cast<std::size_t>(k)] ==
          (std::abs(r.profile.z(k)) > array.half_length() - cfg.application.margin ? 1 : 0));
  }
  CHECK(r.improved_fraction >= 0.0);
  CHECK(r.improved_fraction <= 1.0);
  CHECK(application_to_json(r).dump() == application_to_json(run_application(cfg, 0)).dump());
}

TEST_CASE("report files") {
  const ValidationConfig cfg;
  const auto r = run_pcn_validation(cfg, 1).report;
  const auto dir = std::filesystem::temp_directory_path() / "halbach_harness_test";
  std::filesystem::create_directories(dir);
  write_report_csv((dir / "r.csv").string(), r);
  const auto text = slurp(dir / "r.csv");
  CHECK(text.rfind("label,truth,prior_mean,prior_var,posterior_mean,posterior_var\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 33);
  const auto j = report_to_json(r);
  CHECK(j["method"] == "pcn");
  CHECK(j["reduction_percent"].get<double>() == r.reduction);

  const auto app = run_application(cfg, 1);
  write_application_csv((dir / "a.csv").string(), app);
  const auto atext = slurp(dir / "a.csv");
  CHECK(std::count(atext.begin(), atext.end(), '\n') == 41);
  write_report_csv((dir / "nested" / "deeper" / "r.csv").string(), r);
  CHECK(slurp(dir / "nested" / "deeper" / "r.csv") == text);
  // The parent is a regular file, so the directory cannot be created.
  CHECK_THROWS_AS(write_report_csv((dir / "a.csv" / "r.csv").string(), r), DomainError);
}
